/*
 * Copyright 2026 The tma-debias Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include "debias/core/error.hpp"
#include "debias/core/labels.hpp"
#include "debias/metrics/clinical.hpp"
#include "debias/synth/manifest.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace debias::metrics {

using nlohmann::json;

/// A point estimate with an optional interval; `value` is empty when the
/// metric is undefined for the data.
struct Estimate {
    std::optional<double> value;
    std::optional<Interval> ci;
};

struct LevelMetrics {
    std::size_t n = 0;
    Confusion counts;
    Estimate auc;
    Estimate sensitivity;
    Estimate specificity;
    Estimate balanced_accuracy;
    Estimate accuracy;  // prevalence-adjusted
    Estimate ppv;
    Estimate npv;
};

struct MetricsReport {
    double prevalence = 0.15;
    double confidence = 0.95;
    double threshold = 0.5;
    LevelMetrics tile;
    LevelMetrics patient;
    std::vector<StratumRates> by_tissue;
    std::vector<StratumRates> by_magnification;
};

namespace detail {

inline void check_prevalence(double p) {
    if (!(p > 0.0 && p < 1.0)) fail(ErrorKind::domain, "prevalence must lie in (0, 1)");
}

/// S and E carry Clopper-Pearson intervals. Balanced and adjusted accuracy
/// combine the endpoints of those intervals linearly, and PPV/NPV use logit
/// intervals when S and E are interior.
inline LevelMetrics level_metrics(std::span<const double> scores, std::span<const int> positive, double threshold,
                                  double prevalence, double confidence) {
    LevelMetrics m;
    m.n = scores.size();
    m.counts = confusion_counts(scores, positive, threshold);
    const auto& c = m.counts;
    if (c.positives() > 0 && c.negatives() > 0) {
        const double a = roc_auc(scores, positive);
        m.auc = {a, auc_interval(a, c.positives(), c.negatives(), confidence)};
    }
    if (c.sensitivity) m.sensitivity = {c.sensitivity, clopper_pearson(c.tp, c.positives(), confidence)};
    if (c.specificity) m.specificity = {c.specificity, clopper_pearson(c.tn, c.negatives(), confidence)};
    if (!(c.sensitivity && c.specificity)) return m;

    const double s = *c.sensitivity;
    const double e = *c.specificity;
    const auto& si = *m.sensitivity.ci;
    const auto& ei = *m.specificity.ci;
    m.balanced_accuracy = {c.balanced_accuracy, Interval{(si.lower + ei.lower) / 2.0, (si.upper + ei.upper) / 2.0}};
    const auto adj = prevalence_adjusted(s, e, prevalence);
    m.accuracy = {adj.accuracy, Interval{si.lower * prevalence + ei.lower * (1.0 - prevalence),
                                         si.upper * prevalence + ei.upper * (1.0 - prevalence)}};
    m.ppv.value = adj.ppv;
    m.npv.value = adj.npv;
    if (s > 0.0 && s < 1.0 && e > 0.0 && e < 1.0) {
        const auto pi = logit_ci_predictive(s, e, prevalence, c.positives(), c.negatives(), confidence);
        m.ppv.ci = pi.ppv;
        m.npv.ci = pi.npv;
    }
    return m;
}

} // namespace detail

/// Tile metrics, patient metrics on majority-vote fractions, and the
/// per-tissue and per-magnification error tables.
inline MetricsReport evaluate(std::span<const TilePrediction> preds, double prevalence = 0.15,
                              double confidence = 0.95, double threshold = 0.5) {
    if (preds.empty()) {
        fail(ErrorKind::empty_input, "evaluate: no predictions");
    }
    detail::check_prevalence(prevalence);
    MetricsReport r;
    r.prevalence = prevalence;
    r.confidence = confidence;
    r.threshold = threshold;
    std::vector<double> s;
    std::vector<int> y;
    for (const auto& p : preds) {
        check_score(p.score);
        s.push_back(p.score);
        y.push_back(p.label == ClassLabel::msi_h ? 1 : 0);
    }
    r.tile = detail::level_metrics(s, y, threshold, prevalence, confidence);

    const auto patients = aggregate_patient(preds, threshold);
    s.clear();
    y.clear();
    for (const auto& p : patients) {
        s.push_back(p.vote_fraction);
        y.push_back(p.label == ClassLabel::msi_h ? 1 : 0);
    }
    // A vote fraction of exactly one half is an MSI-H call.
    r.patient = detail::level_metrics(s, y, 0.5, prevalence, confidence);
    r.by_tissue = stratified_error_rates(preds, Stratum::tissue, threshold);
    r.by_magnification = stratified_error_rates(preds, Stratum::magnification, threshold);
    return r;
}

inline json to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json to_json(const Estimate& e) {
    json j{{"value", to_json(e.value)}};
    j["ci"] = e.ci ? json::array({e.ci->lower, e.ci->upper}) : json(nullptr);
    return j;
}

inline json to_json(const LevelMetrics& m) {
    return json{
        {"n", m.n},
        {"counts", {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"tn", m.counts.tn}, {"fn", m.counts.fn}}},
        {"auc", to_json(m.auc)},
        {"sensitivity", to_json(m.sensitivity)},
        {"specificity", to_json(m.specificity)},
        {"balanced_accuracy", to_json(m.balanced_accuracy)},
        {"accuracy", to_json(m.accuracy)},
        {"ppv", to_json(m.ppv)},
        {"npv", to_json(m.npv)},
    };
}

inline json to_json(const std::vector<StratumRates>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        out.push_back({{"stratum", r.stratum},
                       {"n", r.counts.positives() + r.counts.negatives()},
                       {"fpr", to_json(r.fpr)},
                       {"fnr", to_json(r.fnr)}});
    }
    return out;
}

inline json to_json(const MetricsReport& r) {
    return json{
        {"prevalence", r.prevalence},
        {"confidence", r.confidence},
        {"threshold", r.threshold},
        {"tile", to_json(r.tile)},
        {"patient", to_json(r.patient)},
        {"by_tissue", to_json(r.by_tissue)},
        {"by_magnification", to_json(r.by_magnification)},
    };
}

namespace detail {

inline std::string format_rate(const std::optional<double>& v) {
    if (!v) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", *v);
    return buf;
}

} // namespace detail

/// Both stratification tables in one CSV.
inline std::string strata_csv(const MetricsReport& r) {
    std::string out = "by,stratum,n,tp,fp,tn,fn,fpr,fnr\n";
    auto rows = [&](const char* by, const std::vector<StratumRates>& v) {
        for (const auto& s : v) {
            const auto& c = s.counts;
            out += std::string(by) + "," + s.stratum + "," + std::to_string(c.positives() + c.negatives()) + "," +
                   std::to_string(c.tp) + "," + std::to_string(c.fp) + "," + std::to_string(c.tn) + "," +
                   std::to_string(c.fn) + "," + detail::format_rate(s.fpr) + "," + detail::format_rate(s.fnr) + "\n";
        }
    };
    rows("tissue", r.by_tissue);
    rows("magnification", r.by_magnification);
    return out;
}

inline constexpr std::string_view predictions_header = "tile_id,patient_id,tissue,magnification,score,label";
inline constexpr std::array<std::string_view, 6> predictions_columns{"tile_id", "patient_id", "tissue",
                                                                     "magnification", "score", "label"};

inline std::string predictions_csv(std::span<const TilePrediction> preds) {
    std::string out(predictions_header);
    out += "\n";
    for (const auto& p : preds) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", p.score);
        out += p.tile_id + "," + p.patient_id + "," + std::string(to_string(p.tissue)) + "," +
               std::string(to_string(p.magnification)) + "," + buf + "," + std::string(to_string(p.label)) + "\n";
    }
    return out;
}

inline std::vector<TilePrediction> parse_predictions(std::string_view text, const std::string& source = "predictions.csv") {
    std::vector<TilePrediction> out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    bool header_seen = false;
    auto error = [&](std::size_t col, const std::string& why) {
        fail(ErrorKind::parse, source + ": line " + std::to_string(line_no) + ", column " + std::to_string(col) + " (" +
                                   std::string(predictions_columns[col - 1]) + "): " + why);
    };
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!header_seen) {
            if (line != predictions_header) {
                fail(ErrorKind::parse, source + ": line 1, column 1: expected header '" +
                                           std::string(predictions_header) + "'");
            }
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        const auto f = synth::split_csv_line(line);
        if (f.size() != predictions_columns.size()) {
            fail(ErrorKind::parse, source + ": line " + std::to_string(line_no) + ": expected " +
                                       std::to_string(predictions_columns.size()) + " fields, found " +
                                       std::to_string(f.size()));
        }
        TilePrediction p;
        p.tile_id = f[0];
        p.patient_id = f[1];
        if (p.patient_id.empty()) error(2, "empty field");
        const auto t = try_parse_tissue(f[2]);
        if (!t) error(3, "unknown tissue '" + f[2] + "'");
        p.tissue = *t;
        const auto m = try_parse_magnification(f[3]);
        if (!m) error(4, "unknown magnification '" + f[3] + "'");
        p.magnification = *m;
        try {
            std::size_t used = 0;
            p.score = std::stod(f[4], &used);
            if (used != f[4].size()) error(5, "not a number '" + f[4] + "'");
        } catch (const std::logic_error&) {
            error(5, "not a number '" + f[4] + "'");
        }
        if (!std::isfinite(p.score) || p.score < 0.0 || p.score > 1.0) error(5, "score outside [0, 1]");
        const auto l = try_parse_label(f[5]);
        if (!l) error(6, "unknown label '" + f[5] + "'");
        p.label = *l;
        out.push_back(std::move(p));
    }
    if (!header_seen) {
        fail(ErrorKind::parse, source + ": line 1, column 1: missing header");
    }
    return out;
}

} // namespace debias::metrics
