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

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace debias::metrics {

struct TilePrediction {
    std::string tile_id;
    std::string patient_id;
    Tissue tissue = Tissue::tum;
    Magnification magnification = Magnification::x40;
    double score = 0.0;  // MSI-H probability
    ClassLabel label = ClassLabel::mss;
};

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

inline void check_score(double s) {
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
        fail(ErrorKind::domain, "prediction score must be finite and in [0, 1]");
    }
}

/// Mann-Whitney AUC from average ranks; tied pairs count one half.
inline double roc_auc(std::span<const double> scores, std::span<const int> positive) {
    if (scores.size() != positive.size()) {
        fail(ErrorKind::dimension, "roc_auc: scores and labels differ in length");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (positive[order[k]] != 0) {
                rank_sum += rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        fail(ErrorKind::undefined_metric, "roc_auc: both classes must be present");
    }
    const double p = static_cast<double>(n_pos);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

inline double roc_auc(std::span<const TilePrediction> preds) {
    std::vector<double> s;
    std::vector<int> y;
    s.reserve(preds.size());
    y.reserve(preds.size());
    for (const auto& p : preds) {
        check_score(p.score);
        s.push_back(p.score);
        y.push_back(p.label == ClassLabel::msi_h ? 1 : 0);
    }
    return roc_auc(s, y);
}

/// Hanley-McNeil normal interval for an AUC, clamped to [0, 1].
inline Interval auc_interval(double auc, std::size_t n_pos, std::size_t n_neg, double confidence = 0.95) {
    if (n_pos == 0 || n_neg == 0) {
        fail(ErrorKind::undefined_metric, "auc interval: both classes must be present");
    }
    const double q1 = auc / (2.0 - auc);
    const double q2 = 2.0 * auc * auc / (1.0 + auc);
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    const double var =
        (auc * (1.0 - auc) + (np - 1.0) * (q1 - auc * auc) + (nn - 1.0) * (q2 - auc * auc)) / (np * nn);
    const double z = boost::math::quantile(boost::math::normal(), 0.5 + confidence / 2.0);
    const double sd = std::sqrt(std::max(var, 0.0));
    return {std::clamp(auc - z * sd, 0.0, 1.0), std::clamp(auc + z * sd, 0.0, 1.0)};
}

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
    std::optional<double> balanced_accuracy;

    [[nodiscard]] std::size_t positives() const { return tp + fn; }
    [[nodiscard]] std::size_t negatives() const { return tn + fp; }
    [[nodiscard]] std::optional<double> fpr() const {
        if (negatives() == 0) return std::nullopt;
        return static_cast<double>(fp) / static_cast<double>(negatives());
    }
    [[nodiscard]] std::optional<double> fnr() const {
        if (positives() == 0) return std::nullopt;
        return static_cast<double>(fn) / static_cast<double>(positives());
    }
};

/// Counts with score >= threshold predicted MSI-H. A rate whose
/// denominator is empty is left unset.
inline Confusion confusion_counts(std::span<const double> scores, std::span<const int> positive, double threshold = 0.5) {
    if (scores.size() != positive.size()) {
        fail(ErrorKind::dimension, "confusion: scores and labels differ in length");
    }
    Confusion c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (positive[i] != 0) {
            pred ? ++c.tp : ++c.fn;
        } else {
            pred ? ++c.fp : ++c.tn;
        }
    }
    if (c.positives() > 0) c.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.positives());
    if (c.negatives() > 0) c.specificity = static_cast<double>(c.tn) / static_cast<double>(c.negatives());
    if (c.sensitivity && c.specificity) c.balanced_accuracy = (*c.sensitivity + *c.specificity) / 2.0;
    return c;
}

inline Confusion confusion(std::span<const TilePrediction> preds, double threshold = 0.5) {
    std::vector<double> s;
    std::vector<int> y;
    for (const auto& p : preds) {
        check_score(p.score);
        s.push_back(p.score);
        y.push_back(p.label == ClassLabel::msi_h ? 1 : 0);
    }
    return confusion_counts(s, y, threshold);
}

struct PrevalenceAdjusted {
    double accuracy = 0.0;
    std::optional<double> ppv;
    std::optional<double> npv;
};

/// Accuracy and predictive values at an assumed prevalence `p`.
inline PrevalenceAdjusted prevalence_adjusted(double s, double e, double p) {
    for (double v : {s, e, p}) {
        if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::domain, "prevalence_adjusted: inputs must lie in [0, 1]");
    }
    PrevalenceAdjusted r;
    r.accuracy = s * p + e * (1.0 - p);
    const double ppv_den = s * p + (1.0 - e) * (1.0 - p);
    if (ppv_den > 0.0) r.ppv = s * p / ppv_den;
    const double npv_den = e * (1.0 - p) + (1.0 - s) * p;
    if (npv_den > 0.0) r.npv = e * (1.0 - p) / npv_den;
    return r;
}

/// Exact binomial interval from Beta quantiles.
inline Interval clopper_pearson(std::size_t k, std::size_t n, double confidence = 0.95) {
    if (n == 0 || k > n) {
        fail(ErrorKind::domain, "clopper_pearson: need 0 <= k <= n and n >= 1");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        fail(ErrorKind::domain, "clopper_pearson: confidence must lie in (0, 1)");
    }
    const double alpha = 1.0 - confidence;
    const double kd = static_cast<double>(k);
    const double nd = static_cast<double>(n);
    Interval ci;
    ci.lower = k == 0 ? 0.0 : boost::math::ibeta_inv(kd, nd - kd + 1.0, alpha / 2.0);
    ci.upper = k == n ? 1.0 : boost::math::ibeta_inv(kd + 1.0, nd - kd, 1.0 - alpha / 2.0);
    return ci;
}

struct PredictiveIntervals {
    Interval ppv;
    Interval npv;
};

/// Logit intervals for prevalence-adjusted PPV and NPV, with S estimated
/// on `n_pos` positives and E on `n_neg` negatives.
inline PredictiveIntervals logit_ci_predictive(double s, double e, double p, std::size_t n_pos, std::size_t n_neg,
                                               double confidence = 0.95) {
    if (!(s > 0.0 && s < 1.0 && e > 0.0 && e < 1.0)) {
        fail(ErrorKind::degenerate_cohort, "logit_ci_predictive: sensitivity and specificity must lie in (0, 1)");
    }
    if (!(p > 0.0 && p < 1.0)) {
        fail(ErrorKind::domain, "logit_ci_predictive: prevalence must lie in (0, 1)");
    }
    if (n_pos == 0 || n_neg == 0) {
        fail(ErrorKind::domain, "logit_ci_predictive: need at least one positive and one negative");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        fail(ErrorKind::domain, "logit_ci_predictive: confidence must lie in (0, 1)");
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    const double z = boost::math::quantile(boost::math::normal(), 0.5 + confidence / 2.0);
    auto expit = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };

    const double lp = std::log(p / (1.0 - p)) + std::log(s / (1.0 - e));
    const double vp = (1.0 - s) / (s * np) + e / ((1.0 - e) * nn);
    const double ln = std::log((1.0 - p) / p) + std::log(e / (1.0 - s));
    const double vn = s / ((1.0 - s) * np) + (1.0 - e) / (e * nn);
    PredictiveIntervals r;
    r.ppv = {expit(lp - z * std::sqrt(vp)), expit(lp + z * std::sqrt(vp))};
    r.npv = {expit(ln - z * std::sqrt(vn)), expit(ln + z * std::sqrt(vn))};
    return r;
}

struct PatientPrediction {
    std::string patient_id;
    ClassLabel label = ClassLabel::mss;
    ClassLabel predicted = ClassLabel::mss;
    double vote_fraction = 0.0;  // share of tiles voting MSI-H
    std::size_t n_tiles = 0;
};

/// Majority vote per patient, sorted by patient id. Ties go to MSI-H.
inline std::vector<PatientPrediction> aggregate_patient(std::span<const TilePrediction> preds, double threshold = 0.5) {
    std::map<std::string, PatientPrediction> by_patient;
    std::map<std::string, std::size_t> votes;
    for (const auto& t : preds) {
        check_score(t.score);
        if (t.patient_id.empty()) {
            fail(ErrorKind::metadata, "tile " + t.tile_id + " has no patient_id");
        }
        auto [it, fresh] = by_patient.try_emplace(t.patient_id);
        auto& p = it->second;
        if (fresh) {
            p.patient_id = t.patient_id;
            p.label = t.label;
        } else if (p.label != t.label) {
            fail(ErrorKind::metadata, "patient " + t.patient_id + " has tiles with different labels");
        }
        ++p.n_tiles;
        if (t.score >= threshold) ++votes[t.patient_id];
    }
    std::vector<PatientPrediction> out;
    out.reserve(by_patient.size());
    for (auto& [id, p] : by_patient) {
        const std::size_t v = votes[id];
        p.vote_fraction = static_cast<double>(v) / static_cast<double>(p.n_tiles);
        p.predicted = 2 * v >= p.n_tiles ? ClassLabel::msi_h : ClassLabel::mss;
        out.push_back(std::move(p));
    }
    return out;
}

enum class Stratum { tissue, magnification };

struct StratumRates {
    std::string stratum;
    Confusion counts;
    std::optional<double> fpr;
    std::optional<double> fnr;
};

/// FPR and FNR within each tissue type or magnification, in enum order.
inline std::vector<StratumRates> stratified_error_rates(std::span<const TilePrediction> preds, Stratum by,
                                                        double threshold = 0.5) {
    if (preds.empty()) {
        fail(ErrorKind::empty_input, "stratified_error_rates: no predictions");
    }
    std::map<int, std::vector<TilePrediction>> groups;
    for (const auto& p : preds) {
        const int key = by == Stratum::tissue ? static_cast<int>(p.tissue) : static_cast<int>(p.magnification);
        groups[key].push_back(p);
    }
    std::vector<StratumRates> out;
    for (const auto& [key, g] : groups) {
        StratumRates r;
        r.stratum = by == Stratum::tissue ? std::string(to_string(static_cast<Tissue>(key)))
                                          : std::string(to_string(static_cast<Magnification>(key)));
        r.counts = confusion(g, threshold);
        r.fpr = r.counts.fpr();
        r.fnr = r.counts.fnr();
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace debias::metrics
