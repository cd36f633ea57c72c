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
#include "debias/core/types.hpp"
#include "debias/nn/bundle.hpp"
#include "debias/stats/dependence.hpp"
#include "debias/synth/cohort.hpp"
#include "debias/synth/variables.hpp"

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace debias::train {

/// One dependence measurement. `dc` is empty when the subgroup has fewer
/// than two tiles.
struct AuditRow {
    std::string model;
    std::string subgroup;  // "all" or "<variable>=<value>"
    std::string variable;  // "task" or a bias name
    std::optional<double> dc;
    std::size_t n = 0;
};

struct AuditReport {
    std::vector<AuditRow> rows;

    [[nodiscard]] const AuditRow* find(const std::string& model, const std::string& subgroup,
                                       const std::string& variable) const {
        for (const auto& r : rows) {
            if (r.model == model && r.subgroup == subgroup && r.variable == variable) return &r;
        }
        return nullptr;
    }

    /// dc of a row that must exist and be computable.
    [[nodiscard]] double value(const std::string& model, const std::string& subgroup, const std::string& variable) const {
        const auto* r = find(model, subgroup, variable);
        if (r == nullptr || !r->dc) {
            fail(ErrorKind::contract, "audit has no value for " + model + "/" + subgroup + "/" + variable);
        }
        return *r->dc;
    }

    [[nodiscard]] std::string csv() const {
        std::string out = "model,subgroup,variable,dc,n\n";
        for (const auto& r : rows) {
            std::string dc;
            if (r.dc) {
                char buf[32];
                std::snprintf(buf, sizeof buf, "%.9g", *r.dc);
                dc = buf;
            } else {
                dc = "NA";
            }
            out += r.model + "," + r.subgroup + "," + r.variable + "," + dc + "," + std::to_string(r.n) + "\n";
        }
        return out;
    }
};

struct AuditOptions {
    std::size_t max_samples = 8192;
    std::uint64_t seed = 0;
    /// Variables with more categories are not used to form subgroups.
    std::size_t max_subgroup_categories = 32;
    bool subgroups = true;
};

namespace detail {

inline void audit_group(AuditReport& out, const std::string& model, const std::string& subgroup, const Matrix& f,
                        const std::vector<std::size_t>& rows, const std::vector<std::string>& variables,
                        const std::vector<const std::vector<int>*>& codes) {
    if (rows.size() < 2) {
        for (const auto& v : variables) out.rows.push_back({model, subgroup, v, std::nullopt, rows.size()});
        return;
    }
    const Matrix fs = select_rows(f, rows);
    std::vector<std::vector<int>> targets;
    for (const auto* c : codes) {
        std::vector<int> t;
        t.reserve(rows.size());
        for (auto r : rows) t.push_back((*c)[r]);
        targets.push_back(std::move(t));
    }
    const auto dc = stats::distance_correlation_sq(fs, targets);
    for (std::size_t i = 0; i < variables.size(); ++i) {
        out.rows.push_back({model, subgroup, variables[i], dc[i].value, dc[i].n});
    }
}

} // namespace detail

/// Dependence between features `f` (one row per tile of `tiles`) and the
/// task and each candidate bias: overall, then within each category of the
/// label and of every other candidate with few enough categories. The
/// label subgroups give the class-conditioned rows.
inline AuditReport audit_features(const Matrix& features, const std::vector<synth::TileRecord>& tiles,
                                  const std::vector<std::string>& candidates, const std::string& model,
                                  const AuditOptions& opt = {}) {
    if (static_cast<std::size_t>(features.rows()) != tiles.size()) {
        fail(ErrorKind::dimension, "audit: feature rows do not match tile count");
    }
    const auto keep = stats::subsample_indices(tiles.size(), opt.max_samples, opt.seed);
    const Matrix f = select_rows(features, keep);
    std::vector<synth::TileRecord> sub;
    sub.reserve(keep.size());
    for (auto i : keep) sub.push_back(tiles[i]);

    std::vector<std::string> names{"label"};
    names.insert(names.end(), candidates.begin(), candidates.end());
    std::vector<synth::CategoryCodes> codes;
    for (const auto& v : names) codes.push_back(synth::category_codes(sub, v));
    auto reported = [](const std::string& v) { return v == "label" ? std::string("task") : v; };

    AuditReport out;
    std::vector<std::size_t> all(sub.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    {
        std::vector<std::string> vars;
        std::vector<const std::vector<int>*> cs;
        for (std::size_t v = 0; v < names.size(); ++v) {
            vars.push_back(reported(names[v]));
            cs.push_back(&codes[v].codes);
        }
        detail::audit_group(out, model, "all", f, all, vars, cs);
    }
    if (!opt.subgroups) return out;
    for (std::size_t g = 0; g < names.size(); ++g) {
        if (codes[g].categories.size() > opt.max_subgroup_categories) continue;
        std::vector<std::string> vars;
        std::vector<const std::vector<int>*> cs;
        for (std::size_t v = 0; v < names.size(); ++v) {
            if (v == g) continue;
            vars.push_back(reported(names[v]));
            cs.push_back(&codes[v].codes);
        }
        for (std::size_t k = 0; k < codes[g].categories.size(); ++k) {
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < sub.size(); ++i) {
                if (codes[g].codes[i] == static_cast<int>(k)) rows.push_back(i);
            }
            detail::audit_group(out, model, names[g] + "=" + codes[g].categories[k], f, rows, vars, cs);
        }
    }
    return out;
}

/// Audit of a trained extractor on the given cohort tiles.
inline AuditReport audit_biases(const nn::ModelBundle& bundle, const Matrix& x, const std::vector<synth::TileRecord>& tiles,
                                const std::vector<std::string>& candidates, const std::string& model,
                                const AuditOptions& opt = {}) {
    if (static_cast<std::size_t>(x.rows()) != tiles.size()) {
        fail(ErrorKind::dimension, "audit: input rows do not match tile count");
    }
    // Subsample before the forward pass; audit_features then keeps all rows.
    const auto keep = stats::subsample_indices(tiles.size(), opt.max_samples, opt.seed);
    std::vector<synth::TileRecord> sub;
    sub.reserve(keep.size());
    for (auto i : keep) sub.push_back(tiles[i]);
    const Matrix f = nn::forward(bundle.fe, select_rows(x, keep));
    AuditOptions inner = opt;
    inner.max_samples = keep.size();
    return audit_features(f, sub, candidates, model, inner);
}

} // namespace debias::train
