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

#include "debias/core/config_reader.hpp"
#include "debias/core/error.hpp"
#include "debias/core/random.hpp"
#include "debias/synth/cohort.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace debias::train {

struct Fold {
    std::vector<std::string> train_patients;
    std::vector<std::string> validation_patients;

    friend bool operator==(const Fold&, const Fold&) = default;
};

struct FoldPlan {
    std::vector<Fold> folds;

    friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

/// Patient-grouped folds stratified by class. Each class is shuffled on
/// its own stream and dealt round-robin; the deal continues across classes
/// so fold sizes differ by at most one patient.
inline FoldPlan split_folds(const std::vector<synth::TileRecord>& tiles, std::size_t folds, std::uint64_t seed) {
    if (folds < 2) {
        fail(ErrorKind::config, "folds: must be at least 2");
    }
    std::array<std::vector<std::string>, 2> by_class;
    std::map<std::string, ClassLabel> seen;
    for (const auto& t : tiles) {
        if (seen.emplace(t.patient_id, t.label).second) {
            by_class[static_cast<std::size_t>(t.label)].push_back(t.patient_id);
        }
    }
    for (std::size_t c = 0; c < 2; ++c) {
        if (by_class[c].size() < folds) {
            fail(ErrorKind::stratification, "class " + std::string(to_string(static_cast<ClassLabel>(c))) + " has " +
                                                std::to_string(by_class[c].size()) + " patients, fewer than " +
                                                std::to_string(folds) + " folds");
        }
    }
    std::vector<std::vector<std::string>> validation(folds);
    std::size_t next = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        auto& ids = by_class[c];
        std::sort(ids.begin(), ids.end());
        Rng rng = make_rng(seed, "folds", c);
        for (std::size_t i = ids.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
            std::swap(ids[i - 1], ids[std::min(j, i - 1)]);
        }
        for (const auto& id : ids) {
            validation[next % folds].push_back(id);
            ++next;
        }
    }
    FoldPlan plan;
    for (std::size_t f = 0; f < folds; ++f) {
        Fold fold;
        fold.validation_patients = validation[f];
        std::sort(fold.validation_patients.begin(), fold.validation_patients.end());
        for (std::size_t g = 0; g < folds; ++g) {
            if (g != f) {
                fold.train_patients.insert(fold.train_patients.end(), validation[g].begin(), validation[g].end());
            }
        }
        std::sort(fold.train_patients.begin(), fold.train_patients.end());
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

inline FoldPlan split_folds(const synth::Cohort& c, std::size_t folds, std::uint64_t seed) {
    return split_folds(c.tiles, folds, seed);
}

struct FoldRows {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Tile indices of each side of a fold. Tiles of patients outside the
/// plan are a contract error.
inline FoldRows fold_rows(const std::vector<synth::TileRecord>& tiles, const Fold& fold) {
    const std::set<std::string> train(fold.train_patients.begin(), fold.train_patients.end());
    const std::set<std::string> val(fold.validation_patients.begin(), fold.validation_patients.end());
    FoldRows rows;
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const auto& p = tiles[i].patient_id;
        if (train.contains(p)) {
            rows.train.push_back(i);
        } else if (val.contains(p)) {
            rows.validation.push_back(i);
        } else {
            fail(ErrorKind::contract, "patient " + p + " is not covered by the fold plan");
        }
    }
    return rows;
}

inline nlohmann::json to_json(const FoldPlan& p) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : p.folds) {
        folds.push_back({{"train_patients", f.train_patients}, {"validation_patients", f.validation_patients}});
    }
    return {{"folds", folds}};
}

inline FoldPlan fold_plan_from_json(const nlohmann::json& j, const std::string& path = "folds") {
    config::ObjectReader r(j, path);
    const nlohmann::json* folds = r.raw("folds");
    if (folds == nullptr || !folds->is_array()) {
        r.invalid("folds", "expected an array");
    }
    r.finish();
    FoldPlan plan;
    for (std::size_t i = 0; i < folds->size(); ++i) {
        config::ObjectReader fr((*folds)[i], r.path_of("folds") + "[" + std::to_string(i) + "]");
        Fold f;
        f.train_patients = fr.required<std::vector<std::string>>("train_patients");
        f.validation_patients = fr.required<std::vector<std::string>>("validation_patients");
        fr.finish();
        plan.folds.push_back(std::move(f));
    }
    return plan;
}

} // namespace debias::train
