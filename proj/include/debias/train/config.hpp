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
#include "debias/core/labels.hpp"
#include "debias/nn/bundle.hpp"
#include "debias/nn/optimizer.hpp"
#include "debias/stain/augment.hpp"
#include "debias/synth/variables.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace debias::train {

using nlohmann::json;

/// Rows the feature extractor sees during the adversarial ascent.
enum class AdversaryRows { conditioned, full };

struct TrainConfig {
    double lambda = 1.0;
    std::size_t batch_size = 128;
    std::size_t epochs = 3;
    /// Batches per epoch; 0 means one pass worth of training tiles.
    std::size_t steps_per_epoch = 0;
    double lr_task = 1e-3;
    double lr_be = 1e-2;
    double lr_adv = 1e-2;
    std::size_t folds = 5;
    ClassLabel conditioning_class = ClassLabel::mss;
    std::vector<std::string> bias_names{"project", "patient", "glass"};
    std::size_t monitor_every = 1;
    /// Epochs without validation-loss improvement before stopping; 0 disables.
    std::size_t patience = 0;
    AdversaryRows adversary_rows = AdversaryRows::conditioned;
    std::uint64_t seed = 0;
    nn::OptimizerConfig optimizer;
    nn::Architecture architecture;
    int image_input_px = 8;
    bool augment = true;  // spot-image cohorts only
    stain::AugmentConfig augmentation;
    std::size_t audit_max_samples = 8192;
    std::size_t max_subgroup_categories = 32;
};

inline std::string to_string(AdversaryRows r) { return r == AdversaryRows::conditioned ? "conditioned" : "full"; }

inline json to_json(const TrainConfig& c) {
    return json{
        {"lambda", c.lambda},
        {"batch_size", c.batch_size},
        {"epochs", c.epochs},
        {"steps_per_epoch", c.steps_per_epoch},
        {"lr_task", c.lr_task},
        {"lr_be", c.lr_be},
        {"lr_adv", c.lr_adv},
        {"folds", c.folds},
        {"conditioning_class", std::string(debias::to_string(c.conditioning_class))},
        {"bias_names", c.bias_names},
        {"monitor_every", c.monitor_every},
        {"patience", c.patience},
        {"adversary_rows", to_string(c.adversary_rows)},
        {"seed", c.seed},
        {"optimizer",
         {{"kind", std::string(nn::to_string(c.optimizer.kind))},
          {"momentum", c.optimizer.momentum},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"epsilon", c.optimizer.epsilon}}},
        {"architecture",
         {{"fe_hidden", c.architecture.fe_hidden},
          {"feature_dim", c.architecture.feature_dim},
          {"head_hidden", c.architecture.head_hidden}}},
        {"image_input_px", c.image_input_px},
        {"augment", c.augment},
        {"augmentation",
         {{"max_rotation_deg", c.augmentation.max_rotation_deg},
          {"flip_probability", c.augmentation.flip_probability},
          {"max_warp", c.augmentation.max_warp},
          {"max_hue", c.augmentation.max_hue}}},
        {"audit_max_samples", c.audit_max_samples},
        {"max_subgroup_categories", c.max_subgroup_categories},
    };
}

inline void validate(const TrainConfig& c, const std::string& path = "train") {
    auto bad = [&](const std::string& field, const std::string& why) {
        fail(ErrorKind::config, path + "." + field + ": " + why);
    };
    if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) bad("lambda", "must be finite and >= 0");
    if (c.batch_size == 0) bad("batch_size", "must be positive");
    if (c.epochs == 0) bad("epochs", "must be positive");
    if (c.folds < 2) bad("folds", "must be at least 2");
    if (c.monitor_every == 0) bad("monitor_every", "must be positive");
    for (auto [name, v] : {std::pair<const char*, double>{"lr_task", c.lr_task}, {"lr_be", c.lr_be}, {"lr_adv", c.lr_adv}}) {
        if (!(v >= 0.0) || !std::isfinite(v)) bad(name, "must be finite and >= 0");
    }
    for (std::size_t i = 0; i < c.bias_names.size(); ++i) {
        const auto& b = c.bias_names[i];
        const auto& known = synth::known_variables();
        if (b == "label" || std::find(known.begin(), known.end(), b) == known.end()) {
            bad("bias_names[" + std::to_string(i) + "]", "unknown bias variable '" + b + "'");
        }
        if (std::count(c.bias_names.begin(), c.bias_names.end(), b) > 1) {
            bad("bias_names[" + std::to_string(i) + "]", "duplicate bias '" + b + "'");
        }
    }
    if (c.architecture.feature_dim == 0) bad("architecture.feature_dim", "must be positive");
    for (auto w : c.architecture.fe_hidden) {
        if (w == 0) bad("architecture.fe_hidden", "widths must be positive");
    }
    for (auto w : c.architecture.head_hidden) {
        if (w == 0) bad("architecture.head_hidden", "widths must be positive");
    }
    if (c.image_input_px < 1) bad("image_input_px", "must be positive");
    if (c.audit_max_samples < 2) bad("audit_max_samples", "must be at least 2");
    const auto& o = c.optimizer;
    if (!(o.beta1 >= 0.0 && o.beta1 < 1.0)) bad("optimizer.beta1", "must lie in [0, 1)");
    if (!(o.beta2 >= 0.0 && o.beta2 < 1.0)) bad("optimizer.beta2", "must lie in [0, 1)");
    if (!(o.momentum >= 0.0 && o.momentum < 1.0)) bad("optimizer.momentum", "must lie in [0, 1)");
    if (!(o.epsilon > 0.0)) bad("optimizer.epsilon", "must be positive");
}

inline TrainConfig train_config_from_json(const json& j, const std::string& path = "train") {
    config::ObjectReader r(j, path);
    TrainConfig c;
    c.lambda = r.get<double>("lambda", c.lambda);
    c.batch_size = r.get<std::size_t>("batch_size", c.batch_size);
    c.epochs = r.get<std::size_t>("epochs", c.epochs);
    c.steps_per_epoch = r.get<std::size_t>("steps_per_epoch", c.steps_per_epoch);
    c.lr_task = r.get<double>("lr_task", c.lr_task);
    c.lr_be = r.get<double>("lr_be", c.lr_be);
    c.lr_adv = r.get<double>("lr_adv", c.lr_adv);
    c.folds = r.get<std::size_t>("folds", c.folds);
    const auto cls = r.get<std::string>("conditioning_class", "MSS");
    const auto parsed = try_parse_label(cls);
    if (!parsed) r.invalid("conditioning_class", "expected MSS or MSI-H, got '" + cls + "'");
    c.conditioning_class = *parsed;
    if (const json* b = r.raw("bias_names")) {
        if (!b->is_array()) r.invalid("bias_names", "expected an array of strings");
        c.bias_names.clear();
        for (const auto& v : *b) {
            if (!v.is_string()) r.invalid("bias_names", "expected an array of strings");
            c.bias_names.push_back(v.get<std::string>());
        }
    }
    c.monitor_every = r.get<std::size_t>("monitor_every", c.monitor_every);
    c.patience = r.get<std::size_t>("patience", c.patience);
    const auto rows = r.get<std::string>("adversary_rows", "conditioned");
    if (rows == "conditioned") {
        c.adversary_rows = AdversaryRows::conditioned;
    } else if (rows == "full") {
        c.adversary_rows = AdversaryRows::full;
    } else {
        r.invalid("adversary_rows", "expected 'conditioned' or 'full', got '" + rows + "'");
    }
    c.seed = r.get<std::uint64_t>("seed", c.seed);
    if (const json* o = r.raw("optimizer")) {
        config::ObjectReader orr(*o, r.path_of("optimizer"));
        const auto kind = orr.get<std::string>("kind", std::string(nn::to_string(c.optimizer.kind)));
        try {
            c.optimizer.kind = nn::parse_optimizer_kind(kind);
        } catch (const Error& e) {
            orr.invalid("kind", e.what());
        }
        c.optimizer.momentum = orr.get<double>("momentum", c.optimizer.momentum);
        c.optimizer.beta1 = orr.get<double>("beta1", c.optimizer.beta1);
        c.optimizer.beta2 = orr.get<double>("beta2", c.optimizer.beta2);
        c.optimizer.epsilon = orr.get<double>("epsilon", c.optimizer.epsilon);
        orr.finish();
    }
    if (const json* a = r.raw("architecture")) {
        config::ObjectReader ar(*a, r.path_of("architecture"));
        c.architecture.fe_hidden = ar.get<std::vector<std::size_t>>("fe_hidden", c.architecture.fe_hidden);
        c.architecture.feature_dim = ar.get<std::size_t>("feature_dim", c.architecture.feature_dim);
        c.architecture.head_hidden = ar.get<std::vector<std::size_t>>("head_hidden", c.architecture.head_hidden);
        ar.finish();
    }
    c.image_input_px = r.get<int>("image_input_px", c.image_input_px);
    c.augment = r.get<bool>("augment", c.augment);
    if (const json* a = r.raw("augmentation")) {
        config::ObjectReader ar(*a, r.path_of("augmentation"));
        c.augmentation.max_rotation_deg = ar.get<double>("max_rotation_deg", c.augmentation.max_rotation_deg);
        c.augmentation.flip_probability = ar.get<double>("flip_probability", c.augmentation.flip_probability);
        c.augmentation.max_warp = ar.get<double>("max_warp", c.augmentation.max_warp);
        c.augmentation.max_hue = ar.get<double>("max_hue", c.augmentation.max_hue);
        ar.finish();
    }
    c.audit_max_samples = r.get<std::size_t>("audit_max_samples", c.audit_max_samples);
    c.max_subgroup_categories = r.get<std::size_t>("max_subgroup_categories", c.max_subgroup_categories);
    r.finish();
    validate(c, path);
    return c;
}

} // namespace debias::train
