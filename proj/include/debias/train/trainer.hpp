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
#include "debias/core/random.hpp"
#include "debias/core/types.hpp"
#include "debias/nn/bundle.hpp"
#include "debias/nn/losses.hpp"
#include "debias/nn/mlp.hpp"
#include "debias/nn/optimizer.hpp"
#include "debias/stain/augment.hpp"
#include "debias/stats/dependence.hpp"
#include "debias/synth/cohort.hpp"
#include "debias/synth/variables.hpp"
#include "debias/train/config.hpp"
#include "debias/train/folds.hpp"
#include "debias/train/sampling.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace debias::train {

/// Cohort-wide inputs shared by every fold.
struct TrainData {
    const synth::Cohort* cohort = nullptr;
    Matrix x;                                  // un-augmented network input per tile
    std::vector<int> y;
    std::vector<std::string> bias_names;
    std::vector<synth::CategoryCodes> bias;    // codes over the whole cohort, one per bias
    int image_px = 8;

    [[nodiscard]] std::vector<std::size_t> bias_categories() const {
        std::vector<std::size_t> k;
        for (const auto& b : bias) k.push_back(b.categories.size());
        return k;
    }
};

inline TrainData prepare_data(const synth::Cohort& c, const TrainConfig& cfg) {
    TrainData d;
    d.cohort = &c;
    d.image_px = cfg.image_input_px;
    d.x = synth::design_matrix(c, cfg.image_input_px);
    d.y = synth::class_codes(c.tiles);
    d.bias_names = cfg.bias_names;
    for (const auto& b : cfg.bias_names) {
        d.bias.push_back(synth::category_codes(c, b));
    }
    return d;
}

/// One mini-batch: inputs, class labels and the code of every bias.
struct Batch {
    std::vector<std::size_t> rows;  // cohort tile indices
    Matrix x;
    std::vector<int> y;
    std::vector<std::vector<int>> bias;
};

inline Batch gather_batch(const TrainData& d, std::vector<std::size_t> rows) {
    Batch b;
    b.x = select_rows(d.x, rows);
    b.y.reserve(rows.size());
    for (auto r : rows) b.y.push_back(d.y[r]);
    b.bias.resize(d.bias.size());
    for (std::size_t n = 0; n < d.bias.size(); ++n) {
        b.bias[n].reserve(rows.size());
        for (auto r : rows) b.bias[n].push_back(d.bias[n].codes[r]);
    }
    b.rows = std::move(rows);
    return b;
}

/// Replaces the inputs of a spot-image batch with augmented tiles.
inline void augment_batch(Batch& b, const TrainData& d, const stain::AugmentConfig& cfg, std::uint64_t seed) {
    const auto& c = *d.cohort;
    RowVector row(b.x.cols());
    for (std::size_t k = 0; k < b.rows.size(); ++k) {
        const auto& tile = c.tile_images.at(c.tiles[b.rows[k]].payload_index);
        const auto aug = stain::augment(tile, cfg, derive_seed(seed, "augment-row", k));
        synth::pooled_pixels(aug, d.image_px, row);
        b.x.row(static_cast<Eigen::Index>(k)) = row.array() / 255.0 - 0.5;
    }
}

/// Optimizer moments: the extractor keeps one set for the task descent and
/// one per bias for the adversarial ascent; every head has its own.
struct TrainerState {
    nn::OptimizerState fe_task;
    std::vector<nn::OptimizerState> fe_adv;
    nn::OptimizerState msi;
    std::vector<nn::OptimizerState> be;
};

struct StepResult {
    double loss_msi = 0.0;                  // batch sum
    std::vector<double> loss_be;            // phase-2 loss per bias, NaN when skipped
    bool adversary_skipped = false;
    Matrix features;                        // after phase 1, when requested
};

/// Phase 1: descend the task loss on extractor and task head.
inline void task_phase(nn::ModelBundle& m, TrainerState& s, const Batch& b, const TrainConfig& cfg, StepResult& out) {
    nn::ForwardCache fe_cache;
    nn::ForwardCache msi_cache;
    const Matrix f = nn::forward(m.fe, b.x, &fe_cache);
    const Matrix logits = nn::forward(m.msi_head, f, &msi_cache);
    const auto lg = nn::xent_loss_grad(logits, b.y);
    out.loss_msi = lg.loss;
    const auto g_msi = nn::backward(m.msi_head, msi_cache, lg.grad);
    const auto g_fe = nn::backward(m.fe, fe_cache, g_msi.input);
    nn::opt_step(m.msi_head, g_msi.layers, s.msi, cfg.optimizer, nn::StepSign::descend, cfg.lr_task);
    nn::opt_step(m.fe, g_fe.layers, s.fe_task, cfg.optimizer, nn::StepSign::descend, cfg.lr_task);
}

/// Phases 2 and 3 for every bias in order. Phase 2 fits head n to its bias
/// on the conditioning rows with the extractor fixed; phase 3 moves the
/// extractor up the same loss with head n fixed.
inline void adversary_phases(nn::ModelBundle& m, TrainerState& s, const Batch& b, const TrainConfig& cfg,
                             StepResult& out) {
    const auto rho = static_cast<int>(cfg.conditioning_class);
    std::vector<std::size_t> cond;
    for (std::size_t i = 0; i < b.y.size(); ++i) {
        if (b.y[i] == rho) cond.push_back(i);
    }
    out.loss_be.assign(m.be_heads.size(), std::numeric_limits<double>::quiet_NaN());
    if (cond.size() < 2) {
        out.adversary_skipped = true;
        return;
    }
    const Matrix xc = select_rows(b.x, cond);
    const bool full = cfg.adversary_rows == AdversaryRows::full;
    const double adv_lr = cfg.lr_adv * cfg.lambda;
    for (std::size_t n = 0; n < m.be_heads.size(); ++n) {
        auto& head = m.be_heads[n];
        const auto k = static_cast<int>(head.output_dim());
        std::vector<int> codes;
        codes.reserve(cond.size());
        for (auto i : cond) codes.push_back(b.bias[n][i]);
        const Matrix target = stats::one_hot(codes, k);

        const Matrix f = nn::forward(m.fe, xc);
        nn::ForwardCache h_cache;
        const Matrix pred = nn::forward(head, f, &h_cache);
        const auto lg = nn::corr_loss_grad(target, pred);
        out.loss_be[n] = lg.loss;
        const auto g_head = nn::backward(head, h_cache, lg.grad);
        nn::opt_step(head, g_head.layers, s.be[n], cfg.optimizer, nn::StepSign::descend, cfg.lr_be);

        if (adv_lr == 0.0) continue;
        const Matrix& xa = full ? b.x : xc;
        const Matrix target_a = full ? stats::one_hot(b.bias[n], k) : target;
        nn::ForwardCache fe_cache;
        nn::ForwardCache ha_cache;
        const Matrix fa = nn::forward(m.fe, xa, &fe_cache);
        const Matrix pa = nn::forward(head, fa, &ha_cache);
        const auto la = nn::corr_loss_grad(target_a, pa);
        const auto g_h = nn::backward(head, ha_cache, la.grad);
        const auto g_fe = nn::backward(m.fe, fe_cache, g_h.input);
        nn::opt_step(m.fe, g_fe.layers, s.fe_adv[n], cfg.optimizer, nn::StepSign::ascend, adv_lr);
    }
}

/// One three-phase update. With `features_out` the post-phase-1 features
/// of the batch are returned for monitoring.
inline StepResult adversarial_step(nn::ModelBundle& m, TrainerState& s, const Batch& b, const TrainConfig& cfg,
                                   bool features_out = false) {
    StepResult out;
    task_phase(m, s, b, cfg, out);
    if (features_out) out.features = nn::forward(m.fe, b.x);
    if (!m.be_heads.empty()) {
        adversary_phases(m, s, b, cfg, out);
    }
    return out;
}

struct HistoryRow {
    std::size_t iter = 0;
    std::size_t epoch = 0;
    double loss_msi = 0.0;          // per sample
    std::vector<double> loss_be;    // NaN when not computed
    double dc_task = 0.0;
    std::vector<double> dc_bias;
    bool adversary_skipped = false;
};

struct TrainHistory {
    std::vector<std::string> bias_names;  // also the phase order
    std::vector<HistoryRow> rows;
    std::vector<double> validation_loss;  // per epoch, per sample
    std::size_t epochs_run = 0;

    [[nodiscard]] std::string csv() const {
        std::string out = "iter,loss_msi";
        for (const auto& b : bias_names) out += ",loss_be_" + b;
        out += ",dc_task";
        for (const auto& b : bias_names) out += ",dc_" + b;
        out += ",epoch,adv_skipped\n";
        auto num = [](double v) {
            if (std::isnan(v)) return std::string();
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.9g", v);
            return std::string(buf);
        };
        for (const auto& r : rows) {
            out += std::to_string(r.iter) + "," + num(r.loss_msi);
            for (double v : r.loss_be) out += "," + num(v);
            out += "," + num(r.dc_task);
            for (double v : r.dc_bias) out += "," + num(v);
            out += "," + std::to_string(r.epoch) + "," + (r.adversary_skipped ? "1" : "0") + "\n";
        }
        return out;
    }
};

struct TrainResult {
    nn::ModelBundle bundle;
    TrainHistory history;
};

using EpochCallback = std::function<void(std::size_t epoch, const nn::ModelBundle&)>;

inline std::size_t steps_per_epoch(const TrainConfig& cfg, std::size_t n_train) {
    if (cfg.steps_per_epoch > 0) return cfg.steps_per_epoch;
    return std::max<std::size_t>(1, (n_train + cfg.batch_size - 1) / cfg.batch_size);
}

/// Mean per-sample task loss over `rows`.
inline double mean_task_loss(const nn::ModelBundle& m, const TrainData& d, const std::vector<std::size_t>& rows) {
    if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    const Matrix x = select_rows(d.x, rows);
    std::vector<int> y;
    for (auto r : rows) y.push_back(d.y[r]);
    return nn::xent_loss_grad(nn::forward(m.msi_head, nn::forward(m.fe, x)), y).loss / static_cast<double>(rows.size());
}

/// Trains one fold. `ablate` attaches one adversarial head per bias and
/// runs the three-phase update; otherwise only the task phase runs. Both
/// regimes share initialization and batch streams for a fold index.
inline TrainResult train_fold(const TrainData& d, const FoldRows& rows, std::size_t fold_index, const TrainConfig& cfg,
                              bool ablate, const EpochCallback& on_epoch = {}) {
    validate(cfg);
    if (rows.train.empty()) {
        fail(ErrorKind::empty_input, "fold " + std::to_string(fold_index) + " has no training tiles");
    }
    if (ablate && d.bias_names.empty()) {
        fail(ErrorKind::config, "train.bias_names: bias ablation needs at least one bias");
    }
    const std::uint64_t model_seed = derive_seed(cfg.seed, "model", fold_index);
    TrainResult res;
    res.bundle = nn::make_bundle(static_cast<std::size_t>(d.x.cols()), cfg.architecture,
                                 ablate ? d.bias_names : std::vector<std::string>{},
                                 ablate ? d.bias_categories() : std::vector<std::size_t>{}, model_seed);
    res.history.bias_names = d.bias_names;
    TrainerState state;
    state.be.resize(res.bundle.be_heads.size());
    state.fe_adv.resize(res.bundle.be_heads.size());

    std::vector<synth::TileRecord> train_tiles;
    train_tiles.reserve(rows.train.size());
    for (auto r : rows.train) train_tiles.push_back(d.cohort->tiles[r]);
    const auto weights = composite_weights(train_tiles);
    BatchStream stream(weights, cfg.batch_size, derive_seed(cfg.seed, "sampler", fold_index));
    const bool images = d.cohort->mode() == synth::PayloadMode::spot_image && cfg.augment;

    const std::size_t steps = steps_per_epoch(cfg, rows.train.size());
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    std::size_t iter = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t s = 0; s < steps; ++s) {
            ++iter;
            std::vector<std::size_t> picks = stream.next();
            for (auto& p : picks) p = rows.train[p];
            Batch batch = gather_batch(d, std::move(picks));
            if (images) {
                augment_batch(batch, d, cfg.augmentation, derive_seed(cfg.seed, "augment", fold_index * 1000003ULL + iter));
            }
            const bool monitor = iter % cfg.monitor_every == 0;
            StepResult step;
            try {
                step = adversarial_step(res.bundle, state, batch, cfg, monitor);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::numeric) throw;
                fail(ErrorKind::training, "training diverged at iteration " + std::to_string(iter) + ": " + e.what());
            }
            if (!std::isfinite(step.loss_msi) || !res.bundle.fe.all_finite() || !res.bundle.msi_head.all_finite()) {
                fail(ErrorKind::training, "training diverged at iteration " + std::to_string(iter) +
                                              ": non-finite loss or parameters");
            }
            if (monitor) {
                HistoryRow h;
                h.iter = iter;
                h.epoch = epoch;
                h.loss_msi = step.loss_msi / static_cast<double>(batch.rows.size());
                h.loss_be = step.loss_be;
                h.loss_be.resize(d.bias_names.size(), std::numeric_limits<double>::quiet_NaN());
                h.adversary_skipped = step.adversary_skipped;
                std::vector<std::vector<int>> targets{batch.y};
                targets.insert(targets.end(), batch.bias.begin(), batch.bias.end());
                const auto dc = stats::distance_correlation_sq(step.features, targets);
                h.dc_task = dc[0].value;
                for (std::size_t n = 1; n < dc.size(); ++n) h.dc_bias.push_back(dc[n].value);
                res.history.rows.push_back(std::move(h));
            }
        }
        res.history.epochs_run = epoch;
        if (on_epoch) on_epoch(epoch, res.bundle);
        if (cfg.patience > 0) {
            const double v = mean_task_loss(res.bundle, d, rows.validation);
            res.history.validation_loss.push_back(v);
            if (v < best_val) {
                best_val = v;
                stale = 0;
            } else if (++stale >= cfg.patience) {
                break;
            }
        }
    }
    return res;
}

inline TrainResult train_baseline(const TrainData& d, const FoldRows& rows, std::size_t fold_index,
                                  const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
    return train_fold(d, rows, fold_index, cfg, false, on_epoch);
}

inline TrainResult train_bias_ablated(const TrainData& d, const FoldRows& rows, std::size_t fold_index,
                                      const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
    return train_fold(d, rows, fold_index, cfg, true, on_epoch);
}

/// Extractor and task head only, the part used for prediction.
inline nn::ModelBundle predictive_part(const nn::ModelBundle& m) {
    nn::ModelBundle out;
    out.fe = m.fe;
    out.msi_head = m.msi_head;
    return out;
}

} // namespace debias::train
