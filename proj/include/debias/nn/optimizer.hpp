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
#include "debias/nn/mlp.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace debias::nn {

enum class OptimizerKind { sgd, momentum, adam };

constexpr std::string_view to_string(OptimizerKind k) noexcept {
    switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::momentum: return "momentum";
    case OptimizerKind::adam: return "adam";
    }
    return "sgd";
}

inline OptimizerKind parse_optimizer_kind(std::string_view s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "momentum") return OptimizerKind::momentum;
    if (s == "adam") return OptimizerKind::adam;
    fail(ErrorKind::config, "unknown optimizer '" + std::string(s) + "' (expected sgd, momentum or adam)");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// +1 descends the loss, -1 ascends it.
enum class StepSign : int { descend = 1, ascend = -1 };

/// Moment buffers for one network. Starts empty and sizes itself on the
/// first step.
struct OptimizerState {
    std::vector<Layer> first;
    std::vector<Layer> second;
    std::uint64_t steps = 0;
};

namespace detail {

inline std::vector<Layer> zeros_like(const std::vector<Layer>& layers) {
    std::vector<Layer> out;
    out.reserve(layers.size());
    for (const auto& l : layers) {
        out.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()), RowVector::Zero(l.bias.size())});
    }
    return out;
}

template <class Param, class Grad, class Moment>
void update_block(Param& w, const Grad& g, Moment& m, Moment& v, const OptimizerConfig& cfg, double signed_lr,
                  double bias1, double bias2) {
    switch (cfg.kind) {
    case OptimizerKind::sgd:
        w -= signed_lr * g;
        break;
    case OptimizerKind::momentum:
        m = cfg.momentum * m + g;
        w -= signed_lr * m;
        break;
    case OptimizerKind::adam:
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        w -= signed_lr * ((m / bias1).array() / ((v / bias2).array().sqrt() + cfg.epsilon)).matrix();
        break;
    }
}

} // namespace detail

/// One update of `net` from `grads`. With `StepSign::ascend` the step
/// moves up the gradient. `lr == 0` leaves the parameters untouched.
inline void opt_step(Mlp& net, const std::vector<Layer>& grads, OptimizerState& state, const OptimizerConfig& cfg,
                     StepSign sign, double lr) {
    if (grads.size() != net.num_layers()) {
        fail(ErrorKind::dimension, "opt_step: " + std::to_string(grads.size()) + " gradient layers for " +
                                       std::to_string(net.num_layers()) + " parameter layers");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const auto& p = net.layers()[i];
        if (grads[i].weights.rows() != p.weights.rows() || grads[i].weights.cols() != p.weights.cols() ||
            grads[i].bias.size() != p.bias.size()) {
            fail(ErrorKind::dimension, "opt_step: gradient shape mismatch at layer " + std::to_string(i));
        }
    }
    if (lr == 0.0) {
        return;
    }
    if (state.first.empty()) {
        state.first = detail::zeros_like(net.layers());
        state.second = detail::zeros_like(net.layers());
    }
    ++state.steps;
    const double t = static_cast<double>(state.steps);
    const double bias1 = 1.0 - std::pow(cfg.beta1, t);
    const double bias2 = 1.0 - std::pow(cfg.beta2, t);
    const double signed_lr = static_cast<double>(static_cast<int>(sign)) * lr;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        Layer& p = net.mutable_layer(i);
        detail::update_block(p.weights, grads[i].weights, state.first[i].weights, state.second[i].weights, cfg,
                             signed_lr, bias1, bias2);
        detail::update_block(p.bias, grads[i].bias, state.first[i].bias, state.second[i].bias, cfg, signed_lr,
                             bias1, bias2);
    }
}

} // namespace debias::nn
