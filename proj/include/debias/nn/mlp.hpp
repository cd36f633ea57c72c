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

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace debias::nn {

/// Affine map `x * weights + bias`; weights are (in x out).
struct Layer {
    Matrix weights;
    RowVector bias;

    friend bool operator==(const Layer& a, const Layer& b) {
        return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
               a.weights == b.weights && a.bias == b.bias;
    }
};

/// Feed-forward network with a rectifier between consecutive layers and
/// no activation after the last one.
///
/// Every mutable access bumps `version()`, which lets `backward` reject a
/// cache recorded before the parameters changed.
class Mlp {
public:
    Mlp() = default;

    explicit Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) { check_chain(); }

    static Mlp zeros(std::span<const std::size_t> dims) {
        std::vector<Layer> layers;
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            layers.push_back({Matrix::Zero(static_cast<Eigen::Index>(dims[i]), static_cast<Eigen::Index>(dims[i + 1])),
                              RowVector::Zero(static_cast<Eigen::Index>(dims[i + 1]))});
        }
        return Mlp(std::move(layers));
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    static Mlp random(std::span<const std::size_t> dims, Rng& rng) {
        Mlp net = zeros(dims);
        for (auto& layer : net.layers_) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weights.rows()));
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
                    layer.weights(r, c) = uniform(rng, -bound, bound);
                }
            }
            for (Eigen::Index c = 0; c < layer.bias.size(); ++c) {
                layer.bias(c) = uniform(rng, -bound, bound);
            }
        }
        return net;
    }

    [[nodiscard]] std::size_t num_layers() const noexcept { return layers_.size(); }
    [[nodiscard]] bool empty() const noexcept { return layers_.empty(); }

    [[nodiscard]] std::size_t input_dim() const noexcept {
        return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weights.rows());
    }

    [[nodiscard]] std::size_t output_dim() const noexcept {
        return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weights.cols());
    }

    [[nodiscard]] std::vector<std::size_t> dims() const {
        std::vector<std::size_t> d;
        if (layers_.empty()) {
            return d;
        }
        d.push_back(input_dim());
        for (const auto& l : layers_) {
            d.push_back(static_cast<std::size_t>(l.weights.cols()));
        }
        return d;
    }

    [[nodiscard]] std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers_) {
            n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
        }
        return n;
    }

    [[nodiscard]] const std::vector<Layer>& layers() const noexcept { return layers_; }

    Layer& mutable_layer(std::size_t i) {
        ++version_;
        return layers_.at(i);
    }

    [[nodiscard]] std::uint64_t version() const noexcept { return version_; }

    [[nodiscard]] bool all_finite() const {
        for (const auto& l : layers_) {
            if (!l.weights.allFinite() || !l.bias.allFinite()) {
                return false;
            }
        }
        return true;
    }

    /// Parameters only; versions are bookkeeping.
    friend bool operator==(const Mlp& a, const Mlp& b) { return a.layers_ == b.layers_; }

private:
    void check_chain() const {
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& l = layers_[i];
            if (l.bias.size() != l.weights.cols()) {
                fail(ErrorKind::dimension, "layer " + std::to_string(i) + ": bias length does not match output width");
            }
            if (i > 0 && layers_[i - 1].weights.cols() != l.weights.rows()) {
                fail(ErrorKind::dimension, "layer " + std::to_string(i) + ": input width " +
                                               std::to_string(l.weights.rows()) + " does not chain with " +
                                               std::to_string(layers_[i - 1].weights.cols()));
            }
        }
    }

    std::vector<Layer> layers_;
    std::uint64_t version_ = 0;
};

/// Activations recorded by `forward` for exact reverse-mode.
struct ForwardCache {
    const Mlp* source = nullptr;
    std::uint64_t version = 0;
    std::vector<Matrix> inputs;  // input to each layer; inputs[l+1] = relu(pre_l)
};

/// Parameter gradients (same shapes as the network) plus the gradient
/// with respect to the network input.
struct MlpGrad {
    std::vector<Layer> layers;
    Matrix input;
};

inline Matrix forward(const Mlp& net, const Matrix& x, ForwardCache* cache = nullptr) {
    if (net.empty()) {
        fail(ErrorKind::contract, "forward through an empty network");
    }
    if (static_cast<std::size_t>(x.cols()) != net.input_dim()) {
        fail(ErrorKind::dimension, "forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                                       std::to_string(net.input_dim()));
    }
    if (cache != nullptr) {
        cache->source = &net;
        cache->version = net.version();
        cache->inputs.clear();
        cache->inputs.reserve(net.num_layers());
    }
    Matrix a = x;
    const auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix z = a * layers[l].weights;
        z.rowwise() += layers[l].bias;
        if (cache != nullptr) {
            cache->inputs.push_back(std::move(a));
        }
        if (l + 1 < layers.size()) {
            a = z.cwiseMax(0.0);
        } else {
            a = std::move(z);
        }
    }
    return a;
}

/// Feature extractor forward pass; F has the extractor's output width.
inline Matrix forward_features(const Mlp& fe, const Matrix& x, ForwardCache* cache = nullptr) {
    return forward(fe, x, cache);
}

/// Head forward pass producing logits (task) or bias predictions.
inline Matrix forward_head(const Mlp& head, const Matrix& features, ForwardCache* cache = nullptr) {
    return forward(head, features, cache);
}

inline MlpGrad backward(const Mlp& net, const ForwardCache& cache, const Matrix& upstream) {
    if (cache.source != &net || cache.version != net.version() || cache.inputs.size() != net.num_layers()) {
        fail(ErrorKind::contract, "backward: cache does not belong to the current parameters");
    }
    const auto& layers = net.layers();
    const Eigen::Index n = cache.inputs.front().rows();
    if (upstream.rows() != n || static_cast<std::size_t>(upstream.cols()) != net.output_dim()) {
        fail(ErrorKind::dimension, "backward: upstream gradient is " + std::to_string(upstream.rows()) + "x" +
                                       std::to_string(upstream.cols()) + ", expected " + std::to_string(n) + "x" +
                                       std::to_string(net.output_dim()));
    }
    MlpGrad grad;
    grad.layers.resize(layers.size());
    Matrix dz = upstream;
    for (std::size_t li = layers.size(); li-- > 0;) {
        const Matrix& a = cache.inputs[li];
        grad.layers[li].weights = a.transpose() * dz;
        grad.layers[li].bias = dz.colwise().sum();
        Matrix da = dz * layers[li].weights.transpose();
        if (li > 0) {
            // a > 0 exactly where the rectifier was active.
            dz = da.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
        } else {
            grad.input = std::move(da);
        }
    }
    return grad;
}

} // namespace debias::nn
