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
#include "debias/synth/cohort.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace debias::train {

/// w_i = 1 / (T_u * P_c) for tile i of patient u in class c, normalized to
/// sum 1: each class carries half the mass, split evenly over its patients.
inline std::vector<double> composite_weights(std::span<const synth::TileRecord> tiles) {
    if (tiles.empty()) {
        fail(ErrorKind::empty_input, "composite_weights: no tiles");
    }
    std::map<std::string, std::size_t> tiles_per_patient;
    std::array<std::map<std::string, int>, 2> patients;
    for (const auto& t : tiles) {
        ++tiles_per_patient[t.patient_id];
        patients[static_cast<std::size_t>(t.label)][t.patient_id] = 1;
    }
    std::vector<double> w;
    w.reserve(tiles.size());
    for (const auto& t : tiles) {
        const double tu = static_cast<double>(tiles_per_patient.at(t.patient_id));
        const double pc = static_cast<double>(patients[static_cast<std::size_t>(t.label)].size());
        w.push_back(1.0 / (tu * pc));
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= total;
    return w;
}

/// Weighted draws with replacement from a fixed stream.
class BatchStream {
public:
    BatchStream(std::span<const double> weights, std::size_t batch_size, std::uint64_t seed)
        : batch_size_(batch_size), rng_(seed) {
        if (weights.empty()) {
            fail(ErrorKind::empty_input, "batch stream: no weights");
        }
        if (batch_size == 0) {
            fail(ErrorKind::config, "batch stream: batch size must be positive");
        }
        cumulative_.reserve(weights.size());
        double acc = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) fail(ErrorKind::domain, "batch stream: negative or non-finite weight");
            acc += w;
            cumulative_.push_back(acc);
        }
        if (!(acc > 0.0)) fail(ErrorKind::domain, "batch stream: weights sum to zero");
    }

    /// Index into the weight list.
    std::size_t draw() {
        const double u = uniform01(rng_) * cumulative_.back();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        if (it == cumulative_.end()) --it;
        return static_cast<std::size_t>(it - cumulative_.begin());
    }

    std::vector<std::size_t> next() {
        std::vector<std::size_t> batch(batch_size_);
        for (auto& b : batch) b = draw();
        return batch;
    }

private:
    std::size_t batch_size_;
    Rng rng_;
    std::vector<double> cumulative_;
};

/// The first `n_batches` batches of the stream for `seed`.
inline std::vector<std::vector<std::size_t>> make_batches(std::span<const double> weights, std::size_t batch_size,
                                                          std::size_t n_batches, std::uint64_t seed) {
    BatchStream s(weights, batch_size, seed);
    std::vector<std::vector<std::size_t>> out;
    out.reserve(n_batches);
    for (std::size_t i = 0; i < n_batches; ++i) out.push_back(s.next());
    return out;
}

} // namespace debias::train
