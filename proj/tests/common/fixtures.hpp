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

// Cohort fixtures shared by the unit and acceptance tests.

#include "debias/core/random.hpp"
#include "debias/stain/macenko.hpp"
#include "debias/synth/cohort.hpp"

#include <Eigen/Geometry>

#include <string>
#include <vector>

namespace fixtures {

/// 9:1 MSS:MSI-H patients with tile counts varying from 1 to 17 per
/// patient.
inline std::vector<debias::synth::TileRecord> imbalanced_tiles(std::size_t mss_patients = 90,
                                                              std::size_t msi_patients = 10) {
    std::vector<debias::synth::TileRecord> tiles;
    for (std::size_t p = 0; p < mss_patients + msi_patients; ++p) {
        const bool msi = p >= mss_patients;
        const std::size_t count = 1 + (p * 7) % 17;
        for (std::size_t t = 0; t < count; ++t) {
            debias::synth::TileRecord r;
            r.patient_id = "P" + std::to_string(p);
            r.tile_id = r.patient_id + "_" + std::to_string(t);
            r.label = msi ? debias::ClassLabel::msi_h : debias::ClassLabel::mss;
            tiles.push_back(std::move(r));
        }
    }
    return tiles;
}

/// Per-pixel H and E concentrations: a fifth pure hematoxylin, a fifth
/// pure eosin, the rest mixed, with some faint background pixels.
inline Eigen::Matrix<double, Eigen::Dynamic, 2> stain_concentrations(int w, int h, std::uint64_t seed) {
    auto rng = debias::make_rng(seed, "fixture.concentrations");
    Eigen::Matrix<double, Eigen::Dynamic, 2> c(static_cast<Eigen::Index>(w) * h, 2);
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        const double u = debias::uniform01(rng);
        const double a = debias::uniform(rng, 0.2, 1.4);
        const double b = debias::uniform(rng, 0.2, 1.0);
        if (u < 0.2) {
            c.row(i) << a, 0.0;
        } else if (u < 0.4) {
            c.row(i) << 0.0, b;
        } else if (u < 0.9) {
            c.row(i) << a * debias::uniform01(rng), b * debias::uniform01(rng);
        } else {
            c.row(i) << 0.02, 0.02;
        }
    }
    return c;
}

/// Reference stains with each column rotated by `degrees` about a fixed
/// axis, then clamped to non-negative OD.
inline debias::stain::StainMatrix rotated_stains(const debias::stain::StainMatrix& base, double degrees,
                                                 const Eigen::Vector3d& axis = Eigen::Vector3d(1.0, -1.0, 0.5)) {
    const Eigen::Matrix3d r = Eigen::AngleAxisd(degrees * 3.14159265358979323846 / 180.0, axis.normalized()).matrix();
    debias::stain::StainMatrix out = r * base;
    for (int s = 0; s < 2; ++s) out.col(s) = out.col(s).cwiseMax(0.0).normalized();
    return out;
}

} // namespace fixtures
