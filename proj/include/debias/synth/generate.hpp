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
#include "debias/synth/assign.hpp"
#include "debias/synth/cohort.hpp"
#include "debias/synth/render.hpp"

#include <set>
#include <string>
#include <vector>

namespace debias::synth {

namespace detail {

inline Cohort generate_features(const CohortSpec& spec, const Assignment& a) {
    Cohort c;
    c.spec = spec;
    c.directions = make_directions(spec, a, spec.feature_dim);
    const std::size_t n_tiles = spec.n_patients * spec.spots_per_patient * spec.tiles_per_spot;
    c.features.resize(static_cast<Eigen::Index>(n_tiles), static_cast<Eigen::Index>(spec.feature_dim));
    c.tiles.reserve(n_tiles);
    const auto& amp = spec.amplitudes;
    Vector x(static_cast<Eigen::Index>(spec.feature_dim));
    for (const auto& pa : a.patients) {
        const auto& project = spec.projects[pa.project].id;
        const Vector& vy = c.directions.cls[static_cast<std::size_t>(pa.label)];
        const Vector shared = amp.project * c.directions.project.at(project) +
                              amp.patient * c.directions.patient.at(pa.patient_id);
        for (const auto& s : pa.spots) {
            const auto& glass = a.glass_ids[pa.project][s.glass];
            const Vector base = shared + amp.glass * c.directions.glass.at(glass);
            for (std::size_t t = 0; t < spec.tiles_per_spot; ++t) {
                const std::size_t idx = c.tiles.size();
                Rng rng = make_rng(spec.seed, "tile", idx);
                TileRecord r;
                r.tile_id = tile_name(idx);
                r.patient_id = pa.patient_id;
                r.spot_id = s.spot_id;
                r.glass_id = glass;
                r.project_id = project;
                r.label = pa.label;
                r.tissue = tile_tissues[draw_index(rng, spec.tissue_weights)];
                r.magnification = all_magnifications[draw_index(rng, spec.magnification_weights)];
                r.payload_index = idx;
                r.payload_ref = "payloads.bin#" + std::to_string(idx);
                const double gain = spec.tissue_signal[static_cast<std::size_t>(r.tissue) - 1] *
                                    spec.magnification_signal[static_cast<std::size_t>(r.magnification)];
                for (Eigen::Index k = 0; k < x.size(); ++k) {
                    x(k) = amp.noise * standard_normal(rng);
                }
                x += base + (amp.cls * gain) * vy;
                c.features.row(static_cast<Eigen::Index>(idx)) = x.transpose().cast<float>();
                c.tiles.push_back(std::move(r));
            }
        }
    }
    return c;
}

inline Cohort generate_images(const CohortSpec& spec, const Assignment& a) {
    Cohort c;
    c.spec = spec;
    c.directions = make_directions(spec, a, 3);
    const std::set<Tissue> keep(spec.image.roi.begin(), spec.image.roi.end());
    for (const auto& pa : a.patients) {
        for (const auto& s : pa.spots) {
            const auto glass = a.glass_ids[pa.project][s.glass];
            const auto spot = render_spot_image(spec, a, c.directions, pa, s);
            for (auto& t : spot_tiles(spot, spec.image.tile_px, keep)) {
                const std::size_t idx = c.tiles.size();
                TileRecord r;
                r.tile_id = tile_name(idx);
                r.patient_id = pa.patient_id;
                r.spot_id = s.spot_id;
                r.glass_id = glass;
                r.project_id = spec.projects[pa.project].id;
                r.label = pa.label;
                r.tissue = t.tissue;
                r.magnification = t.magnification;
                r.payload_index = c.tile_images.size();
                r.payload_ref = "tiles/" + tile_file_name(r, t.row, t.col);
                c.tile_images.push_back(std::move(t.image));
                c.tiles.push_back(std::move(r));
            }
        }
    }
    return c;
}

} // namespace detail

/// Deterministic synthetic cohort for `spec`.
inline Cohort generate_cohort(const CohortSpec& spec) {
    validate(spec);
    const Assignment a = assign_patients(spec);
    Cohort c = spec.mode == PayloadMode::features ? detail::generate_features(spec, a) : detail::generate_images(spec, a);
    if (c.tiles.empty()) {
        fail(ErrorKind::empty_input, "generated cohort has no tiles");
    }
    return c;
}

} // namespace debias::synth
