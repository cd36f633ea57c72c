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

#include "debias/core/random.hpp"
#include "debias/image/image.hpp"
#include "debias/stain/macenko.hpp"
#include "debias/stain/tiling.hpp"
#include "debias/synth/assign.hpp"
#include "debias/synth/cohort.hpp"

#include <array>
#include <cmath>
#include <set>
#include <string>
#include <vector>

namespace debias::synth {

struct SpotImage {
    image::RgbImage image;
    image::GrayImage mask;  // tissue palette index per pixel
};

/// H&E reference directions used for rendering.
inline stain::StainMatrix reference_stains() {
    stain::StainMatrix m;
    m.col(0) = Eigen::Vector3d(0.65, 0.70, 0.29).normalized();
    m.col(1) = Eigen::Vector3d(0.07, 0.99, 0.11).normalized();
    return m;
}

/// Hematoxylin and eosin concentration of each tile tissue (TUM, LYM, MUC, other).
inline const std::array<std::array<double, 2>, 4>& tissue_concentrations() {
    static const std::array<std::array<double, 2>, 4> c{{{0.9, 0.6}, {1.2, 0.3}, {0.2, 0.4}, {0.4, 0.9}}};
    return c;
}

/// Additive RGB shift of a spot: project, glass and patient stain effects.
inline Eigen::Vector3d spot_shift(const CohortSpec& spec, const Directions& d, const std::string& project,
                                  const std::string& glass, const std::string& patient) {
    const auto& a = spec.amplitudes;
    Eigen::Vector3d v = a.project * d.project.at(project) + a.glass * d.glass.at(glass) + a.patient * d.patient.at(patient);
    return spec.image.shift_scale * v;
}

/// Disk of sector-shaped tissue regions on a white background. Sector
/// proportions follow the tissue weights; only the rotation is random.
/// MSI-H spots carry more nuclei blobs; batch effects shift stain colour
/// inside the disk.
inline SpotImage render_spot_image(const CohortSpec& spec, const Assignment& a, const Directions& d,
                                   const PatientAssignment& patient, const SpotAssignment& spot) {
    const auto& g = spec.image;
    const int n = g.spot_px;
    const double cx = (n - 1) / 2.0;
    const double cy = (n - 1) / 2.0;
    const double r2 = static_cast<double>(g.disk_radius_px) * g.disk_radius_px;
    Rng rng = make_rng(spec.seed, "spot/" + spot.spot_id);
    const double rotation = uniform01(rng);

    std::array<double, 4> cum{};
    double total = 0.0;
    for (std::size_t i = 0; i < 4; ++i) total += spec.tissue_weights[i];
    double acc = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        acc += spec.tissue_weights[i] / total;
        cum[i] = acc;
    }

    SpotImage out{image::RgbImage(n, n, 255), image::GrayImage(n, n, 0)};
    Eigen::Matrix<double, Eigen::Dynamic, 2> conc = Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(
        static_cast<Eigen::Index>(n) * n, 2);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            if (dx * dx + dy * dy > r2) continue;
            double f = std::atan2(dy, dx) / (2.0 * 3.14159265358979323846) + 0.5 + rotation;
            f -= std::floor(f);
            std::size_t t = 0;
            while (t < 3 && (f >= cum[t] || spec.tissue_weights[t] <= 0.0)) ++t;
            out.mask.at(x, y) = static_cast<std::uint8_t>(tile_tissues[t]);
            const auto& base = tissue_concentrations()[t];
            const auto i = static_cast<Eigen::Index>(y) * n + x;
            for (int s = 0; s < 2; ++s) {
                conc(i, s) = base[static_cast<std::size_t>(s)] * std::exp(0.1 * spec.amplitudes.noise * standard_normal(rng));
            }
        }
    }

    const double disk_area = 3.14159265358979323846 * r2;
    const double density = g.blob_density * (patient.label == ClassLabel::msi_h ? 1.0 + spec.amplitudes.cls : 1.0);
    const auto blobs = static_cast<long>(std::lround(density * disk_area / 1e4));
    constexpr int blob_radius = 3;
    for (long b = 0; b < blobs; ++b) {
        const double rr = g.disk_radius_px * std::sqrt(uniform01(rng));
        const double th = 2.0 * 3.14159265358979323846 * uniform01(rng);
        const int bx = static_cast<int>(std::lround(cx + rr * std::cos(th)));
        const int by = static_cast<int>(std::lround(cy + rr * std::sin(th)));
        for (int y = by - blob_radius; y <= by + blob_radius; ++y) {
            for (int x = bx - blob_radius; x <= bx + blob_radius; ++x) {
                if (x < 0 || y < 0 || x >= n || y >= n) continue;
                if ((x - bx) * (x - bx) + (y - by) * (y - by) > blob_radius * blob_radius) continue;
                if (out.mask.at(x, y) == 0) continue;
                conc(static_cast<Eigen::Index>(y) * n + x, 0) = 1.6;
            }
        }
    }

    const auto& project = spec.projects[patient.project].id;
    const auto& glass = a.glass_ids[patient.project][spot.glass];
    const Eigen::Vector3d shift = spot_shift(spec, d, project, glass, patient.patient_id);
    const image::RgbImage stained = stain::compose_stains(reference_stains(), conc, n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            if (out.mask.at(x, y) == 0) continue;
            for (int c = 0; c < 3; ++c) {
                const double v = stained.at(x, y, c) + shift(c);
                out.image.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

/// Renders one spot of the cohort described by `spec`.
inline SpotImage render_spot_image(const CohortSpec& spec, const std::string& patient_id, const std::string& spot_id) {
    if (spec.mode != PayloadMode::spot_image) {
        fail(ErrorKind::config, "cohort.mode: spot rendering needs mode 'spot-image'");
    }
    validate(spec);
    const Assignment a = assign_patients(spec);
    const auto& p = a.patient(patient_id);
    for (const auto& s : p.spots) {
        if (s.spot_id == spot_id) {
            return render_spot_image(spec, a, make_directions(spec, a, 3), p, s);
        }
    }
    fail(ErrorKind::domain, "patient '" + patient_id + "' has no spot '" + spot_id + "'");
}

struct SpotTile {
    image::RgbImage image;
    Tissue tissue = Tissue::tum;
    Magnification magnification = Magnification::x40;
    int row = 0;
    int col = 0;
};

/// Pyramid, grid tiling and mask-majority ROI filtering of one spot.
inline std::vector<SpotTile> spot_tiles(const SpotImage& spot, int tile_px, const std::set<Tissue>& keep) {
    const auto pyramid = stain::build_pyramid(spot.image, tile_px);
    std::vector<SpotTile> out;
    for (const auto& level : pyramid.levels) {
        std::vector<stain::RoiCandidate> candidates;
        for (auto& t : stain::extract_tiles(level.image, tile_px)) {
            candidates.push_back({std::move(t), std::nullopt});
        }
        for (auto& c : stain::filter_roi(std::move(candidates), keep, &spot.mask, &level)) {
            out.push_back({std::move(c.tile.image), *c.label, level.magnification, c.tile.box.row, c.tile.box.col});
        }
    }
    return out;
}

inline std::string tile_file_name(const std::string& patient, const std::string& spot, Magnification m, int row, int col) {
    return patient + "_" + spot + "_" + std::string(to_string(m)) + "_" + std::to_string(row) + "_" + std::to_string(col) +
           ".png";
}

inline std::string tile_file_name(const TileRecord& r, int row, int col) {
    return tile_file_name(r.patient_id, r.spot_id, r.magnification, row, col);
}

} // namespace debias::synth
