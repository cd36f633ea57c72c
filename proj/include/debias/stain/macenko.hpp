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
#include "debias/image/image.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace debias::stain {

using StainMatrix = Eigen::Matrix<double, 3, 2>;

/// Optical density per pixel (rows) and channel (cols):
/// OD = -log10((I + 1) / 256).
inline Eigen::Matrix<double, Eigen::Dynamic, 3> rgb_to_od(const image::RgbImage& img) {
    Eigen::Matrix<double, Eigen::Dynamic, 3> od(static_cast<Eigen::Index>(img.pixel_count()), 3);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const double v = img.data[i * 3 + static_cast<std::size_t>(c)];
            od(static_cast<Eigen::Index>(i), c) = -std::log10((v + 1.0) / 256.0);
        }
    }
    return od;
}

inline std::uint8_t od_to_intensity(double od) {
    const double v = 256.0 * std::pow(10.0, -od) - 1.0;
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

inline image::RgbImage od_to_rgb(const Eigen::Matrix<double, Eigen::Dynamic, 3>& od, int width, int height) {
    if (od.rows() != static_cast<Eigen::Index>(width) * height) {
        fail(ErrorKind::size, "od_to_rgb: pixel count does not match dimensions");
    }
    image::RgbImage img(width, height);
    for (Eigen::Index i = 0; i < od.rows(); ++i) {
        for (int c = 0; c < 3; ++c) {
            img.data[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(c)] = od_to_intensity(od(i, c));
        }
    }
    return img;
}

/// Linear-interpolated percentile, q in [0, 100].
inline double percentile(std::vector<double> values, double q) {
    if (values.empty()) {
        fail(ErrorKind::empty_input, "percentile of an empty set");
    }
    std::sort(values.begin(), values.end());
    const double pos = (q / 100.0) * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double f = pos - static_cast<double>(lo);
    return values[lo] + f * (values[hi] - values[lo]);
}

/// Hematoxylin (column 0) and eosin (column 1) OD directions plus the
/// per-stain reference concentration.
struct StainProfile {
    StainMatrix stain_matrix = StainMatrix::Zero();
    std::array<double, 2> max_concentrations{0.0, 0.0};
};

struct MacenkoOptions {
    double od_threshold = 0.15;         // beta
    double angle_percentile = 1.0;      // alpha, in percent
    double concentration_percentile = 99.0;
    std::size_t min_tissue_pixels = 100;
};

/// Least-squares stain concentrations, one row per pixel.
inline Eigen::Matrix<double, Eigen::Dynamic, 2> concentrations(const Eigen::Matrix<double, Eigen::Dynamic, 3>& od,
                                                               const StainMatrix& stains) {
    const Eigen::Matrix2d gram = stains.transpose() * stains;
    const Eigen::Matrix<double, 2, 3> pinv = gram.inverse() * stains.transpose();
    return od * pinv.transpose();
}

inline double angle_between_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
    return std::acos(c) * 180.0 / 3.14159265358979323846;
}

/// Macenko estimate: tissue OD pixels are projected on the plane of their
/// two leading singular directions; the alpha and (100 - alpha) percentile
/// angles give the two stain vectors. Hematoxylin is the vector with the
/// larger blue-channel OD.
inline StainProfile estimate_stain_matrix(const image::RgbImage& img, const MacenkoOptions& opt = {}) {
    const auto od = rgb_to_od(img);
    std::vector<Eigen::Index> tissue;
    for (Eigen::Index i = 0; i < od.rows(); ++i) {
        if (od.row(i).norm() > opt.od_threshold) {
            tissue.push_back(i);
        }
    }
    if (tissue.size() < opt.min_tissue_pixels) {
        fail(ErrorKind::estimation, "stain estimation: " + std::to_string(tissue.size()) +
                                        " tissue pixels above OD threshold, need " +
                                        std::to_string(opt.min_tissue_pixels));
    }
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (auto i : tissue) {
        const Eigen::RowVector3d r = od.row(i);
        scatter += r.transpose() * r;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(scatter);
    const Eigen::Vector3d ev = solver.eigenvalues();
    if (!(ev(2) > 0.0) || ev(1) / ev(2) < 1e-10) {
        fail(ErrorKind::degenerate_stain, "stain estimation: optical densities span fewer than two directions");
    }
    Eigen::Vector3d v1 = solver.eigenvectors().col(2);
    Eigen::Vector3d v2 = solver.eigenvectors().col(1);
    if (v1.sum() < 0.0) v1 = -v1;
    if (v2.sum() < 0.0) v2 = -v2;

    std::vector<double> angles;
    angles.reserve(tissue.size());
    for (auto i : tissue) {
        const Eigen::Vector3d r = od.row(i).transpose();
        angles.push_back(std::atan2(r.dot(v2), r.dot(v1)));
    }
    const double lo = percentile(angles, opt.angle_percentile);
    const double hi = percentile(angles, 100.0 - opt.angle_percentile);

    auto direction = [&](double phi) {
        Eigen::Vector3d v = v1 * std::cos(phi) + v2 * std::sin(phi);
        if (v.sum() < 0.0) v = -v;
        v = v.cwiseMax(0.0);
        return Eigen::Vector3d(v.normalized());
    };
    Eigen::Vector3d a = direction(lo);
    Eigen::Vector3d b = direction(hi);
    if (a(2) < b(2)) {
        std::swap(a, b);
    }
    StainProfile profile;
    profile.stain_matrix.col(0) = a;
    profile.stain_matrix.col(1) = b;
    if (angle_between_deg(a, b) < 1e-6) {
        fail(ErrorKind::degenerate_stain, "stain estimation: stain vectors coincide");
    }

    const auto conc = concentrations(od, profile.stain_matrix);
    for (int s = 0; s < 2; ++s) {
        std::vector<double> col(conc.col(s).data(), conc.col(s).data() + conc.rows());
        profile.max_concentrations[static_cast<std::size_t>(s)] = percentile(std::move(col), opt.concentration_percentile);
    }
    if (!(profile.max_concentrations[0] > 0.0) || !(profile.max_concentrations[1] > 0.0)) {
        fail(ErrorKind::estimation, "stain estimation: non-positive reference concentration");
    }
    return profile;
}

/// Re-expresses `img` in the target stain basis with concentrations
/// rescaled to the target reference values.
inline image::RgbImage normalize_macenko(const image::RgbImage& img, const StainProfile& target,
                                         const MacenkoOptions& opt = {}) {
    const StainProfile source = estimate_stain_matrix(img, opt);
    const auto od = rgb_to_od(img);
    auto conc = concentrations(od, source.stain_matrix);
    for (int s = 0; s < 2; ++s) {
        conc.col(s) *= target.max_concentrations[static_cast<std::size_t>(s)] /
                       source.max_concentrations[static_cast<std::size_t>(s)];
    }
    const Eigen::Matrix<double, Eigen::Dynamic, 3> out = conc * target.stain_matrix.transpose();
    return od_to_rgb(out, img.width, img.height);
}

/// Rendered image from a stain matrix and per-pixel concentrations
/// (rows = pixels). Used by the synthetic renderer and by tests.
inline image::RgbImage compose_stains(const StainMatrix& stains, const Eigen::Matrix<double, Eigen::Dynamic, 2>& conc,
                                      int width, int height) {
    return od_to_rgb(conc * stains.transpose(), width, height);
}

} // namespace debias::stain
