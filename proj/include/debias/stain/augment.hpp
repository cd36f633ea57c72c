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
#include "debias/image/image.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace debias::stain {

struct AugmentConfig {
    double max_rotation_deg = 90.0;
    double flip_probability = 0.5;
    double max_warp = 0.2;  // corner displacement as a fraction of the half-size
    double max_hue = 0.15;  // hue shift in [0, 1) hue units
};

struct Hsv {
    double h = 0.0;  // [0, 1)
    double s = 0.0;
    double v = 0.0;
};

inline Hsv rgb_to_hsv(double r, double g, double b) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    Hsv out{0.0, mx > 0.0 ? d / mx : 0.0, mx};
    if (d > 0.0) {
        double h = 0.0;
        if (mx == r) {
            h = (g - b) / d;
        } else if (mx == g) {
            h = 2.0 + (b - r) / d;
        } else {
            h = 4.0 + (r - g) / d;
        }
        h /= 6.0;
        out.h = h < 0.0 ? h + 1.0 : h;
    }
    return out;
}

inline std::array<double, 3> hsv_to_rgb(const Hsv& c) {
    if (c.s <= 0.0) {
        return {c.v, c.v, c.v};
    }
    const double h6 = (c.h - std::floor(c.h)) * 6.0;
    const int sector = static_cast<int>(std::floor(h6)) % 6;
    const double f = h6 - std::floor(h6);
    const double p = c.v * (1.0 - c.s);
    const double q = c.v * (1.0 - c.s * f);
    const double t = c.v * (1.0 - c.s * (1.0 - f));
    switch (sector) {
    case 0: return {c.v, t, p};
    case 1: return {q, c.v, p};
    case 2: return {p, c.v, t};
    case 3: return {p, q, c.v};
    case 4: return {t, p, c.v};
    default: return {c.v, p, q};
    }
}

inline image::RgbImage shift_hue(const image::RgbImage& img, double delta) {
    image::RgbImage out = img;
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const std::size_t o = i * 3;
        Hsv c = rgb_to_hsv(img.data[o] / 255.0, img.data[o + 1] / 255.0, img.data[o + 2] / 255.0);
        c.h = c.h + delta;
        c.h -= std::floor(c.h);
        const auto rgb = hsv_to_rgb(c);
        for (int k = 0; k < 3; ++k) {
            out.data[o + static_cast<std::size_t>(k)] =
                static_cast<std::uint8_t>(std::clamp(std::lround(rgb[static_cast<std::size_t>(k)] * 255.0), 0L, 255L));
        }
    }
    return out;
}

/// One of the eight symmetries of the square; 0 is the identity.
inline image::RgbImage dihedral(const image::RgbImage& img, int op) {
    if (op == 0) {
        return img;
    }
    if (img.width != img.height) {
        fail(ErrorKind::size, "dihedral transforms need a square tile");
    }
    const int n = img.width;
    image::RgbImage out(n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            int sx = x;
            int sy = y;
            switch (op) {
            case 1: sx = n - 1 - x; break;                   // horizontal flip
            case 2: sy = n - 1 - y; break;                   // vertical flip
            case 3: sx = n - 1 - x; sy = n - 1 - y; break;   // 180
            case 4: sx = y; sy = x; break;                   // transpose
            case 5: sx = n - 1 - y; sy = x; break;           // 90
            case 6: sx = y; sy = n - 1 - x; break;           // 270
            default: sx = n - 1 - y; sy = n - 1 - x; break;  // anti-transpose
            }
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = img.at(sx, sy, c);
            }
        }
    }
    return out;
}

namespace detail {

/// Homography taking `from[i]` to `to[i]` for four point pairs.
inline Eigen::Matrix3d homography(const std::array<Eigen::Vector2d, 4>& from, const std::array<Eigen::Vector2d, 4>& to) {
    Eigen::Matrix<double, 8, 8> a;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const double x = from[static_cast<std::size_t>(i)].x();
        const double y = from[static_cast<std::size_t>(i)].y();
        const double u = to[static_cast<std::size_t>(i)].x();
        const double v = to[static_cast<std::size_t>(i)].y();
        a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
        a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
        b(2 * i) = u;
        b(2 * i + 1) = v;
    }
    const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
    Eigen::Matrix3d m;
    m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
    return m;
}

inline double reflect(double c, int n) {
    if (n == 1) return 0.0;
    const double period = 2.0 * (n - 1);
    c = std::fmod(std::abs(c), period);
    return c > n - 1 ? period - c : c;
}

} // namespace detail

/// Bilinear resample where output pixel centre p reads input location
/// `map(p)`; out-of-range reads reflect at the border.
template <class Map>
image::RgbImage remap(const image::RgbImage& img, Map&& map) {
    image::RgbImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const Eigen::Vector2d src = map(Eigen::Vector2d(x, y));
            const double fx = detail::reflect(src.x(), img.width);
            const double fy = detail::reflect(src.y(), img.height);
            const int x0 = std::min(static_cast<int>(std::floor(fx)), img.width - 1);
            const int y0 = std::min(static_cast<int>(std::floor(fy)), img.height - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const int y1 = std::min(y0 + 1, img.height - 1);
            const double wx = fx - x0;
            const double wy = fy - y0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
                const double bot = (1.0 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
                out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround((1.0 - wy) * top + wy * bot), 0L, 255L));
            }
        }
    }
    return out;
}

/// Seeded training-time augmentation: dihedral flip, rotation, perspective
/// warp, hue shift. All draws happen regardless of which operations are
/// enabled, so toggling one operation leaves the others' draws unchanged.
/// Output dimensions equal input dimensions.
inline image::RgbImage augment(const image::RgbImage& tile, const AugmentConfig& cfg, std::uint64_t seed) {
    Rng rng = make_rng(seed, "augment");
    const bool do_flip = uniform01(rng) < cfg.flip_probability;
    const int flip_op = 1 + static_cast<int>(uniform01(rng) * 7.0) % 7;
    const double angle = uniform(rng, 0.0, cfg.max_rotation_deg) * 3.14159265358979323846 / 180.0;
    std::array<Eigen::Vector2d, 4> jitter;
    for (auto& j : jitter) {
        const double jx = uniform(rng, -cfg.max_warp, cfg.max_warp);
        const double jy = uniform(rng, -cfg.max_warp, cfg.max_warp);
        j = Eigen::Vector2d(jx, jy);
    }
    const double hue = uniform(rng, -cfg.max_hue, cfg.max_hue);

    image::RgbImage out = tile;
    if (do_flip && tile.width == tile.height) {
        out = dihedral(out, flip_op);
    }
    const bool rotate = cfg.max_rotation_deg > 0.0 && angle != 0.0;
    const bool warp = cfg.max_warp > 0.0;
    if (rotate || warp) {
        const double cx = (out.width - 1) / 2.0;
        const double cy = (out.height - 1) / 2.0;
        const double hw = out.width / 2.0;
        const double hh = out.height / 2.0;
        Eigen::Matrix3d h = Eigen::Matrix3d::Identity();
        if (warp) {
            std::array<Eigen::Vector2d, 4> corners{Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, -1),
                                                   Eigen::Vector2d(1, 1), Eigen::Vector2d(-1, 1)};
            std::array<Eigen::Vector2d, 4> moved;
            for (std::size_t i = 0; i < 4; ++i) {
                moved[i] = corners[i] + jitter[i];
            }
            h = detail::homography(corners, moved);
        }
        const double ca = std::cos(angle);
        const double sa = std::sin(angle);
        out = remap(out, [&](const Eigen::Vector2d& p) {
            // Normalized coords in [-1, 1], warp, then inverse rotation.
            const Eigen::Vector3d q = h * Eigen::Vector3d((p.x() - cx) / hw, (p.y() - cy) / hh, 1.0);
            const double u = q.x() / q.z();
            const double v = q.y() / q.z();
            const double ru = ca * u + sa * v;
            const double rv = -sa * u + ca * v;
            return Eigen::Vector2d(ru * hw + cx, rv * hh + cy);
        });
    }
    if (cfg.max_hue > 0.0 && hue != 0.0) {
        out = shift_hue(out, hue);
    }
    return out;
}

} // namespace debias::stain
