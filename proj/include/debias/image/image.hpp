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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace debias::image {

/// Interleaved 8-bit image with `channels` samples per pixel (1 or 3).
template <int Channels>
struct Image {
    static_assert(Channels == 1 || Channels == 3);
    static constexpr int channels = Channels;

    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    Image() = default;
    Image(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * Channels, fill) {
        if (w < 0 || h < 0) {
            fail(ErrorKind::size, "image dimensions must be non-negative");
        }
    }

    [[nodiscard]] std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }

    [[nodiscard]] std::size_t offset(int x, int y) const noexcept {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * Channels;
    }

    std::uint8_t& at(int x, int y, int c = 0) noexcept { return data[offset(x, y) + static_cast<std::size_t>(c)]; }
    [[nodiscard]] std::uint8_t at(int x, int y, int c = 0) const noexcept {
        return data[offset(x, y) + static_cast<std::size_t>(c)];
    }

    friend bool operator==(const Image&, const Image&) = default;
};

using RgbImage = Image<3>;
using GrayImage = Image<1>;

/// Copy of the w x h window whose top-left corner is (x0, y0).
template <int C>
Image<C> crop(const Image<C>& src, int x0, int y0, int w, int h) {
    if (x0 < 0 || y0 < 0 || x0 + w > src.width || y0 + h > src.height) {
        fail(ErrorKind::size, "crop window outside image");
    }
    Image<C> out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < C; ++c) {
                out.at(x, y, c) = src.at(x0 + x, y0 + y, c);
            }
        }
    }
    return out;
}

/// Per-channel mean over all pixels.
inline std::array<double, 3> mean_rgb(const RgbImage& img) {
    std::array<double, 3> m{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) {
            m[static_cast<std::size_t>(c)] += img.data[i * 3 + static_cast<std::size_t>(c)];
        }
    }
    for (auto& v : m) {
        v /= static_cast<double>(std::max<std::size_t>(img.pixel_count(), 1));
    }
    return m;
}

inline double mean_absolute_error(const RgbImage& a, const RgbImage& b) {
    if (a.width != b.width || a.height != b.height) {
        fail(ErrorKind::size, "mean_absolute_error: image sizes differ");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        s += std::abs(static_cast<int>(a.data[i]) - static_cast<int>(b.data[i]));
    }
    return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

} // namespace debias::image
