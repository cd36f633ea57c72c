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
#include "debias/synth/cohort.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace debias::synth {

/// Integer codes of a categorical tile variable; `categories[code]` is the
/// original value, sorted.
struct CategoryCodes {
    std::vector<int> codes;
    std::vector<std::string> categories;

    [[nodiscard]] int code_of(const std::string& value) const {
        const auto it = std::lower_bound(categories.begin(), categories.end(), value);
        if (it == categories.end() || *it != value) {
            fail(ErrorKind::domain, "unknown category '" + value + "'");
        }
        return static_cast<int>(it - categories.begin());
    }
};

inline const std::vector<std::string>& known_variables() {
    static const std::vector<std::string> v{"label", "project", "patient", "glass", "spot", "tissue", "magnification"};
    return v;
}

inline std::string variable_value(const TileRecord& t, std::string_view variable) {
    if (variable == "label") return std::string(to_string(t.label));
    if (variable == "project") return t.project_id;
    if (variable == "patient") return t.patient_id;
    if (variable == "glass") return t.glass_id;
    if (variable == "spot") return t.spot_id;
    if (variable == "tissue") return std::string(to_string(t.tissue));
    if (variable == "magnification") return std::string(to_string(t.magnification));
    fail(ErrorKind::config, "unknown tile variable '" + std::string(variable) + "'");
}

inline CategoryCodes category_codes(const std::vector<TileRecord>& tiles, std::string_view variable) {
    CategoryCodes out;
    std::vector<std::string> values;
    values.reserve(tiles.size());
    for (const auto& t : tiles) {
        values.push_back(variable_value(t, variable));
    }
    out.categories = values;
    std::sort(out.categories.begin(), out.categories.end());
    out.categories.erase(std::unique(out.categories.begin(), out.categories.end()), out.categories.end());
    out.codes.reserve(values.size());
    for (const auto& v : values) {
        out.codes.push_back(static_cast<int>(std::lower_bound(out.categories.begin(), out.categories.end(), v) -
                                             out.categories.begin()));
    }
    return out;
}

inline CategoryCodes category_codes(const Cohort& c, std::string_view variable) { return category_codes(c.tiles, variable); }

inline std::vector<int> class_codes(const std::vector<TileRecord>& tiles) {
    std::vector<int> y;
    y.reserve(tiles.size());
    for (const auto& t : tiles) y.push_back(static_cast<int>(t.label));
    return y;
}

/// Block-average downsample of a tile to `px` square, flattened RGB.
inline void pooled_pixels(const image::RgbImage& img, int px, Eigen::Ref<RowVector> out) {
    for (int oy = 0; oy < px; ++oy) {
        const int y0 = oy * img.height / px;
        const int y1 = std::max(y0 + 1, (oy + 1) * img.height / px);
        for (int ox = 0; ox < px; ++ox) {
            const int x0 = ox * img.width / px;
            const int x1 = std::max(x0 + 1, (ox + 1) * img.width / px);
            std::array<double, 3> sum{};
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    for (int c = 0; c < 3; ++c) sum[static_cast<std::size_t>(c)] += img.at(x, y, c);
                }
            }
            const double area = static_cast<double>((y1 - y0) * (x1 - x0));
            for (int c = 0; c < 3; ++c) {
                out((oy * px + ox) * 3 + c) = sum[static_cast<std::size_t>(c)] / area;
            }
        }
    }
}

/// Network input per tile. Spot-image tiles are block-averaged to
/// `image_px` square and flattened as RGB in [-0.5, 0.5].
inline Matrix design_matrix(const Cohort& c, int image_px = 8) {
    if (c.mode() == PayloadMode::features) {
        Matrix x(static_cast<Eigen::Index>(c.tiles.size()), c.features.cols());
        for (std::size_t i = 0; i < c.tiles.size(); ++i) {
            x.row(static_cast<Eigen::Index>(i)) =
                c.features.row(static_cast<Eigen::Index>(c.tiles[i].payload_index)).cast<double>();
        }
        return x;
    }
    if (image_px < 1) {
        fail(ErrorKind::config, "image_input_px must be at least 1");
    }
    const Eigen::Index cols = 3 * static_cast<Eigen::Index>(image_px) * image_px;
    Matrix x(static_cast<Eigen::Index>(c.tiles.size()), cols);
    RowVector row(cols);
    for (std::size_t i = 0; i < c.tiles.size(); ++i) {
        pooled_pixels(c.tile_images.at(c.tiles[i].payload_index), image_px, row);
        x.row(static_cast<Eigen::Index>(i)) = row.array() / 255.0 - 0.5;
    }
    return x;
}

} // namespace debias::synth
