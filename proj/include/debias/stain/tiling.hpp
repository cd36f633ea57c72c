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
#include "debias/core/labels.hpp"
#include "debias/image/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace debias::stain {

using image::GrayImage;
using image::RgbImage;

/// Bilinear resampling with half-pixel centers and edge clamping.
inline RgbImage resize_bilinear(const RgbImage& src, int out_w, int out_h) {
    if (src.width < 1 || src.height < 1 || out_w < 1 || out_h < 1) {
        fail(ErrorKind::size, "resize: empty image or target");
    }
    if (out_w == src.width && out_h == src.height) {
        return src;
    }
    RgbImage out(out_w, out_h);
    const double sx = static_cast<double>(src.width) / out_w;
    const double sy = static_cast<double>(src.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - wx) * src.at(x0, y0, c) + wx * src.at(x1, y0, c);
                const double bot = (1.0 - wx) * src.at(x0, y1, c) + wx * src.at(x1, y1, c);
                out.at(x, y, c) = static_cast<std::uint8_t>(std::lround((1.0 - wy) * top + wy * bot));
            }
        }
    }
    return out;
}

/// Square bilinear resize of a tile (default 224 px).
inline RgbImage resize_tile(const RgbImage& tile, int out_px = 224) {
    if (tile.width != tile.height) {
        fail(ErrorKind::size, "resize_tile: tile is " + std::to_string(tile.width) + "x" +
                                  std::to_string(tile.height) + ", expected square");
    }
    return resize_bilinear(tile, out_px, out_px);
}

/// 2x area-average downsample; an odd trailing row/column is dropped.
inline RgbImage downsample2(const RgbImage& src) {
    RgbImage out(src.width / 2, src.height / 2);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int s = src.at(2 * x, 2 * y, c) + src.at(2 * x + 1, 2 * y, c) + src.at(2 * x, 2 * y + 1, c) +
                              src.at(2 * x + 1, 2 * y + 1, c);
                out.at(x, y, c) = static_cast<std::uint8_t>((s + 2) / 4);
            }
        }
    }
    return out;
}

struct PyramidLevel {
    Magnification magnification = Magnification::x40;
    RgbImage image;
    /// Base pixels per level pixel along each axis.
    double scale_x = 1.0;
    double scale_y = 1.0;
};

/// Levels x40 (base), x20, x10, x5 by successive halving, and x0 as the
/// whole spot resized to one tile.
struct TilePyramid {
    std::vector<PyramidLevel> levels;

    [[nodiscard]] const PyramidLevel& level(Magnification m) const {
        for (const auto& l : levels) {
            if (l.magnification == m) return l;
        }
        fail(ErrorKind::contract, "pyramid has no level " + std::string(to_string(m)));
    }
};

inline TilePyramid build_pyramid(const RgbImage& spot, int tile_px) {
    if (spot.width < tile_px || spot.height < tile_px) {
        fail(ErrorKind::size, "build_pyramid: base " + std::to_string(spot.width) + "x" + std::to_string(spot.height) +
                                  " is smaller than tile size " + std::to_string(tile_px));
    }
    TilePyramid p;
    p.levels.push_back({Magnification::x40, spot, 1.0, 1.0});
    double scale = 1.0;
    for (auto m : {Magnification::x20, Magnification::x10, Magnification::x5}) {
        scale *= 2.0;
        p.levels.push_back({m, downsample2(p.levels.back().image), scale, scale});
    }
    p.levels.push_back({Magnification::x0, resize_bilinear(spot, tile_px, tile_px),
                        static_cast<double>(spot.width) / tile_px, static_cast<double>(spot.height) / tile_px});
    return p;
}

/// Tile window in level pixels, with its grid position.
struct TileBox {
    int x = 0;
    int y = 0;
    int size = 0;
    int row = 0;
    int col = 0;

    [[nodiscard]] bool overlaps(const TileBox& o) const noexcept {
        return x < o.x + o.size && o.x < x + size && y < o.y + o.size && o.y < y + size;
    }
};

struct Tile {
    RgbImage image;
    TileBox box;
};

/// Non-overlapping grid from the origin; partial edge tiles are dropped.
/// A level smaller than one tile yields no tiles.
inline std::vector<Tile> extract_tiles(const RgbImage& level, int tile_px) {
    if (tile_px < 16) {
        fail(ErrorKind::size, "extract_tiles: tile size " + std::to_string(tile_px) + " is below 16 px");
    }
    std::vector<Tile> tiles;
    const int rows = level.height / tile_px;
    const int cols = level.width / tile_px;
    tiles.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(std::max(cols, 0)));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            TileBox box{c * tile_px, r * tile_px, tile_px, r, c};
            tiles.push_back({image::crop(level, box.x, box.y, tile_px, tile_px), box});
        }
    }
    return tiles;
}

/// Most frequent mask label inside a base-image rectangle; ties go to the
/// lower palette index.
inline Tissue majority_label(const GrayImage& mask, int x0, int y0, int x1, int y1) {
    x0 = std::clamp(x0, 0, mask.width);
    x1 = std::clamp(x1, 0, mask.width);
    y0 = std::clamp(y0, 0, mask.height);
    y1 = std::clamp(y1, 0, mask.height);
    std::array<std::size_t, 5> counts{};
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            const auto v = mask.at(x, y);
            if (v >= counts.size()) {
                fail(ErrorKind::metadata, "mask value " + std::to_string(v) + " is not a tissue palette index");
            }
            ++counts[v];
        }
    }
    const auto it = std::max_element(counts.begin(), counts.end());
    return static_cast<Tissue>(std::distance(counts.begin(), it));
}

/// Mask label for a tile of a pyramid level, taken over the base-image
/// footprint of the tile.
inline Tissue tile_label(const GrayImage& mask, const PyramidLevel& level, const TileBox& box) {
    if (level.magnification == Magnification::x0) {
        return majority_label(mask, 0, 0, mask.width, mask.height);
    }
    const int x0 = static_cast<int>(std::lround(box.x * level.scale_x));
    const int y0 = static_cast<int>(std::lround(box.y * level.scale_y));
    const int x1 = static_cast<int>(std::lround((box.x + box.size) * level.scale_x));
    const int y1 = static_cast<int>(std::lround((box.y + box.size) * level.scale_y));
    return majority_label(mask, x0, y0, x1, y1);
}

inline const std::set<Tissue>& default_roi() {
    static const std::set<Tissue> keep{Tissue::tum, Tissue::lym, Tissue::muc};
    return keep;
}

struct RoiCandidate {
    Tile tile;
    std::optional<Tissue> label;
};

/// Keeps candidates whose label is in `keep`. Labels missing on a
/// candidate are derived from `mask` at `level`; background tiles are
/// always discarded.
inline std::vector<RoiCandidate> filter_roi(std::vector<RoiCandidate> candidates, const std::set<Tissue>& keep,
                                            const GrayImage* mask = nullptr, const PyramidLevel* level = nullptr) {
    std::vector<RoiCandidate> out;
    for (auto& c : candidates) {
        if (!c.label) {
            if (mask == nullptr || level == nullptr) {
                fail(ErrorKind::metadata, "filter_roi: tile at row " + std::to_string(c.tile.box.row) + ", col " +
                                              std::to_string(c.tile.box.col) + " has neither a label nor a mask");
            }
            c.label = tile_label(*mask, *level, c.tile.box);
        }
        if (*c.label == Tissue::background) {
            continue;
        }
        if (keep.contains(*c.label)) {
            out.push_back(std::move(c));
        }
    }
    return out;
}

} // namespace debias::stain
