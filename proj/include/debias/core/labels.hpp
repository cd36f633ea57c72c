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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace debias {

enum class ClassLabel : std::uint8_t { mss = 0, msi_h = 1 };

/// Tissue classes; `background` appears only in masks. The numeric values
/// are the palette indices used in mask images.
enum class Tissue : std::uint8_t { background = 0, tum = 1, lym = 2, muc = 3, other = 4 };

enum class Magnification : std::uint8_t { x40 = 0, x20 = 1, x10 = 2, x5 = 3, x0 = 4 };

inline constexpr std::array<Magnification, 5> all_magnifications{Magnification::x40, Magnification::x20,
                                                                 Magnification::x10, Magnification::x5,
                                                                 Magnification::x0};
inline constexpr std::array<Tissue, 4> tile_tissues{Tissue::tum, Tissue::lym, Tissue::muc, Tissue::other};

constexpr std::string_view to_string(ClassLabel l) noexcept { return l == ClassLabel::mss ? "MSS" : "MSI-H"; }

constexpr std::string_view to_string(Tissue t) noexcept {
    switch (t) {
    case Tissue::background: return "background";
    case Tissue::tum: return "TUM";
    case Tissue::lym: return "LYM";
    case Tissue::muc: return "MUC";
    case Tissue::other: return "other";
    }
    return "other";
}

constexpr std::string_view to_string(Magnification m) noexcept {
    switch (m) {
    case Magnification::x40: return "x40";
    case Magnification::x20: return "x20";
    case Magnification::x10: return "x10";
    case Magnification::x5: return "x5";
    case Magnification::x0: return "x0";
    }
    return "x0";
}

inline std::optional<ClassLabel> try_parse_label(std::string_view s) {
    if (s == "MSS") return ClassLabel::mss;
    if (s == "MSI-H") return ClassLabel::msi_h;
    return std::nullopt;
}

inline std::optional<Tissue> try_parse_tissue(std::string_view s) {
    for (auto t : {Tissue::background, Tissue::tum, Tissue::lym, Tissue::muc, Tissue::other}) {
        if (s == to_string(t)) return t;
    }
    return std::nullopt;
}

inline std::optional<Magnification> try_parse_magnification(std::string_view s) {
    for (auto m : all_magnifications) {
        if (s == to_string(m)) return m;
    }
    return std::nullopt;
}

inline ClassLabel parse_label(std::string_view s) {
    if (auto l = try_parse_label(s)) return *l;
    fail(ErrorKind::parse, "unknown class label '" + std::string(s) + "' (expected MSS or MSI-H)");
}

inline Tissue parse_tissue(std::string_view s) {
    if (auto t = try_parse_tissue(s)) return *t;
    fail(ErrorKind::parse, "unknown tissue '" + std::string(s) + "'");
}

inline Magnification parse_magnification(std::string_view s) {
    if (auto m = try_parse_magnification(s)) return *m;
    fail(ErrorKind::parse, "unknown magnification '" + std::string(s) + "'");
}

} // namespace debias
