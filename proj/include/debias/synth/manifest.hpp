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

#include "debias/core/binary_io.hpp"
#include "debias/core/error.hpp"
#include "debias/core/labels.hpp"
#include "debias/image/png.hpp"
#include "debias/synth/cohort.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace debias::synth {

namespace fs = std::filesystem;

inline constexpr std::string_view manifest_header =
    "tile_id,patient_id,spot_id,glass_id,project_id,label,tissue,magnification,payload_ref";

inline constexpr std::array<std::string_view, 9> manifest_columns{
    "tile_id", "patient_id", "spot_id", "glass_id", "project_id", "label", "tissue", "magnification", "payload_ref"};

inline std::string manifest_csv(const std::vector<TileRecord>& tiles) {
    std::string out(manifest_header);
    out += '\n';
    for (const auto& t : tiles) {
        out += t.tile_id + ',' + t.patient_id + ',' + t.spot_id + ',' + t.glass_id + ',' + t.project_id + ',' +
               std::string(to_string(t.label)) + ',' + std::string(to_string(t.tissue)) + ',' +
               std::string(to_string(t.magnification)) + ',' + t.payload_ref + '\n';
    }
    return out;
}

/// Splits one CSV line on commas; fields carry no quoting.
inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        fields.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

/// Parses a manifest. Errors name `source`, the 1-based line and column.
inline std::vector<TileRecord> parse_manifest(std::string_view text, const std::string& source = "manifest.csv") {
    std::vector<TileRecord> tiles;
    std::set<std::string> ids;
    std::size_t line_no = 0;
    std::size_t start = 0;
    bool header_seen = false;
    auto error = [&](std::size_t col, const std::string& why) {
        fail(ErrorKind::parse, source + ": line " + std::to_string(line_no) + ", column " + std::to_string(col) + " (" +
                                   std::string(manifest_columns[col - 1]) + "): " + why);
    };
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!header_seen) {
            if (line != manifest_header) {
                fail(ErrorKind::parse, source + ": line 1, column 1: expected header '" + std::string(manifest_header) + "'");
            }
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != manifest_columns.size()) {
            fail(ErrorKind::parse, source + ": line " + std::to_string(line_no) + ", column " +
                                       std::to_string(std::min(f.size(), manifest_columns.size()) + 1) + ": expected " +
                                       std::to_string(manifest_columns.size()) + " fields, found " +
                                       std::to_string(f.size()));
        }
        for (std::size_t k = 0; k < f.size(); ++k) {
            if (f[k].empty()) error(k + 1, "empty field");
        }
        TileRecord r;
        r.tile_id = f[0];
        r.patient_id = f[1];
        r.spot_id = f[2];
        r.glass_id = f[3];
        r.project_id = f[4];
        const auto label = try_parse_label(f[5]);
        if (!label) error(6, "unknown label '" + f[5] + "'");
        r.label = *label;
        const auto tissue = try_parse_tissue(f[6]);
        if (!tissue || *tissue == Tissue::background) error(7, "unknown tissue '" + f[6] + "'");
        r.tissue = *tissue;
        const auto mag = try_parse_magnification(f[7]);
        if (!mag) error(8, "unknown magnification '" + f[7] + "'");
        r.magnification = *mag;
        r.payload_ref = f[8];
        if (!ids.insert(r.tile_id).second) error(1, "duplicate tile_id '" + r.tile_id + "'");
        tiles.push_back(std::move(r));
    }
    if (!header_seen) {
        fail(ErrorKind::parse, source + ": line 1, column 1: missing header");
    }
    return tiles;
}

/// Checks the per-patient invariants of a tile list.
inline void check_patient_consistency(const std::vector<TileRecord>& tiles, const std::string& source) {
    std::map<std::string, const TileRecord*> first;
    for (const auto& t : tiles) {
        const auto [it, inserted] = first.emplace(t.patient_id, &t);
        if (!inserted && (it->second->label != t.label || it->second->project_id != t.project_id)) {
            fail(ErrorKind::parse, source + ": tile " + t.tile_id + " disagrees with patient " + t.patient_id +
                                       " on label or project");
        }
    }
}

/// Writes `cohort.json`, `manifest.csv` and either `payloads.bin` or the
/// PNG tiles under `tiles/`.
inline void save_cohort(const Cohort& c, const fs::path& dir) {
    fs::create_directories(dir);
    io::write_text_atomic(dir / "cohort.json", to_json(c.spec).dump(2) + "\n");
    io::write_text_atomic(dir / "manifest.csv", manifest_csv(c.tiles));
    if (c.mode() == PayloadMode::features) {
        io::write_file_atomic(dir / "payloads.bin", io::encode_matrix(c.features));
    } else {
        fs::create_directories(dir / "tiles");
        for (const auto& t : c.tiles) {
            image::write_png(dir / t.payload_ref, c.tile_images.at(t.payload_index));
        }
    }
}

/// Reads a cohort directory. Generator directions are not stored and stay
/// empty; without `cohort.json` the generator settings keep their defaults
/// apart from the payload mode.
inline Cohort load_cohort(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.csv")) {
        fail(ErrorKind::missing_artifact, "cohort manifest not found: " + (dir / "manifest.csv").string());
    }
    Cohort c;
    const std::string source = (dir / "manifest.csv").string();
    c.tiles = parse_manifest(io::read_text(dir / "manifest.csv"), source);
    check_patient_consistency(c.tiles, source);
    if (fs::exists(dir / "cohort.json")) {
        const auto spec_text = io::read_text(dir / "cohort.json");
        try {
            c.spec = cohort_spec_from_json(nlohmann::json::parse(spec_text));
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorKind::parse, (dir / "cohort.json").string() + ": " + e.what());
        }
    } else {
        // Preprocessed directories carry no generator spec; the payload
        // kind follows from the manifest.
        const bool features = !c.tiles.empty() && c.tiles.front().payload_ref.rfind("payloads.bin#", 0) == 0;
        c.spec.mode = features ? PayloadMode::features : PayloadMode::spot_image;
    }
    if (c.spec.mode == PayloadMode::features) {
        c.features = io::decode_matrix(io::read_file(dir / "payloads.bin"), (dir / "payloads.bin").string());
        for (std::size_t i = 0; i < c.tiles.size(); ++i) {
            auto& t = c.tiles[i];
            const auto hash = t.payload_ref.rfind('#');
            std::size_t row = 0;
            bool ok = hash != std::string::npos && hash + 1 < t.payload_ref.size();
            if (ok) {
                const auto digits = t.payload_ref.substr(hash + 1);
                ok = digits.find_first_not_of("0123456789") == std::string::npos;
                if (ok) row = std::stoull(digits);
            }
            if (!ok || row >= static_cast<std::size_t>(c.features.rows())) {
                fail(ErrorKind::parse, source + ": line " + std::to_string(i + 2) +
                                           ", column 9 (payload_ref): invalid payload row reference '" + t.payload_ref +
                                           "'");
            }
            t.payload_index = row;
        }
    } else {
        c.tile_images.reserve(c.tiles.size());
        for (auto& t : c.tiles) {
            t.payload_index = c.tile_images.size();
            c.tile_images.push_back(image::read_png<3>(dir / t.payload_ref));
        }
    }
    return c;
}

} // namespace debias::synth
