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
#include "debias/core/config_reader.hpp"
#include "debias/core/error.hpp"
#include "debias/core/labels.hpp"
#include "debias/image/png.hpp"
#include "debias/stain/macenko.hpp"
#include "debias/stain/tiling.hpp"
#include "debias/synth/cohort.hpp"
#include "debias/synth/manifest.hpp"
#include "debias/synth/render.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace debias::stain {

namespace fs = std::filesystem;
using nlohmann::json;

struct PreprocessConfig {
    int tile_px = 128;
    /// Edge length tiles are resized to before writing; 0 keeps `tile_px`.
    int output_px = 0;
    std::set<Tissue> roi = default_roi();
    bool normalize = true;
    /// Image whose stain profile is the target; empty means the cohort
    /// profile averaged over all spots.
    std::string reference_image;
    /// Second pass against the cohort profile of the normalized spots.
    bool cohort_normalization = false;
    MacenkoOptions macenko;
};

inline json to_json(const PreprocessConfig& c) {
    std::vector<std::string> roi;
    for (auto t : c.roi) roi.emplace_back(to_string(t));
    return json{
        {"tile_px", c.tile_px},
        {"output_px", c.output_px},
        {"roi", roi},
        {"normalize", c.normalize},
        {"reference_image", c.reference_image},
        {"cohort_normalization", c.cohort_normalization},
        {"macenko",
         {{"od_threshold", c.macenko.od_threshold},
          {"angle_percentile", c.macenko.angle_percentile},
          {"concentration_percentile", c.macenko.concentration_percentile},
          {"min_tissue_pixels", c.macenko.min_tissue_pixels}}},
    };
}

inline PreprocessConfig preprocess_config_from_json(const json& j, const std::string& path = "preprocess") {
    config::ObjectReader r(j, path);
    PreprocessConfig c;
    c.tile_px = r.get<int>("tile_px", c.tile_px);
    if (c.tile_px < 16) r.invalid("tile_px", "must be at least 16");
    c.output_px = r.get<int>("output_px", c.output_px);
    if (c.output_px < 0) r.invalid("output_px", "must be >= 0");
    if (const json* roi = r.raw("roi")) {
        if (!roi->is_array()) r.invalid("roi", "expected an array of tissue names");
        c.roi.clear();
        for (const auto& v : *roi) {
            const auto t = v.is_string() ? try_parse_tissue(v.get<std::string>()) : std::nullopt;
            if (!t || *t == Tissue::background) r.invalid("roi", "unknown tissue " + v.dump());
            c.roi.insert(*t);
        }
    }
    c.normalize = r.get<bool>("normalize", c.normalize);
    c.reference_image = r.get<std::string>("reference_image", c.reference_image);
    c.cohort_normalization = r.get<bool>("cohort_normalization", c.cohort_normalization);
    if (const json* m = r.raw("macenko")) {
        config::ObjectReader mr(*m, r.path_of("macenko"));
        c.macenko.od_threshold = mr.get<double>("od_threshold", c.macenko.od_threshold);
        c.macenko.angle_percentile = mr.get<double>("angle_percentile", c.macenko.angle_percentile);
        c.macenko.concentration_percentile =
            mr.get<double>("concentration_percentile", c.macenko.concentration_percentile);
        c.macenko.min_tissue_pixels = mr.get<std::size_t>("min_tissue_pixels", c.macenko.min_tissue_pixels);
        if (!(c.macenko.od_threshold > 0.0)) mr.invalid("od_threshold", "must be positive");
        if (!(c.macenko.angle_percentile >= 0.0 && c.macenko.angle_percentile < 50.0)) {
            mr.invalid("angle_percentile", "must lie in [0, 50)");
        }
        if (!(c.macenko.concentration_percentile > 0.0 && c.macenko.concentration_percentile <= 100.0)) {
            mr.invalid("concentration_percentile", "must lie in (0, 100]");
        }
        mr.finish();
    }
    r.finish();
    return c;
}

/// One spot listed in the input sidecar.
struct SpotEntry {
    std::string image;
    std::string mask;
    std::string patient_id;
    std::string spot_id;
    std::string glass_id;
    std::string project_id;
    ClassLabel label = ClassLabel::mss;
};

/// Input directory description: `spots.json` with the mask palette
/// (pixel value to tissue name) and the spot list.
struct SpotIndex {
    std::map<int, Tissue> palette;
    std::vector<SpotEntry> spots;
};

inline SpotIndex spot_index_from_json(const json& j, const std::string& path = "spots.json") {
    config::ObjectReader r(j, path);
    SpotIndex ix;
    const json* palette = r.raw("palette");
    if (palette == nullptr || !palette->is_object()) r.invalid("palette", "expected an object");
    for (const auto& [k, v] : palette->items()) {
        int value = -1;
        try {
            value = std::stoi(k);
        } catch (const std::logic_error&) {
        }
        if (value < 0 || value > 255) r.invalid("palette", "key '" + k + "' is not a pixel value in [0, 255]");
        const auto t = v.is_string() ? try_parse_tissue(v.get<std::string>()) : std::nullopt;
        if (!t) r.invalid("palette", "unknown tissue " + v.dump() + " for value " + k);
        ix.palette[value] = *t;
    }
    const json* spots = r.raw("spots");
    if (spots == nullptr || !spots->is_array()) r.invalid("spots", "expected an array");
    r.finish();
    for (std::size_t i = 0; i < spots->size(); ++i) {
        config::ObjectReader sr((*spots)[i], r.path_of("spots") + "[" + std::to_string(i) + "]");
        SpotEntry e;
        e.image = sr.required<std::string>("image");
        e.mask = sr.required<std::string>("mask");
        e.patient_id = sr.required<std::string>("patient_id");
        e.spot_id = sr.required<std::string>("spot_id");
        e.glass_id = sr.required<std::string>("glass_id");
        e.project_id = sr.required<std::string>("project_id");
        const auto label = sr.required<std::string>("label");
        const auto parsed = try_parse_label(label);
        if (!parsed) sr.invalid("label", "expected MSS or MSI-H, got '" + label + "'");
        e.label = *parsed;
        sr.finish();
        ix.spots.push_back(std::move(e));
    }
    return ix;
}

inline json to_json(const SpotIndex& ix) {
    json palette = json::object();
    for (const auto& [v, t] : ix.palette) palette[std::to_string(v)] = std::string(to_string(t));
    json spots = json::array();
    for (const auto& e : ix.spots) {
        spots.push_back({{"image", e.image},
                         {"mask", e.mask},
                         {"patient_id", e.patient_id},
                         {"spot_id", e.spot_id},
                         {"glass_id", e.glass_id},
                         {"project_id", e.project_id},
                         {"label", std::string(to_string(e.label))}});
    }
    return {{"palette", palette}, {"spots", spots}};
}

/// Mask pixel values mapped through the palette to tissue codes.
inline image::GrayImage decode_mask(const image::GrayImage& raw, const std::map<int, Tissue>& palette,
                                    const std::string& source) {
    image::GrayImage out(raw.width, raw.height);
    for (std::size_t i = 0; i < raw.data.size(); ++i) {
        const auto it = palette.find(raw.data[i]);
        if (it == palette.end()) {
            fail(ErrorKind::metadata, source + ": mask value " + std::to_string(raw.data[i]) + " is not in the palette");
        }
        out.data[i] = static_cast<std::uint8_t>(it->second);
    }
    return out;
}

/// Mean of unit stain vectors (renormalized) and median reference
/// concentrations over a set of profiles.
inline StainProfile average_profile(const std::vector<StainProfile>& profiles) {
    if (profiles.empty()) {
        fail(ErrorKind::estimation, "cohort stain profile: no spot could be estimated");
    }
    StainProfile out;
    for (const auto& p : profiles) out.stain_matrix += p.stain_matrix;
    for (int s = 0; s < 2; ++s) out.stain_matrix.col(s).normalize();
    for (std::size_t s = 0; s < 2; ++s) {
        std::vector<double> v;
        for (const auto& p : profiles) v.push_back(p.max_concentrations[s]);
        out.max_concentrations[s] = percentile(v, 50.0);
    }
    return out;
}

struct SkippedSpot {
    std::string spot_id;
    std::string reason;
};

struct PreprocessResult {
    std::vector<synth::TileRecord> tiles;
    std::vector<SkippedSpot> skipped;
    std::optional<StainProfile> target;
};

inline json to_json(const StainProfile& p) {
    json m = json::array();
    for (int r = 0; r < 3; ++r) m.push_back({p.stain_matrix(r, 0), p.stain_matrix(r, 1)});
    return {{"stain_matrix", m}, {"max_concentrations", p.max_concentrations}};
}

/// Normalizes, tiles and ROI-filters every spot listed in
/// `input/spots.json`, writing PNG tiles and a manifest under `output`.
/// Spots whose stains cannot be estimated are skipped and reported.
inline PreprocessResult preprocess_directory(const fs::path& input, const fs::path& output, const PreprocessConfig& cfg) {
    const fs::path index_path = input / "spots.json";
    if (!fs::exists(index_path)) {
        fail(ErrorKind::missing_artifact, "spot index not found: " + index_path.string());
    }
    SpotIndex ix;
    try {
        ix = spot_index_from_json(json::parse(io::read_text(index_path)));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::parse, index_path.string() + ": " + e.what());
    }
    if (ix.spots.empty()) {
        fail(ErrorKind::empty_input, index_path.string() + ": no spots listed");
    }

    PreprocessResult res;
    struct Loaded {
        const SpotEntry* entry;
        synth::SpotImage spot;
    };
    std::vector<Loaded> loaded;
    for (const auto& e : ix.spots) {
        Loaded l{&e, {}};
        l.spot.image = image::read_png<3>(input / e.image);
        l.spot.mask = decode_mask(image::read_png<1>(input / e.mask), ix.palette, (input / e.mask).string());
        if (l.spot.mask.width != l.spot.image.width || l.spot.mask.height != l.spot.image.height) {
            fail(ErrorKind::dimension, (input / e.mask).string() + ": mask size differs from its image");
        }
        loaded.push_back(std::move(l));
    }

    auto estimable = [&](std::vector<Loaded>& spots, bool record) {
        std::vector<StainProfile> profiles;
        std::vector<Loaded> kept;
        for (auto& l : spots) {
            try {
                profiles.push_back(estimate_stain_matrix(l.spot.image, cfg.macenko));
                kept.push_back(std::move(l));
            } catch (const Error& err) {
                if (err.kind() != ErrorKind::estimation && err.kind() != ErrorKind::degenerate_stain) throw;
                if (record) res.skipped.push_back({l.entry->spot_id, err.what()});
            }
        }
        spots = std::move(kept);
        return profiles;
    };

    if (cfg.normalize) {
        auto profiles = estimable(loaded, true);
        StainProfile target;
        if (!cfg.reference_image.empty()) {
            const fs::path ref = fs::path(cfg.reference_image).is_absolute() ? fs::path(cfg.reference_image)
                                                                              : input / cfg.reference_image;
            target = estimate_stain_matrix(image::read_png<3>(ref), cfg.macenko);
        } else {
            target = average_profile(profiles);
        }
        for (auto& l : loaded) l.spot.image = normalize_macenko(l.spot.image, target, cfg.macenko);
        if (cfg.cohort_normalization) {
            target = average_profile(estimable(loaded, true));
            for (auto& l : loaded) l.spot.image = normalize_macenko(l.spot.image, target, cfg.macenko);
        }
        res.target = target;
    }

    fs::create_directories(output / "tiles");
    for (const auto& l : loaded) {
        const auto& e = *l.entry;
        for (auto& t : synth::spot_tiles(l.spot, cfg.tile_px, cfg.roi)) {
            const auto name = synth::tile_file_name(e.patient_id, e.spot_id, t.magnification, t.row, t.col);
            const auto img = cfg.output_px > 0 ? resize_tile(t.image, cfg.output_px) : t.image;
            image::write_png(output / "tiles" / name, img);
            synth::TileRecord r;
            r.tile_id = name.substr(0, name.size() - 4);
            r.patient_id = e.patient_id;
            r.spot_id = e.spot_id;
            r.glass_id = e.glass_id;
            r.project_id = e.project_id;
            r.label = e.label;
            r.tissue = t.tissue;
            r.magnification = t.magnification;
            r.payload_ref = "tiles/" + name;
            r.payload_index = res.tiles.size();
            res.tiles.push_back(std::move(r));
        }
    }
    synth::check_patient_consistency(res.tiles, index_path.string());
    io::write_text_atomic(output / "manifest.csv", synth::manifest_csv(res.tiles));
    json summary{{"config", to_json(cfg)}, {"tiles", res.tiles.size()}};
    summary["target_profile"] = res.target ? to_json(*res.target) : json(nullptr);
    json skipped = json::array();
    for (const auto& s : res.skipped) skipped.push_back({{"spot_id", s.spot_id}, {"reason", s.reason}});
    summary["skipped"] = skipped;
    io::write_text_atomic(output / "preprocess.json", summary.dump(2) + "\n");
    return res;
}

/// Writes the spots of a generated spot-image cohort as an input
/// directory for `preprocess_directory`.
inline void export_spots(const synth::CohortSpec& spec, const fs::path& dir) {
    if (spec.mode != synth::PayloadMode::spot_image) {
        fail(ErrorKind::config, "cohort.mode: spot export needs mode 'spot-image'");
    }
    synth::validate(spec);
    const auto a = synth::assign_patients(spec);
    const auto d = synth::make_directions(spec, a, 3);
    fs::create_directories(dir / "spots");
    SpotIndex ix;
    ix.palette = {{0, Tissue::background}, {1, Tissue::tum}, {2, Tissue::lym}, {3, Tissue::muc}, {4, Tissue::other}};
    for (const auto& p : a.patients) {
        for (const auto& s : p.spots) {
            const auto spot = synth::render_spot_image(spec, a, d, p, s);
            const std::string base = "spots/" + p.patient_id + "_" + s.spot_id;
            image::write_png(dir / (base + ".png"), spot.image);
            image::write_png(dir / (base + "_mask.png"), spot.mask);
            ix.spots.push_back({base + ".png", base + "_mask.png", p.patient_id, s.spot_id, a.glass_ids[p.project][s.glass],
                                spec.projects[p.project].id, p.label});
        }
    }
    io::write_text_atomic(dir / "spots.json", to_json(ix).dump(2) + "\n");
}

} // namespace debias::stain
