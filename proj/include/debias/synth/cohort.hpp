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

#include "debias/core/config_reader.hpp"
#include "debias/core/error.hpp"
#include "debias/core/labels.hpp"
#include "debias/core/types.hpp"
#include "debias/image/image.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace debias::synth {

using nlohmann::json;

/// A contributing project. `p_given_mss` / `p_given_msi` are the
/// probabilities that a patient of that class is assigned here; skewing
/// them confounds project with class.
struct ProjectSpec {
    std::string id;
    double p_given_mss = 1.0;
    double p_given_msi = 1.0;
    std::optional<bool> single_class_glasses;  // overrides the cohort-wide flag

    friend bool operator==(const ProjectSpec&, const ProjectSpec&) = default;
};

struct Amplitudes {
    double cls = 2.0;
    double project = 0.0;
    double patient = 0.0;
    double glass = 0.0;
    double noise = 1.0;

    friend bool operator==(const Amplitudes&, const Amplitudes&) = default;
};

enum class PayloadMode { features, spot_image };

inline std::string_view to_string(PayloadMode m) { return m == PayloadMode::features ? "features" : "spot-image"; }

struct ImageGeometry {
    int spot_px = 512;
    int disk_radius_px = 240;
    int tile_px = 128;
    double blob_density = 4.0;   // nuclei blobs per 10^4 disk pixels for MSS spots
    double shift_scale = 8.0;    // intensity units per unit amplitude of stain shift
    std::vector<Tissue> roi{Tissue::tum, Tissue::lym, Tissue::muc};

    friend bool operator==(const ImageGeometry&, const ImageGeometry&) = default;
};

struct CohortSpec {
    std::size_t n_patients = 200;
    double msi_rate = 0.074;
    std::vector<ProjectSpec> projects{{"A", 1.0, 1.0, std::nullopt}};
    std::size_t glasses_per_project = 4;
    bool single_class_glasses = false;
    std::size_t spots_per_patient = 2;
    std::size_t tiles_per_spot = 8;  // feature mode; image mode tiles come from the tiling grid
    std::size_t feature_dim = 32;
    Amplitudes amplitudes;
    PayloadMode mode = PayloadMode::features;
    std::uint64_t seed = 0;
    /// Sampling weights of tile metadata in feature mode (and sector
    /// proportions of rendered spots).
    std::array<double, 4> tissue_weights{0.6, 0.25, 0.15, 0.0};  // TUM, LYM, MUC, other
    std::array<double, 5> magnification_weights{386524, 100569, 23630, 9954, 2947};
    /// Multipliers on the class amplitude by tile tissue and magnification.
    std::array<double, 4> tissue_signal{1.0, 1.0, 1.0, 1.0};
    std::array<double, 5> magnification_signal{1.0, 1.0, 1.0, 1.0, 1.0};
    ImageGeometry image;

    [[nodiscard]] bool glass_is_single_class(std::size_t project) const {
        return projects[project].single_class_glasses.value_or(single_class_glasses);
    }

    friend bool operator==(const CohortSpec&, const CohortSpec&) = default;
};

struct TileRecord {
    std::string tile_id;
    std::string patient_id;
    std::string spot_id;
    std::string glass_id;
    std::string project_id;
    ClassLabel label = ClassLabel::mss;
    Tissue tissue = Tissue::tum;
    Magnification magnification = Magnification::x40;
    std::string payload_ref;
    std::size_t payload_index = 0;  // row in `features` or index in `tile_images`

    friend bool operator==(const TileRecord&, const TileRecord&) = default;
};

/// Unit direction vectors used by the generator, keyed by entity id.
struct Directions {
    std::array<Vector, 2> cls;
    std::map<std::string, Vector> project;
    std::map<std::string, Vector> patient;
    std::map<std::string, Vector> glass;
};

struct Cohort {
    CohortSpec spec;
    std::vector<TileRecord> tiles;
    FloatMatrix features;                        // feature mode, one row per tile
    std::vector<image::RgbImage> tile_images;    // spot-image mode
    Directions directions;

    [[nodiscard]] PayloadMode mode() const noexcept { return spec.mode; }

    /// Equality of spec, records and payloads; directions are derived.
    friend bool operator==(const Cohort& a, const Cohort& b) {
        return a.spec == b.spec && a.tiles == b.tiles && a.features.rows() == b.features.rows() &&
               a.features.cols() == b.features.cols() && a.features == b.features && a.tile_images == b.tile_images;
    }
};

// --- JSON ---------------------------------------------------------------

inline const std::array<std::string_view, 4>& tissue_keys() {
    static const std::array<std::string_view, 4> k{"TUM", "LYM", "MUC", "other"};
    return k;
}

inline const std::array<std::string_view, 5>& magnification_keys() {
    static const std::array<std::string_view, 5> k{"x40", "x20", "x10", "x5", "x0"};
    return k;
}

template <std::size_t N>
json weights_to_json(const std::array<double, N>& w, const std::array<std::string_view, N>& keys) {
    json j = json::object();
    for (std::size_t i = 0; i < N; ++i) {
        j[std::string(keys[i])] = w[i];
    }
    return j;
}

template <std::size_t N>
std::array<double, N> weights_from_json(const json* j, const std::string& path, std::array<double, N> fallback,
                                        const std::array<std::string_view, N>& keys) {
    if (j == nullptr) {
        return fallback;
    }
    config::ObjectReader r(*j, path);
    for (std::size_t i = 0; i < N; ++i) {
        fallback[i] = r.get<double>(keys[i], fallback[i]);
    }
    r.finish();
    return fallback;
}

inline json to_json(const CohortSpec& s) {
    json projects = json::array();
    for (const auto& p : s.projects) {
        json jp{{"id", p.id}, {"p_given_mss", p.p_given_mss}, {"p_given_msi", p.p_given_msi}};
        if (p.single_class_glasses) {
            jp["single_class_glasses"] = *p.single_class_glasses;
        }
        projects.push_back(jp);
    }
    json roi = json::array();
    for (auto t : s.image.roi) {
        roi.push_back(std::string(to_string(t)));
    }
    return json{
        {"n_patients", s.n_patients},
        {"msi_rate", s.msi_rate},
        {"projects", projects},
        {"glasses_per_project", s.glasses_per_project},
        {"single_class_glasses", s.single_class_glasses},
        {"spots_per_patient", s.spots_per_patient},
        {"tiles_per_spot", s.tiles_per_spot},
        {"feature_dim", s.feature_dim},
        {"amplitudes",
         {{"class", s.amplitudes.cls},
          {"project", s.amplitudes.project},
          {"patient", s.amplitudes.patient},
          {"glass", s.amplitudes.glass},
          {"noise", s.amplitudes.noise}}},
        {"mode", std::string(to_string(s.mode))},
        {"seed", s.seed},
        {"tissue_weights", weights_to_json(s.tissue_weights, tissue_keys())},
        {"magnification_weights", weights_to_json(s.magnification_weights, magnification_keys())},
        {"tissue_signal", weights_to_json(s.tissue_signal, tissue_keys())},
        {"magnification_signal", weights_to_json(s.magnification_signal, magnification_keys())},
        {"image",
         {{"spot_px", s.image.spot_px},
          {"disk_radius_px", s.image.disk_radius_px},
          {"tile_px", s.image.tile_px},
          {"blob_density", s.image.blob_density},
          {"shift_scale", s.image.shift_scale},
          {"roi", roi}}},
    };
}

/// Checks the cohort invariants; errors name the offending field.
inline void validate(const CohortSpec& s, const std::string& path = "cohort") {
    auto bad = [&](std::string_view field, const std::string& why) {
        fail(ErrorKind::config, path + "." + std::string(field) + ": " + why);
    };
    if (s.n_patients < 2) bad("n_patients", "must be at least 2");
    if (!(s.msi_rate > 0.0 && s.msi_rate < 1.0)) bad("msi_rate", "must lie in (0, 1)");
    if (s.projects.empty()) bad("projects", "at least one project is required");
    double mss = 0.0;
    double msi = 0.0;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < s.projects.size(); ++i) {
        const auto& p = s.projects[i];
        const std::string f = "projects[" + std::to_string(i) + "]";
        if (p.id.empty() || p.id.find_first_of(",\n\r\" ") != std::string::npos) bad(f + ".id", "must be a non-empty token");
        if (!ids.insert(p.id).second) bad(f + ".id", "duplicate project id '" + p.id + "'");
        if (!(p.p_given_mss >= 0.0 && p.p_given_mss <= 1.0)) bad(f + ".p_given_mss", "must lie in [0, 1]");
        if (!(p.p_given_msi >= 0.0 && p.p_given_msi <= 1.0)) bad(f + ".p_given_msi", "must lie in [0, 1]");
        mss += p.p_given_mss;
        msi += p.p_given_msi;
    }
    if (s.projects.size() > 1 || s.projects.front().p_given_mss != 1.0 || s.projects.front().p_given_msi != 1.0) {
        if (std::abs(mss - 1.0) > 1e-9) bad("projects", "p_given_mss must sum to 1 across projects");
        if (std::abs(msi - 1.0) > 1e-9) bad("projects", "p_given_msi must sum to 1 across projects");
    }
    if (s.glasses_per_project < 1) bad("glasses_per_project", "must be at least 1");
    if (s.spots_per_patient < 1) bad("spots_per_patient", "must be at least 1");
    if (s.tiles_per_spot < 1) bad("tiles_per_spot", "must be at least 1");
    if (s.feature_dim < 1) bad("feature_dim", "must be at least 1");
    const auto& a = s.amplitudes;
    for (auto [name, v] : {std::pair<std::string_view, double>{"class", a.cls}, {"project", a.project},
                           {"patient", a.patient}, {"glass", a.glass}}) {
        if (!(v >= 0.0) || !std::isfinite(v)) bad("amplitudes." + std::string(name), "must be finite and >= 0");
    }
    if (!(a.noise > 0.0) || !std::isfinite(a.noise)) bad("amplitudes.noise", "must be finite and > 0");
    double tw = 0.0;
    for (double w : s.tissue_weights) {
        if (!(w >= 0.0)) bad("tissue_weights", "weights must be >= 0");
        tw += w;
    }
    if (!(tw > 0.0)) bad("tissue_weights", "at least one weight must be positive");
    double mw = 0.0;
    for (double w : s.magnification_weights) {
        if (!(w >= 0.0)) bad("magnification_weights", "weights must be >= 0");
        mw += w;
    }
    if (!(mw > 0.0)) bad("magnification_weights", "at least one weight must be positive");
    if (s.mode == PayloadMode::spot_image) {
        const auto& g = s.image;
        if (g.tile_px < 16) bad("image.tile_px", "must be at least 16");
        if (g.spot_px < g.tile_px) bad("image.spot_px", "must be at least image.tile_px");
        if (g.disk_radius_px < 1 || 2 * g.disk_radius_px > g.spot_px) bad("image.disk_radius_px", "disk must fit in the spot");
        if (!(g.blob_density >= 0.0)) bad("image.blob_density", "must be >= 0");
        if (!(g.shift_scale >= 0.0)) bad("image.shift_scale", "must be >= 0");
    }
}

inline CohortSpec cohort_spec_from_json(const json& j, const std::string& path = "cohort") {
    config::ObjectReader r(j, path);
    CohortSpec s;
    s.n_patients = r.get<std::size_t>("n_patients", s.n_patients);
    s.msi_rate = r.get<double>("msi_rate", s.msi_rate);
    if (const json* p = r.raw("projects")) {
        if (!p->is_array()) r.invalid("projects", "expected an array");
        s.projects.clear();
        for (std::size_t i = 0; i < p->size(); ++i) {
            config::ObjectReader pr((*p)[i], r.path_of("projects") + "[" + std::to_string(i) + "]");
            ProjectSpec ps;
            ps.id = pr.required<std::string>("id");
            ps.p_given_mss = pr.get<double>("p_given_mss", 0.0);
            ps.p_given_msi = pr.get<double>("p_given_msi", 0.0);
            if (const json* sc = pr.raw("single_class_glasses")) {
                if (!sc->is_boolean()) pr.invalid("single_class_glasses", "expected a boolean");
                ps.single_class_glasses = sc->get<bool>();
            }
            pr.finish();
            s.projects.push_back(std::move(ps));
        }
        if (s.projects.size() == 1 && s.projects[0].p_given_mss == 0.0 && s.projects[0].p_given_msi == 0.0) {
            s.projects[0].p_given_mss = s.projects[0].p_given_msi = 1.0;
        }
    }
    s.glasses_per_project = r.get<std::size_t>("glasses_per_project", s.glasses_per_project);
    s.single_class_glasses = r.get<bool>("single_class_glasses", s.single_class_glasses);
    s.spots_per_patient = r.get<std::size_t>("spots_per_patient", s.spots_per_patient);
    s.tiles_per_spot = r.get<std::size_t>("tiles_per_spot", s.tiles_per_spot);
    s.feature_dim = r.get<std::size_t>("feature_dim", s.feature_dim);
    if (const json* a = r.raw("amplitudes")) {
        config::ObjectReader ar(*a, r.path_of("amplitudes"));
        s.amplitudes.cls = ar.get<double>("class", s.amplitudes.cls);
        s.amplitudes.project = ar.get<double>("project", s.amplitudes.project);
        s.amplitudes.patient = ar.get<double>("patient", s.amplitudes.patient);
        s.amplitudes.glass = ar.get<double>("glass", s.amplitudes.glass);
        s.amplitudes.noise = ar.get<double>("noise", s.amplitudes.noise);
        ar.finish();
    }
    const auto mode = r.get<std::string>("mode", "features");
    if (mode == "features") {
        s.mode = PayloadMode::features;
    } else if (mode == "spot-image") {
        s.mode = PayloadMode::spot_image;
    } else {
        r.invalid("mode", "expected 'features' or 'spot-image', got '" + mode + "'");
    }
    s.seed = r.get<std::uint64_t>("seed", s.seed);
    s.tissue_weights = weights_from_json(r.raw("tissue_weights"), r.path_of("tissue_weights"), s.tissue_weights, tissue_keys());
    s.magnification_weights = weights_from_json(r.raw("magnification_weights"), r.path_of("magnification_weights"),
                                                s.magnification_weights, magnification_keys());
    s.tissue_signal = weights_from_json(r.raw("tissue_signal"), r.path_of("tissue_signal"), s.tissue_signal, tissue_keys());
    s.magnification_signal = weights_from_json(r.raw("magnification_signal"), r.path_of("magnification_signal"),
                                               s.magnification_signal, magnification_keys());
    if (const json* g = r.raw("image")) {
        config::ObjectReader gr(*g, r.path_of("image"));
        s.image.spot_px = gr.get<int>("spot_px", s.image.spot_px);
        s.image.disk_radius_px = gr.get<int>("disk_radius_px", s.image.disk_radius_px);
        s.image.tile_px = gr.get<int>("tile_px", s.image.tile_px);
        s.image.blob_density = gr.get<double>("blob_density", s.image.blob_density);
        s.image.shift_scale = gr.get<double>("shift_scale", s.image.shift_scale);
        if (const json* roi = gr.raw("roi")) {
            if (!roi->is_array()) gr.invalid("roi", "expected an array of tissue names");
            s.image.roi.clear();
            for (const auto& t : *roi) {
                const auto name = t.is_string() ? t.get<std::string>() : std::string();
                auto tissue = try_parse_tissue(name);
                if (!tissue || *tissue == Tissue::background) gr.invalid("roi", "unknown tissue '" + name + "'");
                s.image.roi.push_back(*tissue);
            }
        }
        gr.finish();
    }
    r.finish();
    validate(s, path);
    return s;
}

} // namespace debias::synth
