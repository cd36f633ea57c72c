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
#include "debias/synth/cohort.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <iterator>
#include <string>
#include <vector>

namespace debias::synth {

inline std::string patient_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "P%05zu", i);
    return buf;
}

inline std::string spot_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "S%06zu", i);
    return buf;
}

inline std::string tile_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "T%07zu", i);
    return buf;
}

inline std::string glass_name(const std::string& project, std::size_t g) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "-G%02zu", g);
    return project + buf;
}

/// Index drawn proportionally to `weights` with one uniform.
template <class Weights>
std::size_t draw_index(Rng& rng, const Weights& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < std::size(weights); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last = i;
        if (u < acc) return i;
    }
    return last;
}

/// Unit vector of length `dim` from the entity's own stream.
inline Vector unit_direction(std::uint64_t seed, std::string_view kind, const std::string& id, std::size_t dim) {
    Rng rng = make_rng(seed, std::string("direction/") + std::string(kind) + "/" + id);
    Vector v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = standard_normal(rng);
    }
    const double n = v.norm();
    return n > 0.0 ? Vector(v / n) : v;
}

struct SpotAssignment {
    std::string spot_id;
    std::size_t glass = 0;  // index within the patient's project
};

struct PatientAssignment {
    std::string patient_id;
    ClassLabel label = ClassLabel::mss;
    std::size_t project = 0;
    std::vector<SpotAssignment> spots;
};

struct Assignment {
    std::vector<PatientAssignment> patients;
    std::vector<std::vector<std::string>> glass_ids;  // per project

    [[nodiscard]] const PatientAssignment& patient(const std::string& id) const {
        for (const auto& p : patients) {
            if (p.patient_id == id) return p;
        }
        fail(ErrorKind::domain, "unknown patient '" + id + "'");
    }
};

/// Draws class and project per patient, then packs spots onto glasses:
/// round-robin within the project, or class by class when the project has
/// single-class glasses.
inline Assignment assign_patients(const CohortSpec& spec) {
    Assignment a;
    a.patients.resize(spec.n_patients);
    std::vector<double> p_mss;
    std::vector<double> p_msi;
    for (const auto& p : spec.projects) {
        p_mss.push_back(p.p_given_mss);
        p_msi.push_back(p.p_given_msi);
    }
    for (std::size_t i = 0; i < spec.n_patients; ++i) {
        Rng rng = make_rng(spec.seed, "patient", i);
        auto& pa = a.patients[i];
        pa.patient_id = patient_name(i);
        pa.label = uniform01(rng) < spec.msi_rate ? ClassLabel::msi_h : ClassLabel::mss;
        pa.project = draw_index(rng, pa.label == ClassLabel::msi_h ? p_msi : p_mss);
    }
    std::size_t n_msi = 0;
    for (const auto& p : a.patients) n_msi += p.label == ClassLabel::msi_h ? 1 : 0;
    if (n_msi == 0 || n_msi == spec.n_patients) {
        fail(ErrorKind::degenerate_cohort, "generated cohort has " + std::to_string(n_msi) + " MSI-H and " +
                                               std::to_string(spec.n_patients - n_msi) +
                                               " MSS patients; both classes are required");
    }

    const std::size_t G = spec.glasses_per_project;
    a.glass_ids.resize(spec.projects.size());
    for (std::size_t p = 0; p < spec.projects.size(); ++p) {
        for (std::size_t g = 0; g < G; ++g) {
            a.glass_ids[p].push_back(glass_name(spec.projects[p].id, g));
        }
    }
    std::size_t next_spot = 0;
    for (auto& pa : a.patients) {
        for (std::size_t s = 0; s < spec.spots_per_patient; ++s) {
            pa.spots.push_back({spot_name(next_spot++), 0});
        }
    }
    for (std::size_t p = 0; p < spec.projects.size(); ++p) {
        std::array<std::vector<SpotAssignment*>, 2> by_class;
        std::vector<SpotAssignment*> all;
        for (auto& pa : a.patients) {
            if (pa.project != p) continue;
            for (auto& s : pa.spots) {
                by_class[static_cast<std::size_t>(pa.label)].push_back(&s);
                all.push_back(&s);
            }
        }
        if (!spec.glass_is_single_class(p)) {
            for (std::size_t k = 0; k < all.size(); ++k) {
                all[k]->glass = k % G;
            }
            continue;
        }
        const std::size_t n0 = by_class[0].size();
        const std::size_t n1 = by_class[1].size();
        std::size_t g1 = 0;  // glasses reserved for MSI-H spots, placed last
        if (n0 > 0 && n1 > 0) {
            if (G < 2) {
                fail(ErrorKind::config, "cohort.glasses_per_project: single-class glasses in project '" +
                                            spec.projects[p].id + "' need at least 2 glasses");
            }
            const auto share = static_cast<std::size_t>(std::lround(static_cast<double>(G * n1) / (n0 + n1)));
            g1 = std::clamp<std::size_t>(share, 1, G - 1);
        } else if (n1 > 0) {
            g1 = G;
        }
        const std::size_t g0 = G - g1;
        for (std::size_t k = 0; k < n0; ++k) by_class[0][k]->glass = k % g0;
        for (std::size_t k = 0; k < n1; ++k) by_class[1][k]->glass = g0 + k % g1;
    }
    return a;
}

inline Directions make_directions(const CohortSpec& spec, const Assignment& a, std::size_t dim) {
    Directions d;
    d.cls[0] = unit_direction(spec.seed, "class", "MSS", dim);
    d.cls[1] = unit_direction(spec.seed, "class", "MSI-H", dim);
    for (std::size_t p = 0; p < spec.projects.size(); ++p) {
        d.project.emplace(spec.projects[p].id, unit_direction(spec.seed, "project", spec.projects[p].id, dim));
        for (const auto& g : a.glass_ids[p]) {
            d.glass.emplace(g, unit_direction(spec.seed, "glass", g, dim));
        }
    }
    for (const auto& pa : a.patients) {
        d.patient.emplace(pa.patient_id, unit_direction(spec.seed, "patient", pa.patient_id, dim));
    }
    return d;
}

} // namespace debias::synth
