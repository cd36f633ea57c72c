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
#include "debias/stats/dependence.hpp"
#include "debias/synth/generate.hpp"
#include "debias/synth/manifest.hpp"
#include "debias/synth/variables.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>

using namespace debias;
using namespace debias::synth;

namespace {

CohortSpec confounded(std::size_t n = 400, std::uint64_t seed = 1) {
    CohortSpec s;
    s.n_patients = n;
    s.msi_rate = 0.3;
    s.projects = {{"A", 0.9, 0.1, std::nullopt}, {"B", 0.1, 0.9, std::nullopt}};
    s.glasses_per_project = 3;
    s.spots_per_patient = 2;
    s.tiles_per_spot = 4;
    s.feature_dim = 8;
    s.amplitudes = {2.0, 3.0, 1.0, 1.0, 1.0};
    s.seed = seed;
    return s;
}

fs::path temp_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("debias_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

} // namespace

TEST(Generate, DeterministicPerSeed) {
    const auto a = generate_cohort(confounded());
    const auto b = generate_cohort(confounded());
    EXPECT_TRUE(a == b);
    const auto c = generate_cohort(confounded(400, 2));
    EXPECT_FALSE(a == c);
}

TEST(Generate, ShapesAndIds) {
    const auto s = confounded();
    const auto c = generate_cohort(s);
    ASSERT_EQ(c.tiles.size(), s.n_patients * s.spots_per_patient * s.tiles_per_spot);
    EXPECT_EQ(c.features.rows(), static_cast<Eigen::Index>(c.tiles.size()));
    EXPECT_EQ(c.features.cols(), 8);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < c.tiles.size(); ++i) {
        EXPECT_TRUE(ids.insert(c.tiles[i].tile_id).second);
        EXPECT_EQ(c.tiles[i].payload_index, i);
    }
}

TEST(Generate, PatientsAreConsistentAcrossTiles) {
    const auto c = generate_cohort(confounded());
    std::map<std::string, std::tuple<ClassLabel, std::string>> patient;
    std::map<std::string, std::string> spot_glass;
    for (const auto& t : c.tiles) {
        auto [it, fresh] = patient.try_emplace(t.patient_id, t.label, t.project_id);
        if (!fresh) {
            EXPECT_EQ(std::get<0>(it->second), t.label);
            EXPECT_EQ(std::get<1>(it->second), t.project_id);
        }
        auto [sg, f2] = spot_glass.try_emplace(t.spot_id, t.glass_id);
        if (!f2) {
            EXPECT_EQ(sg->second, t.glass_id);
        }
        EXPECT_EQ(t.glass_id.rfind(t.project_id, 0), 0u) << t.glass_id;
    }
    EXPECT_EQ(patient.size(), 400u);
}

TEST(Generate, ProjectConfoundingFollowsConditionals) {
    auto s = confounded(4000);
    s.tiles_per_spot = 1;
    s.spots_per_patient = 1;
    const auto a = assign_patients(s);
    std::array<std::array<double, 2>, 2> count{};
    for (const auto& p : a.patients) count[static_cast<std::size_t>(p.label)][p.project] += 1.0;
    const double mss_a = count[0][0] / (count[0][0] + count[0][1]);
    const double msi_b = count[1][1] / (count[1][0] + count[1][1]);
    const double msi_share = (count[1][0] + count[1][1]) / 4000.0;
    // Four binomial standard deviations.
    EXPECT_NEAR(mss_a, 0.9, 4.0 * std::sqrt(0.09 / (count[0][0] + count[0][1])));
    EXPECT_NEAR(msi_b, 0.9, 4.0 * std::sqrt(0.09 / (count[1][0] + count[1][1])));
    EXPECT_NEAR(msi_share, 0.3, 4.0 * std::sqrt(0.21 / 4000.0));
}

TEST(Generate, SingleClassGlassesHoldOneLabel) {
    auto s = confounded();
    s.glasses_per_project = 4;
    s.projects[1].single_class_glasses = true;
    const auto c = generate_cohort(s);
    std::map<std::string, std::set<ClassLabel>> labels;
    for (const auto& t : c.tiles) labels[t.glass_id].insert(t.label);
    bool mixed_a = false;
    for (const auto& [g, ls] : labels) {
        if (g.rfind("B", 0) == 0) {
            EXPECT_EQ(ls.size(), 1u) << g;
        } else if (ls.size() > 1) {
            mixed_a = true;
        }
    }
    EXPECT_TRUE(mixed_a);
}

TEST(Generate, PlantedEffectsAreDetectable) {
    const auto c = generate_cohort(confounded());
    const Matrix x = design_matrix(c);
    const auto project = category_codes(c, "project");
    const auto label = category_codes(c, "label");
    std::vector<int> shuffled = project.codes;
    Rng rng = make_rng(0, "test/shuffle");
    for (std::size_t i = shuffled.size(); i > 1; --i) {
        std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i))]);
    }
    const double dp = stats::distance_correlation_sq(x, project.codes).value;
    EXPECT_GT(dp, 0.2);
    EXPECT_GT(stats::distance_correlation_sq(x, label.codes).value, 0.1);
    EXPECT_LT(stats::distance_correlation_sq(x, shuffled).value, 0.05);
}

TEST(Generate, ZeroAmplitudesLeaveOnlyNoise) {
    auto s = confounded();
    s.amplitudes = {0.0, 0.0, 0.0, 0.0, 1.0};
    const auto c = generate_cohort(s);
    const Matrix x = design_matrix(c);
    EXPECT_LT(stats::distance_correlation_sq(x, category_codes(c, "project").codes).value, 0.02);
    EXPECT_NEAR(x.mean(), 0.0, 0.05);
}

TEST(Generate, DegenerateCohortIsRejected) {
    auto s = confounded(3);
    s.msi_rate = 1e-9;
    try {
        generate_cohort(s);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::degenerate_cohort);
    }
}

TEST(Spec, JsonRoundTrip) {
    auto s = confounded();
    s.projects[0].single_class_glasses = false;
    s.mode = PayloadMode::spot_image;
    s.image.tile_px = 32;
    EXPECT_TRUE(cohort_spec_from_json(to_json(s)) == s);
}

TEST(Spec, ValidationNamesTheField) {
    auto j = to_json(confounded());
    j["msi_rate"] = 1.5;
    try {
        cohort_spec_from_json(j);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
        EXPECT_NE(std::string(e.what()).find("cohort.msi_rate"), std::string::npos) << e.what();
    }
    auto k = to_json(confounded());
    k["no_such_key"] = 1;
    EXPECT_THROW(cohort_spec_from_json(k), Error);
    auto m = to_json(confounded());
    m["projects"][0]["p_given_mss"] = 0.5;
    EXPECT_THROW(cohort_spec_from_json(m), Error);
}

TEST(Storage, SaveLoadRoundTrip) {
    const auto dir = temp_dir("cohort");
    const auto c = generate_cohort(confounded(60));
    save_cohort(c, dir);
    const auto back = load_cohort(dir);
    EXPECT_TRUE(back == c);
    fs::remove(dir / "cohort.json");
    const auto no_spec = load_cohort(dir);
    EXPECT_TRUE(no_spec.tiles == c.tiles);
    EXPECT_EQ(no_spec.mode(), PayloadMode::features);
    fs::remove_all(dir);
    try {
        load_cohort(dir);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::missing_artifact);
    }
}

TEST(Storage, ManifestErrorsNameLineAndColumn) {
    const auto c = generate_cohort(confounded(20));
    auto text = manifest_csv(c.tiles);
    const auto second = text.find('\n', text.find('\n') + 1);
    auto broken = text.substr(0, second + 1) + "x,p,s,g,A,MAYBE,TUM,x40,payloads.bin#0\n";
    try {
        parse_manifest(broken);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    // Payload rows are resolved by load_cohort, not by the parser.
    auto parsed = parse_manifest(text);
    ASSERT_EQ(parsed.size(), c.tiles.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        parsed[i].payload_index = c.tiles[i].payload_index;
        EXPECT_TRUE(parsed[i] == c.tiles[i]) << i;
    }
}

TEST(Variables, CategoryCodesAreSortedAndDense) {
    const auto c = generate_cohort(confounded(30));
    const auto g = category_codes(c, "glass");
    EXPECT_TRUE(std::is_sorted(g.categories.begin(), g.categories.end()));
    EXPECT_EQ(g.categories.size(), 6u);
    for (std::size_t i = 0; i < c.tiles.size(); ++i) {
        EXPECT_EQ(g.categories[static_cast<std::size_t>(g.codes[i])], c.tiles[i].glass_id);
    }
    EXPECT_EQ(g.code_of(c.tiles[0].glass_id), g.codes[0]);
    EXPECT_THROW(category_codes(c, "colour"), Error);
}

TEST(SpotImages, TilesFollowGridAndRoi) {
    CohortSpec s;
    s.n_patients = 4;
    s.msi_rate = 0.5;
    s.mode = PayloadMode::spot_image;
    s.image.spot_px = 128;
    s.image.disk_radius_px = 60;
    s.image.tile_px = 32;
    s.seed = 4;
    // Force both classes with a seed scan.
    std::optional<Cohort> c;
    for (std::uint64_t seed = 4; !c; ++seed) {
        s.seed = seed;
        try {
            c = generate_cohort(s);
        } catch (const Error&) {
        }
    }
    ASSERT_FALSE(c->tiles.empty());
    const std::set<Tissue> roi(s.image.roi.begin(), s.image.roi.end());
    for (const auto& t : c->tiles) {
        const auto& img = c->tile_images.at(t.payload_index);
        EXPECT_EQ(img.width, 32);
        EXPECT_EQ(img.height, 32);
        EXPECT_TRUE(roi.contains(t.tissue));
        EXPECT_EQ(t.payload_ref.rfind("tiles/", 0), 0u);
    }
    const Matrix x = design_matrix(*c, 4);
    EXPECT_EQ(x.cols(), 48);
    EXPECT_LE(x.maxCoeff(), 0.5);
    EXPECT_GE(x.minCoeff(), -0.5);
}
