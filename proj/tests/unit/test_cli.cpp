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
#include "debias/core/binary_io.hpp"
#include "debias/nn/bundle.hpp"
#include "debias/train/folds.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path config_dir = DEBIAS_CONFIG_DIR;

fs::path work(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("debias_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct Run {
    int code = -1;
    std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
    const auto err = dir / "stderr.txt";
    const std::string cmd = std::string(DEBIAS_CLI_PATH) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                            err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = debias::io::read_text(err);
    return r;
}

std::string error_kind(const Run& r) {
    std::istringstream in(r.err);
    std::string line;
    std::string kind;
    while (std::getline(in, line)) {
        const auto j = json::parse(line, nullptr, false);
        if (!j.is_discarded() && j.contains("error")) kind = j["error"]["kind"].get<std::string>();
    }
    return kind;
}

fs::path write_json(const fs::path& p, const json& j) {
    std::ofstream(p) << j.dump(2);
    return p;
}

json quick_config() {
    std::ifstream in(config_dir / "quick.json");
    return json::parse(in);
}

} // namespace

TEST(Cli, ExitCodesFollowErrorKinds) {
    const auto d = work("codes");
    EXPECT_EQ(cli("--help", d).code, 0);
    EXPECT_EQ(cli("frobnicate", d).code, 2);

    auto bad = quick_config();
    bad["cohort"]["msi_rate"] = 1.5;
    const auto r = cli("synth --config " + write_json(d / "bad.json", bad).string() + " --out " + (d / "c").string(), d);
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(error_kind(r), "config");
    EXPECT_NE(r.err.find("cohort.msi_rate"), std::string::npos);

    std::ofstream(d / "broken.json") << "{\"seed\": ";
    EXPECT_EQ(cli("synth --config " + (d / "broken.json").string() + " --out " + (d / "c").string(), d).code, 2);

    const auto missing = cli("train --cohort " + (d / "nope").string() + " --out " + (d / "run").string(), d);
    EXPECT_EQ(missing.code, 4);
    EXPECT_EQ(error_kind(missing), "missing_artifact");

    const auto no_ckpt = cli("audit --cohort " + (d / "nope").string() + " --checkpoint " + (d / "x.ckpt").string() +
                                 " --out " + (d / "a.csv").string(),
                             d);
    EXPECT_EQ(no_ckpt.code, 4);
}

TEST(Cli, SynthIsIdempotent) {
    const auto d = work("synth");
    const auto cfg = (config_dir / "quick.json").string();
    ASSERT_EQ(cli("synth --config " + cfg + " --out " + (d / "a").string(), d).code, 0);
    ASSERT_EQ(cli("synth --config " + cfg + " --out " + (d / "b").string(), d).code, 0);
    ASSERT_EQ(cli("synth --config " + cfg + " --out " + (d / "b").string(), d).code, 0);
    for (const char* f : {"manifest.csv", "payloads.bin", "cohort.json"}) {
        EXPECT_EQ(debias::io::read_file(d / "a" / f), debias::io::read_file(d / "b" / f)) << f;
    }
    ASSERT_EQ(cli("synth --config " + cfg + " --seed 99 --out " + (d / "c").string(), d).code, 0);
    EXPECT_NE(debias::io::read_file(d / "a" / "payloads.bin"), debias::io::read_file(d / "c" / "payloads.bin"));
}

TEST(Cli, LambdaZeroAblationMatchesBaseline) {
    const auto d = work("lambda0");
    const auto cfg = (config_dir / "quick.json").string();
    ASSERT_EQ(cli("synth --config " + cfg + " --out " + (d / "c").string(), d).code, 0);
    ASSERT_EQ(cli("train --cohort " + (d / "c").string() + " --config " + cfg + " --out " + (d / "base").string(), d).code,
              0);
    ASSERT_EQ(cli("train --cohort " + (d / "c").string() + " --config " + cfg + " --ablate --lambda 0 --out " +
                      (d / "abl").string(),
                  d)
                  .code,
              0);
    EXPECT_EQ(debias::io::read_text(d / "base" / "folds.json"), debias::io::read_text(d / "abl" / "folds.json"));
    for (int f = 0; f < 3; ++f) {
        const std::string name = "fold" + std::to_string(f) + ".ckpt";
        const auto a = debias::nn::load_checkpoint(d / "base" / "checkpoints" / name);
        const auto b = debias::nn::load_checkpoint(d / "abl" / "checkpoints" / name);
        EXPECT_TRUE(a.bundle.fe == b.bundle.fe) << name;
        EXPECT_TRUE(a.bundle.msi_head == b.bundle.msi_head) << name;
        EXPECT_TRUE(fs::exists(d / "abl" / "checkpoints" / ("fold" + std::to_string(f) + "_full.ckpt")));
        EXPECT_TRUE(fs::exists(d / "base" / ("history_fold" + std::to_string(f) + ".csv")));
    }
}

TEST(Cli, EvalAndReport) {
    const auto d = work("eval");
    auto j = quick_config();
    j["metrics"] = {{"pca_max_points", 50}};
    const auto cfg = write_json(d / "cfg.json", j).string();
    ASSERT_EQ(cli("synth --config " + cfg + " --out " + (d / "c").string(), d).code, 0);
    ASSERT_EQ(cli("train --cohort " + (d / "c").string() + " --config " + cfg + " --out " + (d / "base").string(), d).code,
              0);
    ASSERT_EQ(cli("train --cohort " + (d / "c").string() + " --config " + cfg + " --ablate --out " + (d / "abl").string(),
                  d)
                  .code,
              0);
    for (const char* run : {"base", "abl"}) {
        ASSERT_EQ(cli("eval --run " + (d / run).string() + " --cohort " + (d / "c").string(), d).code, 0) << run;
        for (const char* f : {"metrics.json", "strata.csv", "predictions.csv", "pca.json"}) {
            EXPECT_TRUE(fs::exists(d / run / f)) << run << "/" << f;
        }
    }
    const auto plan = debias::train::fold_plan_from_json(json::parse(debias::io::read_text(d / "base" / "folds.json")));
    const auto manifest = debias::io::read_text(d / "c" / "manifest.csv");
    const auto pca = json::parse(debias::io::read_text(d / "base" / "pca.json"));
    ASSERT_EQ(pca["folds"].size(), 3u);
    for (const auto& f : pca["folds"]) {
        const auto n = f["points"].size();
        EXPECT_EQ(n, 50u);
        EXPECT_EQ(f["explained_variance_ratio"].size(), 2u);
        const auto& p = f["points"][0];
        for (const char* k : {"tile_id", "pc1", "pc2", "label", "project", "patient", "glass"}) EXPECT_TRUE(p.contains(k)) << k;
    }
    const auto metrics = json::parse(debias::io::read_text(d / "base" / "metrics.json"));
    EXPECT_TRUE(metrics.contains("by_project"));
    EXPECT_TRUE(metrics.contains("folds"));

    ASSERT_EQ(cli("report " + (d / "base").string() + " " + (d / "abl").string() + " --out " + (d / "cmp.json").string(),
                  d)
                  .code,
              0);
    const auto cmp = json::parse(debias::io::read_text(d / "cmp.json"));
    EXPECT_EQ(cmp["runs"].size(), 2u);
    EXPECT_EQ(cmp["comparisons"].size(), 1u);

    const auto wrong = cli("eval --run " + (d / "nope").string() + " --cohort " + (d / "c").string(), d);
    EXPECT_EQ(wrong.code, 4);
}

TEST(Cli, UntrainedModelOnNoiseCohortShowsNoDependence) {
    const auto d = work("noise");
    auto j = quick_config();
    j["cohort"]["amplitudes"] = {{"class", 0.0}, {"project", 0.0}, {"patient", 0.0}, {"glass", 0.0}, {"noise", 1.0}};
    j["cohort"]["n_patients"] = 400;
    j["cohort"]["spots_per_patient"] = 1;
    j["cohort"]["tiles_per_spot"] = 2;
    j["train"]["lr_task"] = 0.0;
    j["train"]["epochs"] = 1;
    j["train"]["audit_max_samples"] = 2000;
    const auto cfg = write_json(d / "cfg.json", j).string();
    ASSERT_EQ(cli("synth --config " + cfg + " --out " + (d / "c").string(), d).code, 0);
    ASSERT_EQ(cli("train --cohort " + (d / "c").string() + " --config " + cfg + " --out " + (d / "run").string(), d).code,
              0);
    ASSERT_EQ(cli("audit --cohort " + (d / "c").string() + " --checkpoint " + (d / "run" / "checkpoints" / "fold0.ckpt").string() +
                      " --config " + cfg + " --out " + (d / "audit.csv").string(),
                  d)
                  .code,
              0);
    std::istringstream in(debias::io::read_text(d / "audit.csv"));
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        ASSERT_EQ(f.size(), 5u) << line;
        // Two tiles per patient leave the sample statistic biased upwards
        // for the patient variable, so only low-cardinality variables count.
        if (f[1] != "all" || f[2] == "patient") continue;
        EXPECT_LT(std::stod(f[3]), 0.05) << line;
        ++rows;
    }
    EXPECT_GE(rows, 3u);
}
