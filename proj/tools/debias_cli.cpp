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

// debias: synth, preprocess, train, audit, eval and report commands.
// Exit codes: 0 success, 2 config error, 3 generation or training error,
// 4 missing artifact. Errors also go to stderr as one JSON line.

#include "debias/debias.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace debias;

namespace {

int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::config:
    case ErrorKind::parse:
    case ErrorKind::contract:
        return 2;
    case ErrorKind::missing_artifact:
    case ErrorKind::io:
        return 4;
    default:
        return 3;
    }
}

void report_error(const std::string& kind, const std::string& message, int code) {
    std::cerr << json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << "\n";
}

// --- run configuration ---------------------------------------------------

struct MetricConfig {
    double prevalence = 0.15;
    double confidence = 0.95;
    double threshold = 0.5;
    std::size_t pca_max_points = 2000;
};

struct RunConfig {
    std::optional<std::uint64_t> seed;
    json cohort = json::object();
    json train = json::object();
    json preprocess = json::object();
    MetricConfig metrics;
};

json read_json_file(const fs::path& p) {
    if (!fs::exists(p)) fail(ErrorKind::missing_artifact, "file not found: " + p.string());
    try {
        return json::parse(io::read_text(p));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::config, p.string() + ": " + e.what());
    }
}

MetricConfig metric_config_from_json(const json& j, const std::string& path) {
    config::ObjectReader r(j, path);
    MetricConfig m;
    m.prevalence = r.get<double>("prevalence", m.prevalence);
    if (!(m.prevalence > 0.0 && m.prevalence < 1.0)) r.invalid("prevalence", "must lie in (0, 1)");
    m.confidence = r.get<double>("confidence", m.confidence);
    if (!(m.confidence > 0.0 && m.confidence < 1.0)) r.invalid("confidence", "must lie in (0, 1)");
    m.threshold = r.get<double>("threshold", m.threshold);
    if (!(m.threshold >= 0.0 && m.threshold <= 1.0)) r.invalid("threshold", "must lie in [0, 1]");
    m.pca_max_points = r.get<std::size_t>("pca_max_points", m.pca_max_points);
    if (m.pca_max_points < 2) r.invalid("pca_max_points", "must be at least 2");
    r.finish();
    return m;
}

json to_json(const MetricConfig& m) {
    return {{"prevalence", m.prevalence},
            {"confidence", m.confidence},
            {"threshold", m.threshold},
            {"pca_max_points", m.pca_max_points}};
}

RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    const json j = read_json_file(path);
    config::ObjectReader r(j, "");
    if (r.has("seed")) rc.seed = r.get<std::uint64_t>("seed", 0);
    if (const json* c = r.raw("cohort")) rc.cohort = *c;
    if (const json* t = r.raw("train")) rc.train = *t;
    if (const json* p = r.raw("preprocess")) rc.preprocess = *p;
    const json* m = r.raw("metrics");
    r.finish();
    if (m != nullptr) rc.metrics = metric_config_from_json(*m, "metrics");
    return rc;
}

synth::CohortSpec cohort_spec(const RunConfig& rc, std::optional<std::uint64_t> seed) {
    json j = rc.cohort;
    if (!j.is_object()) fail(ErrorKind::config, "cohort: expected an object");
    if (seed) j["seed"] = *seed;
    else if (rc.seed) j["seed"] = *rc.seed;
    return synth::cohort_spec_from_json(j);
}

train::TrainConfig train_config(const RunConfig& rc, std::optional<std::uint64_t> seed) {
    json j = rc.train;
    if (!j.is_object()) fail(ErrorKind::config, "train: expected an object");
    if (seed) j["seed"] = *seed;
    else if (rc.seed) j["seed"] = *rc.seed;
    return train::train_config_from_json(j);
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    return std::to_string(std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
}

void write_metadata(const fs::path& dir, const std::string& command, const json& extra) {
    json m = extra;
    m["command"] = command;
    m["unix_time"] = timestamp();
    io::write_text_atomic(dir / "metadata.json", m.dump(2) + "\n");
}

std::string hash_text(const std::string& s) {
    return io::content_hash(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

std::vector<std::string> audit_candidates(const train::TrainConfig& cfg) {
    if (!cfg.bias_names.empty()) return cfg.bias_names;
    return {"project", "patient", "glass"};
}

// --- synth -----------------------------------------------------------------

json cohort_summary(const synth::Cohort& c) {
    std::map<std::string, std::set<std::string>> by_class, by_project, by_glass;
    for (const auto& t : c.tiles) {
        by_class[std::string(to_string(t.label))].insert(t.patient_id);
        by_project[t.project_id].insert(t.patient_id);
        by_glass[t.glass_id].insert(t.patient_id);
    }
    auto counts = [](const std::map<std::string, std::set<std::string>>& m) {
        json j = json::object();
        for (const auto& [k, v] : m) j[k] = v.size();
        return j;
    };
    std::set<std::string> patients;
    for (const auto& t : c.tiles) patients.insert(t.patient_id);
    return {{"tiles", c.tiles.size()},
            {"patients", patients.size()},
            {"patients_per_class", counts(by_class)},
            {"patients_per_project", counts(by_project)},
            {"patients_per_glass", counts(by_glass)}};
}

void cmd_synth(const std::string& config, const fs::path& out, std::optional<std::uint64_t> seed,
               const std::string& spots_out) {
    const RunConfig rc = load_run_config(config);
    const auto spec = cohort_spec(rc, seed);
    const auto cohort = synth::generate_cohort(spec);
    synth::save_cohort(cohort, out);
    if (!spots_out.empty()) stain::export_spots(spec, spots_out);
    std::cout << cohort_summary(cohort).dump(2) << "\n";
}

// --- preprocess ------------------------------------------------------------

void cmd_preprocess(const fs::path& input, const std::string& config, const fs::path& out) {
    const RunConfig rc = load_run_config(config);
    const auto cfg = stain::preprocess_config_from_json(rc.preprocess);
    const auto res = stain::preprocess_directory(input, out, cfg);
    json summary{{"tiles", res.tiles.size()}, {"skipped_spots", res.skipped.size()}};
    std::cout << summary.dump(2) << "\n";
    for (const auto& s : res.skipped) std::cerr << "skipped spot " << s.spot_id << ": " << s.reason << "\n";
}

// --- train -----------------------------------------------------------------

fs::path checkpoint_path(const fs::path& run, std::size_t fold) {
    return run / "checkpoints" / ("fold" + std::to_string(fold) + ".ckpt");
}

void cmd_train(const fs::path& cohort_dir, const std::string& config, const fs::path& out, bool ablate,
               std::optional<std::size_t> folds, std::optional<double> lambda, std::optional<std::uint64_t> seed) {
    const RunConfig rc = load_run_config(config);
    json tj = rc.train;
    if (!tj.is_object()) fail(ErrorKind::config, "train: expected an object");
    if (folds) tj["folds"] = *folds;
    if (lambda) tj["lambda"] = *lambda;
    RunConfig patched = rc;
    patched.train = tj;
    const auto cfg = train_config(patched, seed);
    if (ablate && cfg.bias_names.empty()) {
        fail(ErrorKind::config, "train.bias_names: --ablate needs at least one bias");
    }
    const auto cohort = synth::load_cohort(cohort_dir);
    const auto data = train::prepare_data(cohort, cfg);
    const auto plan = train::split_folds(cohort, cfg.folds, cfg.seed);

    fs::create_directories(out / "checkpoints");
    const json stored{{"mode", ablate ? "ablated" : "baseline"}, {"train", train::to_json(cfg)},
                      {"metrics", to_json(rc.metrics)}};
    const std::string stored_text = stored.dump(2) + "\n";
    io::write_text_atomic(out / "config.json", stored_text);
    io::write_text_atomic(out / "folds.json", train::to_json(plan).dump(2) + "\n");
    const std::string config_hash = hash_text(stored_text);

    const auto candidates = audit_candidates(cfg);
    train::AuditReport audit;
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const auto rows = train::fold_rows(cohort.tiles, plan.folds[f]);
        const auto res = train::train_fold(data, rows, f, cfg, ablate);
        io::write_text_atomic(out / ("history_fold" + std::to_string(f) + ".csv"), res.history.csv());
        const json extra{{"fold", f}, {"mode", ablate ? "ablated" : "baseline"}, {"epochs_run", res.history.epochs_run}};
        nn::save_checkpoint(train::predictive_part(res.bundle), checkpoint_path(out, f), config_hash, extra);
        if (ablate) {
            nn::save_checkpoint(res.bundle, out / "checkpoints" / ("fold" + std::to_string(f) + "_full.ckpt"),
                                config_hash, extra);
        }
        std::vector<synth::TileRecord> tiles;
        for (auto r : rows.train) tiles.push_back(cohort.tiles[r]);
        train::AuditOptions ao;
        ao.max_samples = cfg.audit_max_samples;
        ao.max_subgroup_categories = cfg.max_subgroup_categories;
        ao.seed = derive_seed(cfg.seed, "audit", f);
        const auto rep = train::audit_biases(res.bundle, select_rows(data.x, rows.train), tiles, candidates,
                                             "fold" + std::to_string(f), ao);
        audit.rows.insert(audit.rows.end(), rep.rows.begin(), rep.rows.end());
        std::cerr << "fold " << f << " done (" << res.history.epochs_run << " epochs)\n";
    }
    io::write_text_atomic(out / "audit.csv", audit.csv());
    write_metadata(out, "train", {{"cohort", cohort_dir.string()}});
}

// --- audit -----------------------------------------------------------------

void cmd_audit(const fs::path& cohort_dir, const fs::path& checkpoint, const std::string& config, const fs::path& out,
               std::optional<std::uint64_t> seed) {
    const auto loaded = nn::load_checkpoint(checkpoint);
    const RunConfig rc = load_run_config(config);
    const auto cfg = train_config(rc, seed);
    const auto cohort = synth::load_cohort(cohort_dir);
    const auto data = train::prepare_data(cohort, cfg);
    if (static_cast<std::size_t>(data.x.cols()) != loaded.bundle.fe.input_dim()) {
        fail(ErrorKind::dimension, "checkpoint input width " + std::to_string(loaded.bundle.fe.input_dim()) +
                                       " does not match the cohort input width " + std::to_string(data.x.cols()));
    }
    train::AuditOptions ao;
    ao.max_samples = cfg.audit_max_samples;
    ao.max_subgroup_categories = cfg.max_subgroup_categories;
    ao.seed = derive_seed(cfg.seed, "audit", 0);
    const auto rep =
        train::audit_biases(loaded.bundle, data.x, cohort.tiles, audit_candidates(cfg), checkpoint.stem().string(), ao);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    io::write_text_atomic(out, rep.csv());
}

// --- eval ------------------------------------------------------------------

json level_summary(const metrics::LevelMetrics& m) {
    return {{"n", m.n},
            {"auc", metrics::to_json(m.auc.value)},
            {"balanced_accuracy", metrics::to_json(m.balanced_accuracy.value)},
            {"sensitivity", metrics::to_json(m.sensitivity.value)},
            {"specificity", metrics::to_json(m.specificity.value)}};
}

json subset_summary(const std::vector<metrics::TilePrediction>& preds, const MetricConfig& mc) {
    const auto r = metrics::evaluate(preds, mc.prevalence, mc.confidence, mc.threshold);
    return {{"tile", level_summary(r.tile)}, {"patient", level_summary(r.patient)}};
}

json by_project(const std::vector<metrics::TilePrediction>& preds, const std::vector<std::string>& projects,
                const MetricConfig& mc) {
    std::map<std::string, std::vector<metrics::TilePrediction>> groups;
    for (std::size_t i = 0; i < preds.size(); ++i) groups[projects[i]].push_back(preds[i]);
    json j = json::object();
    for (const auto& [p, g] : groups) j[p] = subset_summary(g, mc);
    return j;
}

void cmd_eval(const fs::path& run, const fs::path& cohort_dir, std::optional<double> prevalence, const fs::path& out_dir) {
    if (!fs::exists(run / "config.json")) fail(ErrorKind::missing_artifact, "run config not found: " + (run / "config.json").string());
    if (!fs::exists(run / "folds.json")) fail(ErrorKind::missing_artifact, "fold plan not found: " + (run / "folds.json").string());
    const json stored = read_json_file(run / "config.json");
    config::ObjectReader sr(stored, "config.json");
    const json* tjp = sr.raw("train");
    const json* mjp = sr.raw("metrics");
    if (tjp == nullptr || mjp == nullptr) fail(ErrorKind::config, "config.json: train and metrics sections required");
    const json tj = *tjp;
    const json mj = *mjp;
    sr.get<std::string>("mode", "");
    sr.finish();
    const auto cfg = train::train_config_from_json(tj);
    auto mc = metric_config_from_json(mj, "metrics");
    if (prevalence) {
        if (!(*prevalence > 0.0 && *prevalence < 1.0)) fail(ErrorKind::config, "--prevalence: must lie in (0, 1)");
        mc.prevalence = *prevalence;
    }
    const auto plan = train::fold_plan_from_json(read_json_file(run / "folds.json"));
    const auto cohort = synth::load_cohort(cohort_dir);
    const auto data = train::prepare_data(cohort, cfg);

    std::vector<metrics::TilePrediction> all;
    std::vector<std::string> all_projects;
    json folds = json::array();
    json pca_folds = json::array();
    const auto candidates = audit_candidates(cfg);
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const auto loaded = nn::load_checkpoint(checkpoint_path(run, f));
        const auto rows = train::fold_rows(cohort.tiles, plan.folds[f]);
        if (rows.validation.empty()) continue;
        const Matrix x = select_rows(data.x, rows.validation);
        if (static_cast<std::size_t>(x.cols()) != loaded.bundle.fe.input_dim()) {
            fail(ErrorKind::dimension, "fold " + std::to_string(f) + ": checkpoint input width does not match cohort");
        }
        const Vector scores = nn::predict_msi(loaded.bundle, x);
        std::vector<metrics::TilePrediction> preds;
        std::vector<std::string> projects;
        for (std::size_t i = 0; i < rows.validation.size(); ++i) {
            const auto& t = cohort.tiles[rows.validation[i]];
            preds.push_back({t.tile_id, t.patient_id, t.tissue, t.magnification,
                             std::clamp(scores(static_cast<Eigen::Index>(i)), 0.0, 1.0), t.label});
            projects.push_back(t.project_id);
        }
        folds.push_back({{"fold", f}, {"all", subset_summary(preds, mc)}, {"by_project", by_project(preds, projects, mc)}});

        // PCA of the fold's validation features.
        const auto keep = stats::subsample_indices(rows.validation.size(), mc.pca_max_points, derive_seed(cfg.seed, "pca", f));
        const Matrix feats = nn::forward(loaded.bundle.fe, select_rows(x, keep));
        json points = json::array();
        json evr = json::array();
        if (feats.rows() >= 2 && feats.cols() >= 2) {
            const auto pca = stats::pca_project(feats, 2);
            for (Eigen::Index k = 0; k < 2; ++k) evr.push_back(pca.explained_variance_ratio(k));
            for (std::size_t i = 0; i < keep.size(); ++i) {
                const auto& t = cohort.tiles[rows.validation[keep[i]]];
                json pt{{"tile_id", t.tile_id},
                        {"pc1", pca.scores(static_cast<Eigen::Index>(i), 0)},
                        {"pc2", pca.scores(static_cast<Eigen::Index>(i), 1)},
                        {"label", std::string(to_string(t.label))}};
                for (const auto& b : candidates) pt[b] = synth::variable_value(t, b);
                points.push_back(std::move(pt));
            }
        }
        pca_folds.push_back({{"fold", f}, {"explained_variance_ratio", evr}, {"points", points}});
        all.insert(all.end(), preds.begin(), preds.end());
        all_projects.insert(all_projects.end(), projects.begin(), projects.end());
    }
    if (all.empty()) fail(ErrorKind::empty_input, "no validation tiles to evaluate");
    const auto report = metrics::evaluate(all, mc.prevalence, mc.confidence, mc.threshold);
    json mj_out = metrics::to_json(report);
    mj_out["by_project"] = by_project(all, all_projects, mc);
    mj_out["folds"] = folds;
    fs::create_directories(out_dir);
    io::write_text_atomic(out_dir / "metrics.json", mj_out.dump(2) + "\n");
    io::write_text_atomic(out_dir / "strata.csv", metrics::strata_csv(report));
    io::write_text_atomic(out_dir / "predictions.csv", metrics::predictions_csv(all));
    io::write_text_atomic(out_dir / "pca.json", json{{"folds", pca_folds}}.dump(2) + "\n");
}

// --- report ----------------------------------------------------------------

struct AuditCell {
    std::map<std::string, std::vector<double>> values;  // key "subgroup|variable"
};

AuditCell read_audit(const fs::path& run) {
    const auto p = run / "audit.csv";
    if (!fs::exists(p)) fail(ErrorKind::missing_artifact, "audit not found: " + p.string());
    const auto text = io::read_text(p);
    AuditCell cell;
    std::size_t start = 0;
    bool header = true;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const auto line = text.substr(start, end - start);
        start = end + 1;
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        const auto f = synth::split_csv_line(line);
        if (f.size() != 5) fail(ErrorKind::parse, p.string() + ": malformed row '" + line + "'");
        if (f[3] == "NA") continue;
        if (f[1] != "all" && f[1] != "label=MSS") continue;
        cell.values[f[1] + "|" + f[2]].push_back(std::stod(f[3]));
    }
    return cell;
}

json mean_sd(const std::vector<double>& v) {
    if (v.empty()) return {{"mean", nullptr}, {"sd", nullptr}, {"n", 0}};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    s = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
    return {{"mean", m}, {"sd", s}, {"n", v.size()}};
}

json delta(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return b.get<double>() - a.get<double>();
    return nullptr;
}

void cmd_report(const std::vector<std::string>& runs, const fs::path& out) {
    if (runs.size() < 2) fail(ErrorKind::config, "report: needs at least two run directories");
    std::vector<json> metrics;
    std::vector<AuditCell> audits;
    for (const auto& r : runs) {
        const auto mp = fs::path(r) / "metrics.json";
        if (!fs::exists(mp)) fail(ErrorKind::missing_artifact, "metrics not found (run eval first): " + mp.string());
        metrics.push_back(read_json_file(mp));
        audits.push_back(read_audit(r));
    }
    json runs_out = json::array();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        json dc = json::object();
        for (const auto& [k, v] : audits[i].values) dc[k] = mean_sd(v);
        runs_out.push_back({{"run", fs::path(runs[i]).filename().string()}, {"dc", dc}});
    }
    json comparisons = json::array();
    const auto& ref = metrics[0];
    for (std::size_t i = 1; i < runs.size(); ++i) {
        const auto& cur = metrics[i];
        json fold_rows = json::array();
        const auto& rf = ref.at("folds");
        const auto& cf = cur.at("folds");
        for (std::size_t f = 0; f < std::min(rf.size(), cf.size()); ++f) {
            json row{{"fold", rf[f].at("fold")}};
            auto level_delta = [&](const json& a, const json& b) {
                json d = json::object();
                for (const char* level : {"tile", "patient"}) {
                    d[level] = {{"auc", delta(a.at(level).at("auc"), b.at(level).at("auc"))},
                                {"balanced_accuracy",
                                 delta(a.at(level).at("balanced_accuracy"), b.at(level).at("balanced_accuracy"))}};
                }
                return d;
            };
            row["all"] = level_delta(rf[f].at("all"), cf[f].at("all"));
            json projects = json::object();
            for (const auto& [p, v] : rf[f].at("by_project").items()) {
                if (cf[f].at("by_project").contains(p)) projects[p] = level_delta(v, cf[f].at("by_project").at(p));
            }
            row["by_project"] = projects;
            fold_rows.push_back(std::move(row));
        }
        json dc = json::object();
        for (const auto& [k, v] : audits[0].values) {
            const auto it = audits[i].values.find(k);
            if (it == audits[i].values.end()) continue;
            const auto a = mean_sd(v);
            const auto b = mean_sd(it->second);
            dc[k] = {{"reference_mean", a["mean"]}, {"mean", b["mean"]}, {"delta", delta(a["mean"], b["mean"])}};
        }
        comparisons.push_back({{"reference", fs::path(runs[0]).filename().string()},
                               {"run", fs::path(runs[i]).filename().string()},
                               {"folds", fold_rows},
                               {"dc", dc}});
    }
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    io::write_text_atomic(out, json{{"runs", runs_out}, {"comparisons", comparisons}}.dump(2) + "\n");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic TMA cohorts, bias-ablation training, audits and clinical metrics"};
    app.require_subcommand(1);
    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "Global seed, overriding config seeds");

    std::string config, out, cohort_dir, input, spots_out, checkpoint, run_dir;
    std::optional<std::size_t> folds;
    std::optional<double> lambda, prevalence;
    bool ablate = false;
    std::vector<std::string> runs;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
    synth->add_option("--config", config, "Run config JSON")->required();
    synth->add_option("--out", out, "Cohort directory")->required();
    synth->add_option("--spots", spots_out, "Also write raw spots for preprocess");

    auto* pre = app.add_subcommand("preprocess", "Normalize, tile and filter spot images");
    pre->add_option("--input", input, "Directory with spots.json")->required();
    pre->add_option("--config", config, "Run config JSON");
    pre->add_option("--out", out, "Output cohort directory")->required();

    auto* tr = app.add_subcommand("train", "Cross-validated baseline or bias-ablated training");
    tr->add_option("--cohort", cohort_dir, "Cohort directory")->required();
    tr->add_option("--config", config, "Run config JSON");
    tr->add_option("--out", out, "Run directory")->required();
    tr->add_flag("--ablate", ablate, "Attach bias heads and train adversarially");
    tr->add_option("--folds", folds, "Number of folds");
    tr->add_option("--lambda", lambda, "Adversarial weight");

    auto* au = app.add_subcommand("audit", "Distance-correlation audit of a checkpoint");
    au->add_option("--cohort", cohort_dir, "Cohort directory")->required();
    au->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    au->add_option("--config", config, "Run config JSON");
    au->add_option("--out", out, "Audit CSV path")->required();

    auto* ev = app.add_subcommand("eval", "Validation metrics of a run");
    ev->add_option("--run", run_dir, "Run directory")->required();
    ev->add_option("--cohort", cohort_dir, "Cohort directory")->required();
    ev->add_option("--prevalence", prevalence, "Assumed MSI-H prevalence");
    ev->add_option("--out", out, "Output directory (default: the run directory)");

    auto* rep = app.add_subcommand("report", "Compare runs against the first one");
    rep->add_option("runs", runs, "Run directories, reference first")->required();
    rep->add_option("--out", out, "Comparison JSON path")->required();

    for (auto* sub : {synth, pre, tr, au, ev, rep}) sub->add_option("--seed", seed, "Global seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("usage", e.what(), 2);
        return 2;
    }

    try {
        if (synth->parsed()) {
            cmd_synth(config, out, seed, spots_out);
        } else if (pre->parsed()) {
            cmd_preprocess(input, config, out);
        } else if (tr->parsed()) {
            cmd_train(cohort_dir, config, out, ablate, folds, lambda, seed);
        } else if (au->parsed()) {
            cmd_audit(cohort_dir, checkpoint, config, out, seed);
        } else if (ev->parsed()) {
            cmd_eval(run_dir, cohort_dir, prevalence, out.empty() ? fs::path(run_dir) : fs::path(out));
        } else if (rep->parsed()) {
            cmd_report(runs, out);
        }
    } catch (const Error& e) {
        const int code = exit_code(e.kind());
        report_error(std::string(to_string(e.kind())), e.what(), code);
        return code;
    } catch (const json::exception& e) {
        report_error("config", e.what(), 2);
        return 2;
    } catch (const std::exception& e) {
        report_error("internal", e.what(), 3);
        return 3;
    }
    return 0;
}
