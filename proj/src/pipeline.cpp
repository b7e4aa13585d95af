// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "vicl/artifacts.hpp"
#include "vicl/image_io.hpp"
#include "vicl/model.hpp"

namespace vicl {

using nlohmann::ordered_json;

// ---- ledger ----

RunLedger::RunLedger(std::string path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) {
        try {
            doc_ = ordered_json::parse(read_file(path_));
        } catch (const ordered_json::exception& e) {
            throw IoError("ledger " + path_ + " is not valid JSON: " + e.what());
        }
    }
    if (!doc_.is_object()) doc_ = ordered_json::object();
    if (!doc_.contains("stages")) doc_["stages"] = ordered_json::object();
}

void RunLedger::begin(const std::string& stage) {
    auto& s = doc_["stages"][stage];
    s["status"] = "running";
    s.erase("error");
    save();
}

void RunLedger::finish(const std::string& stage, double seconds, const std::vector<std::string>& checkpoints,
                       ordered_json metrics) {
    auto& s = doc_["stages"][stage];
    s["status"] = "done";
    s["seconds"] = seconds;
    s["peak_rss_kib"] = peak_rss_kib();
    s["checkpoints"] = checkpoints;
    s["metrics"] = std::move(metrics);
    save();
}

void RunLedger::fail(const std::string& stage, const std::string& message) {
    auto& s = doc_["stages"][stage];
    s["status"] = "failed";
    s["error"] = message;
    save();
}

void RunLedger::set_config(const std::string& resolved) {
    doc_["config"] = resolved;
    save();
}

void RunLedger::save() const { write_file(path_, doc_.dump(2) + "\n"); }

std::size_t peak_rss_kib() {
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("VmHWM:", 0) == 0) {
            std::stringstream ss(line.substr(6));
            std::size_t kib = 0;
            ss >> kib;
            return kib;
        }
    }
    return 0;
}

// ---- data ----

RunData prepare_data(const RunConfig& cfg, const Backbone& pretrained) {
    const std::size_t extent = cfg.panel_extent();
    RunData d;
    d.pool = ingest_synthetic({cfg.task, cfg.seed, cfg.pool_size, extent, -1, true, 0});
    d.heldout = ingest_synthetic({cfg.task, cfg.seed, cfg.heldout_size, extent, -1, true, cfg.pool_size});
    d.pool.compute_features(pretrained);
    d.heldout.compute_features(pretrained);
    d.rank_ids = holdout_split(d.pool, cfg.rank_fraction, cfg.seed);
    d.train_scope = {true, true, d.rank_ids};
    d.test_scope = {false, true, d.rank_ids};

    std::vector<Array> pool_features, heldout_features;
    for (std::size_t i = 0; i < d.pool.size(); ++i) pool_features.push_back(d.pool.feature(i));
    for (std::size_t i = 0; i < d.heldout.size(); ++i) heldout_features.push_back(d.heldout.feature(i));
    const auto all = make_episodes(d.pool, pool_features, d.pool, cfg.k, d.train_scope);
    d.train = filter_episodes(all, d.rank_ids, false);
    d.rank = filter_episodes(all, d.rank_ids, true);
    d.test = make_episodes(d.heldout, heldout_features, d.pool, cfg.k, d.test_scope);
    return d;
}

std::vector<std::string> fold_columns() { return {"Fold-0", "Fold-1", "Fold-2", "Fold-3", "Mean"}; }

std::vector<std::string> arrangement_columns() {
    std::vector<std::string> out;
    for (int i = 1; i <= 8; ++i) out.push_back("a" + std::to_string(i));
    out.emplace_back("Mean");
    return out;
}

const std::vector<std::string>& ablation_rows() {
    static const std::vector<std::string> rows = {"w/o Fusion", "w/o Reuse", "w/o Residual", "1-layer MLP",
                                                  "Full Model"};
    return rows;
}

const std::vector<std::string>& grid_rows() {
    static const std::vector<std::string> rows = {"Base", "Base-FT", "Fuse", "Fuse-FT", "MLP", "MLP-FT"};
    return rows;
}

std::vector<double> fold_row(const std::vector<double>& values, const SupportPool& queries) {
    if (values.size() != queries.size()) throw ShapeError("fold_row: one value per query required");
    std::vector<double> sum(kNumFolds, 0.0), count(kNumFolds, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const int cls = queries[i].target_class;
        if (cls < 0) continue;
        const auto f = static_cast<std::size_t>(fold_of_class(cls));
        sum[f] += values[i];
        count[f] += 1.0;
    }
    std::vector<double> row;
    std::vector<double> present;
    for (int f = 0; f < kNumFolds; ++f) {
        const auto i = static_cast<std::size_t>(f);
        row.push_back(count[i] > 0 ? sum[i] / count[i] : std::numeric_limits<double>::quiet_NaN());
        if (count[i] > 0) present.push_back(row.back());
    }
    row.push_back(present.empty() ? mean_of(values) : mean_of(present));
    return row;
}

// ---- pipeline ----

namespace {

using Clock = std::chrono::steady_clock;

enum Salt : std::uint64_t {
    kPretrainSalt = 1,
    kFusionInitSalt = 2,
    kStage1Salt = 3,
    kStage2Salt = 4,
    kRandomPromptSalt = 5,
    kStage3Salt = 100,
    kAblationSalt = 1000,
    kGridSalt = 2000,
};

Rng stream(const RunConfig& cfg, std::uint64_t salt) { return Rng(cfg.seed).fork(salt); }

std::string adapter_file(int id) { return "checkpoints/adapter_a" + std::to_string(id) + ".ckpt"; }
std::string model_file(int id) { return "checkpoints/final_a" + std::to_string(id) + ".ckpt"; }

// Everything the later stages share, loaded from disk.
struct Context {
    const RunConfig& cfg;
    Backbone phi;
    Codebook codebook;
    RunData data;
    PoolCache cache;
};

Context load_context(const Pipeline& p) {
    const RunConfig& cfg = p.config();
    PretrainedBundle b = load_backbone(p.path("checkpoints/backbone.ckpt"), cfg.backbone);
    RunData data = prepare_data(cfg, b.backbone);
    PoolCache cache = build_pool_cache(data.pool, b.backbone, b.codebook);
    return {cfg, std::move(b.backbone), std::move(b.codebook), std::move(data), std::move(cache)};
}

std::size_t k_for(const ModelView& v, std::size_t k) { return v.fusion ? k : 1; }

EvalOutput test_eval(const Context& c, const ModelView& v) {
    return evaluate(v, c.codebook, c.cfg.task, c.data.heldout, c.data.test, c.data.pool, k_for(v, c.cfg.k));
}

EvalResult rank_eval(const Context& c, const ModelView& v) {
    return evaluate(v, c.codebook, c.cfg.task, c.data.pool, c.data.rank, c.data.pool, k_for(v, c.cfg.k)).result;
}

std::vector<Episode> random_prompt_episodes(const Context& c) {
    Rng rng = stream(c.cfg, kRandomPromptSalt);
    std::vector<Episode> out;
    for (const auto& e : c.data.test) {
        const auto cands = candidate_supports(c.data.heldout[e.query], c.data.pool, c.data.test_scope);
        if (cands.empty()) throw ConfigError("no support candidates for held-out query " + std::to_string(e.query_id));
        out.push_back({e.query, e.query_id, {cands[rng.index(cands.size())]}, {0.0}});
    }
    return out;
}

std::string trace_csv(const StageTrace& t) {
    std::string out = "step,loss,ce,align\n";
    for (std::size_t i = 0; i < t.loss.size(); ++i) {
        out += std::to_string(i) + "," + format_double(t.loss[i]) + "," + format_double(t.ce[i]) + "," +
               format_double(t.align[i]) + "\n";
    }
    return out;
}

bool better(double a, double b, bool higher) { return higher ? a > b : a < b; }

std::vector<int> load_preferred(const Pipeline& p) {
    const std::string path = p.path("metrics/stage2.json");
    require_file(path, "stage2");
    const auto j = ordered_json::parse(read_file(path));
    return j.at("preferred").get<std::vector<int>>();
}

struct Stage3Summary {
    std::vector<int> trained;
    std::vector<int> candidates; // the fine-tuned part of A*
    int selected = 0;
};

Stage3Summary load_stage3(const Pipeline& p) {
    const std::string path = p.path("metrics/stage3.json");
    require_file(path, "stage3");
    const auto j = ordered_json::parse(read_file(path));
    return {j.at("trained").get<std::vector<int>>(), j.at("candidates").get<std::vector<int>>(),
            j.at("selected").get<int>()};
}

// Picks the candidate with the best ranking-split metric; ties keep the
// earlier (better Stage II rank) candidate.
template <typename ModelAt>
int select_on_rank(const Context& c, const std::vector<int>& candidates, const ModelAt& model_at,
                   ordered_json* log = nullptr) {
    const bool higher = higher_is_better(c.cfg.task);
    int best = candidates.front();
    double best_value = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double v = rank_eval(c, model_at(candidates[i])).mean;
        if (log) (*log)["a" + std::to_string(candidates[i])] = v;
        if (i == 0 || better(v, best_value, higher)) {
            best = candidates[i];
            best_value = v;
        }
    }
    return best;
}

Image upscale(const Image& im, std::size_t factor) {
    Image out(im.height() * factor, im.width() * factor);
    for (std::size_t y = 0; y < out.height(); ++y) {
        for (std::size_t x = 0; x < out.width(); ++x) {
            for (std::size_t ch = 0; ch < 3; ++ch) out.at(y, x, ch) = im.at(y / factor, x / factor, ch);
        }
    }
    return out;
}

} // namespace

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)), ledger_(cfg_.out_dir + "/ledger.json") {
    for (const char* sub : {"checkpoints", "metrics", "figures"}) {
        std::filesystem::create_directories(std::filesystem::path(cfg_.out_dir) / sub);
    }
    const std::string resolved = cfg_.to_text();
    write_file(path("config.txt"), resolved);
    ledger_.set_config(resolved);
}

const std::vector<std::string>& Pipeline::commands() {
    static const std::vector<std::string> c = {"pretrain", "stage1", "stage2", "stage3", "eval", "report", "all"};
    return c;
}

std::string Pipeline::path(const std::string& relative) const { return cfg_.out_dir + "/" + relative; }

void Pipeline::run(const std::string& command) {
    if (command == "all") {
        for (const char* s : {"pretrain", "stage1", "stage2", "stage3", "eval", "report"}) run_stage(s);
        return;
    }
    if (std::find(commands().begin(), commands().end(), command) == commands().end()) {
        throw ConfigError("unknown subcommand '" + command + "'");
    }
    run_stage(command);
}

void Pipeline::run_stage(const std::string& name) {
    std::cerr << "[vicl] " << name << " ...\n";
    const auto t0 = Clock::now();
    ledger_.begin(name);
    std::vector<std::string> ckpts;
    ordered_json metrics;
    try {
        if (name == "pretrain") metrics = pretrain(ckpts);
        else if (name == "stage1") metrics = stage1(ckpts);
        else if (name == "stage2") metrics = stage2(ckpts);
        else if (name == "stage3") metrics = stage3(ckpts);
        else if (name == "eval") metrics = evaluate(ckpts);
        else metrics = report(ckpts);
    } catch (const std::exception& e) {
        ledger_.fail(name, e.what());
        throw;
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    ledger_.finish(name, seconds, ckpts, std::move(metrics));
    std::cerr << "[vicl] " << name << " done in " << seconds << " s\n";
}

// ---- pretrain ----

ordered_json Pipeline::pretrain(std::vector<std::string>& ckpts) {
    const auto data = generate_pretrain(cfg_.task, cfg_.seed, cfg_.pretrain_count, cfg_.panel_extent());
    PretrainConfig pc{cfg_.pretrain_epochs, cfg_.pretrain_batch, cfg_.pretrain_lr, cfg_.kmeans};
    Rng rng = stream(cfg_, kPretrainSalt);
    PretrainResult res = vicl::pretrain(data, cfg_.backbone, pc, rng);
    save_checkpoint(path("checkpoints/backbone.ckpt"), backbone_checkpoint(res.backbone, res.codebook));
    ckpts.push_back("checkpoints/backbone.ckpt");
    std::string csv = "step,loss\n";
    for (std::size_t i = 0; i < res.loss_trace.size(); ++i) {
        csv += std::to_string(i) + "," + format_double(res.loss_trace[i]) + "\n";
    }
    write_file(path("metrics/pretrain_loss.csv"), csv);
    return {{"examples", data.size()},
            {"steps", res.loss_trace.size()},
            {"final_loss", res.loss_trace.empty() ? 0.0 : res.loss_trace.back()},
            {"backbone_parameters", res.backbone.params().count()},
            {"backbone_checksum", res.backbone.params().checksum()},
            {"codebook_checksum", res.codebook.checksum()}};
}

// ---- stage I ----

ordered_json Pipeline::stage1(std::vector<std::string>& ckpts) {
    Context c = load_context(*this);
    Rng init = stream(cfg_, kFusionInitSalt);
    FusionModule f(cfg_.backbone.embed_dim, cfg_.fusion, init);
    const auto phi_before = c.phi.params().checksum();
    const auto cb_before = c.codebook.checksum();
    ordered_json out;
    if (cfg_.fusion.mode == FusionMode::Mean) {
        out["training"] = "skipped: fusion=mean has no learned weighting";
    } else {
        Rng rng = stream(cfg_, kStage1Salt);
        const StageTrace trace = train_stage1(f, c.phi, c.cache, c.data.train, cfg_.stage1, rng);
        write_file(path("metrics/stage1_loss.csv"), trace_csv(trace));
        out["steps"] = trace.loss.size();
        out["final_loss"] = trace.loss.back();
    }
    if (c.phi.params().checksum() != phi_before || c.codebook.checksum() != cb_before) {
        throw Error("stage1: backbone or codebook changed while frozen");
    }
    save_checkpoint(path("checkpoints/fusion.ckpt"), fusion_checkpoint(f));
    ckpts.push_back("checkpoints/fusion.ckpt");

    // Held-out references for the learning-signal checks.
    const ModelView fused{&c.phi, &f, nullptr, 1};
    const ModelView top1{&c.phi, nullptr, nullptr, 1};
    const EvalResult r_fused = test_eval(c, fused).result;
    const EvalResult r_top1 = test_eval(c, top1).result;
    const EvalResult r_random =
        vicl::evaluate(top1, c.codebook, cfg_.task, c.data.heldout, random_prompt_episodes(c), c.data.pool, 1).result;
    const EvalResult r_oracle = evaluate_oracle(c.codebook, cfg_.task, c.data.heldout);
    write_file(path("metrics/eval_stage1.csv"), r_fused.to_csv());
    write_file(path("metrics/eval_top1.csv"), r_top1.to_csv());
    write_file(path("metrics/eval_random.csv"), r_random.to_csv());
    write_file(path("metrics/eval_oracle.csv"), r_oracle.to_csv());
    out["fusion_parameters"] = f.parameter_count();
    out["stage1_fused"] = r_fused.mean;
    out["top1_prompt"] = r_top1.mean;
    out["random_prompt"] = r_random.mean;
    out["oracle"] = r_oracle.mean;
    out["phi_checksum"] = phi_before;
    out["codebook_checksum"] = cb_before;
    return out;
}

// ---- stage II ----

ordered_json Pipeline::stage2(std::vector<std::string>& ckpts) {
    Context c = load_context(*this);
    FusionModule f = load_fusion(path("checkpoints/fusion.ckpt"), cfg_.backbone.embed_dim, cfg_.fusion);
    const auto phi_before = c.phi.params().checksum();
    const auto f_before = f.params().checksum();
    Rng rng = stream(cfg_, kStage2Salt);
    Stage2Result res =
        train_stage2(f, c.phi, c.codebook, cfg_.task, c.data.pool, c.cache, c.data.train, c.data.rank, cfg_.stage2, rng);
    if (c.phi.params().checksum() != phi_before || f.params().checksum() != f_before) {
        throw Error("stage2: backbone or fusion module changed while frozen");
    }
    ordered_json ranking = ordered_json::array();
    Table test{"Stage II adapters on the held-out split", "model", arrangement_columns(), {}};
    std::vector<double> row;
    for (int id = 1; id <= 8; ++id) {
        const Adapter& a = res.adapters[static_cast<std::size_t>(id - 1)];
        save_checkpoint(path(adapter_file(id)), adapter_checkpoint(a));
        ckpts.push_back(adapter_file(id));
        row.push_back(test_eval(c, {&c.phi, &f, &a, id}).result.mean);
    }
    row.push_back(mean_of(row));
    test.add_row("MLP", row);
    write_file(path("metrics/stage2_test.csv"), test.to_csv());
    write_file(path("metrics/arrangement_ranking.csv"), res.report.to_csv());
    std::string loss_csv = "arrangement,final_loss\n";
    for (int id = 1; id <= 8; ++id) {
        loss_csv += "a" + std::to_string(id) + "," +
                    format_double(res.traces[static_cast<std::size_t>(id - 1)].loss.back()) + "\n";
    }
    write_file(path("metrics/stage2_loss.csv"), loss_csv);
    ordered_json summary{{"preferred", res.preferred}};
    for (const auto& r : res.report.rows) ranking.push_back({{"arrangement", r.arrangement_id}, {"metric", r.metric}});
    summary["ranking"] = ranking;
    write_file(path("metrics/stage2.json"), summary.dump(2) + "\n");
    return {{"preferred", res.preferred},
            {"adapter_parameters", res.adapters.front().parameter_count()},
            {"test_mean", row.back()}};
}

// ---- stage III ----

ordered_json Pipeline::stage3(std::vector<std::string>& ckpts) {
    Context c = load_context(*this);
    FusionModule f = load_fusion(path("checkpoints/fusion.ckpt"), cfg_.backbone.embed_dim, cfg_.fusion);
    const std::vector<int> preferred = load_preferred(*this);
    std::vector<int> candidates(preferred.begin(),
                                preferred.begin() + static_cast<std::ptrdiff_t>(
                                                        std::min(cfg_.stage3_arrangements, preferred.size())));
    std::vector<int> trained = candidates;
    if (std::find(trained.begin(), trained.end(), 1) == trained.end()) trained.push_back(1); // a1 reference

    ordered_json out;
    std::vector<FinetuneModel> models;
    std::set<std::size_t> subiterations;
    for (int id : trained) {
        Adapter a = load_adapter(path(adapter_file(id)), id, cfg_.backbone.embed_dim, cfg_.adapter);
        FinetuneModel m{id, c.phi.clone(), f.clone(), std::move(a)};
        Rng rng = stream(cfg_, kStage3Salt + static_cast<std::uint64_t>(id));
        const Stage3Trace t = train_stage3(m, c.codebook, c.data.pool, c.data.train, cfg_.stage3, rng);
        subiterations.insert(t.subiterations.begin(), t.subiterations.end());
        save_checkpoint(path(model_file(id)), model_checkpoint(m));
        ckpts.push_back(model_file(id));
        write_file(path("metrics/stage3_loss_a" + std::to_string(id) + ".csv"), trace_csv(t.trace));
        const EvalResult r = test_eval(c, m.view()).result;
        write_file(path("metrics/eval_stage3_a" + std::to_string(id) + ".csv"), r.to_csv());
        out["test"]["a" + std::to_string(id)] = r.mean;
        models.push_back(std::move(m));
    }
    auto model_at = [&](int id) {
        for (const auto& m : models) {
            if (m.arrangement_id == id) return m.view();
        }
        throw Error("stage3: no model for a" + std::to_string(id));
    };
    ordered_json rank_log;
    const int selected = select_on_rank(c, candidates, model_at, &rank_log);
    for (const auto& m : models) {
        if (m.arrangement_id == selected) save_checkpoint(path("checkpoints/final.ckpt"), model_checkpoint(m));
    }
    ckpts.push_back("checkpoints/final.ckpt");
    write_file(path("metrics/stage3.json"),
               ordered_json{{"trained", trained}, {"candidates", candidates}, {"selected", selected}, {"rank", rank_log}}
                       .dump(2) +
                   "\n");
    out["selected"] = selected;
    out["rank"] = rank_log;
    out["subiterations_per_example"] = std::vector<std::size_t>(subiterations.begin(), subiterations.end());
    return out;
}

// ---- evaluation, ablations and the arrangement grid ----

namespace {

struct Harness {
    Context& c;
    const FusionModule& f;
    const Pipeline& p;

    Stage3Config budget(bool fusion, bool adapter, bool backbone, std::size_t swaps) const {
        Stage3Config g = c.cfg.stage3;
        g.epochs = c.cfg.grid_epochs;
        g.max_examples = c.cfg.grid_examples;
        g.train_fusion = fusion;
        g.train_adapter = adapter;
        g.train_backbone = backbone;
        g.swaps = swaps;
        return g;
    }

    double test_mean(const ModelView& v) const { return test_eval(c, v).result.mean; }

    std::vector<double> grid_row(const std::string& name, const std::vector<Adapter>& adapters) const {
        std::vector<double> row;
        for (int id = 1; id <= 8; ++id) {
            const std::uint64_t salt = kGridSalt + 10 * static_cast<std::uint64_t>(id);
            Rng rng = stream(c.cfg, salt);
            if (name == "Base") {
                row.push_back(test_mean({&c.phi, nullptr, nullptr, id}));
            } else if (name == "Base-FT") {
                FinetuneModel m{id, c.phi.clone(), std::nullopt, std::nullopt};
                train_stage3(m, c.codebook, c.data.pool, c.data.train, budget(false, false, true, c.cfg.n), rng);
                row.push_back(test_mean(m.view()));
            } else if (name == "Fuse" || name == "Fuse-FT") {
                FinetuneModel m{id, c.phi.clone(), f.clone(), std::nullopt};
                train_stage3(m, c.codebook, c.data.pool, c.data.train, budget(true, false, false, 0), rng);
                if (name == "Fuse-FT") {
                    Rng ft = stream(c.cfg, salt + 1);
                    train_stage3(m, c.codebook, c.data.pool, c.data.train, budget(true, true, true, c.cfg.n), ft);
                }
                row.push_back(test_mean(m.view()));
            } else if (name == "MLP") {
                row.push_back(test_mean({&c.phi, &f, &adapters[static_cast<std::size_t>(id - 1)], id}));
            } else {
                FinetuneModel m{id, c.phi.clone(), f.clone(), adapters[static_cast<std::size_t>(id - 1)].clone()};
                train_stage3(m, c.codebook, c.data.pool, c.data.train, budget(true, true, true, c.cfg.n), rng);
                row.push_back(test_mean(m.view()));
            }
        }
        row.push_back(mean_of(row));
        return row;
    }

    // The full method under one ablation: Stage I (when the fusion changes),
    // Stage II over all arrangements, Stage III on the top-ranked ones.
    std::vector<double> ablation_row(const Ablation& a, std::size_t index) const {
        RunConfig cfg = c.cfg;
        cfg.ablation = a;
        cfg.finalize();
        const std::uint64_t salt = kAblationSalt + 100 * static_cast<std::uint64_t>(index);
        std::optional<FusionModule> own;
        if (a.fusion_mean || a.reuse_off) {
            Rng init = stream(cfg, kFusionInitSalt);
            own.emplace(cfg.backbone.embed_dim, cfg.fusion, init);
            if (!a.fusion_mean) {
                Rng rng = stream(cfg, kStage1Salt);
                train_stage1(*own, c.phi, c.cache, c.data.train, cfg.stage1, rng);
            }
        }
        const FusionModule& fa = own ? *own : f;
        Rng rng2 = stream(cfg, salt + 1);
        Stage2Result s2 =
            train_stage2(fa, c.phi, c.codebook, cfg.task, c.data.pool, c.cache, c.data.train, c.data.rank, cfg.stage2, rng2);
        std::vector<FinetuneModel> models;
        std::vector<int> candidates;
        for (std::size_t i = 0; i < cfg.ablation_stage3_arrangements; ++i) {
            const int id = s2.preferred[i];
            candidates.push_back(id);
            FinetuneModel m{id, c.phi.clone(), fa.clone(), s2.adapters[static_cast<std::size_t>(id - 1)].clone()};
            Rng rng3 = stream(cfg, salt + 10 + static_cast<std::uint64_t>(id));
            train_stage3(m, c.codebook, c.data.pool, c.data.train, cfg.stage3, rng3);
            models.push_back(std::move(m));
        }
        auto model_at = [&](int id) {
            for (const auto& m : models) {
                if (m.arrangement_id == id) return m.view();
            }
            throw Error("ablation: no model for a" + std::to_string(id));
        };
        const int chosen = candidates.size() == 1 ? candidates.front() : select_on_rank(c, candidates, model_at);
        return fold_row(test_eval(c, model_at(chosen)).result.values, c.data.heldout);
    }
};

} // namespace

ordered_json Pipeline::evaluate(std::vector<std::string>& ckpts) {
    (void)ckpts;
    Context c = load_context(*this);
    FusionModule f = load_fusion(path("checkpoints/fusion.ckpt"), cfg_.backbone.embed_dim, cfg_.fusion);
    const Stage3Summary s3 = load_stage3(*this);
    std::vector<FinetuneModel> finals;
    for (int id : s3.trained) finals.push_back(load_model(path(model_file(id)), cfg_.backbone));
    auto final_view = [&](int id) {
        for (const auto& m : finals) {
            if (m.arrangement_id == id) return m.view();
        }
        throw PrerequisiteError("eval: no fine-tuned model for a" + std::to_string(id));
    };

    ordered_json out;
    EvalResult final_result;
    if (cfg_.mode == EvalMode::Ensemble) {
        std::vector<ModelView> views;
        for (int id : s3.candidates) views.push_back(final_view(id));
        final_result = evaluate_ensemble(views, c.codebook, cfg_.task, c.data.heldout, c.data.test, c.data.pool, cfg_.k)
                           .result;
        out["mode"] = "ensemble";
        out["arrangements"] = s3.candidates;
    } else {
        const FinetuneModel final_model = load_model(path("checkpoints/final.ckpt"), cfg_.backbone);
        final_result = test_eval(c, final_model.view()).result;
        out["mode"] = "single";
        out["arrangement"] = final_model.arrangement_id;
    }
    write_file(path("metrics/final_eval.csv"), final_result.to_csv());
    write_file(path("metrics/final_eval.json"), final_result.to_json() + "\n");

    auto read_eval = [&](const std::string& rel, const std::string& producer) {
        require_file(path(rel), producer);
        return EvalResult::from_csv(read_file(path(rel)));
    };
    const EvalResult r_random = read_eval("metrics/eval_random.csv", "stage1");
    const EvalResult r_top1 = read_eval("metrics/eval_top1.csv", "stage1");
    const EvalResult r_stage1 = read_eval("metrics/eval_stage1.csv", "stage1");
    const EvalResult r_oracle = read_eval("metrics/eval_oracle.csv", "stage1");
    const EvalResult r_a1 = read_eval("metrics/eval_stage3_a1.csv", "stage3");
    const EvalResult r_sel = read_eval("metrics/eval_stage3_a" + std::to_string(s3.selected) + ".csv", "stage3");

    Table folds{"Held-out metric per fold", "model", fold_columns(), {}};
    folds.add_row("Random prompt", fold_row(r_random.values, c.data.heldout));
    folds.add_row("Top-1 prompt", fold_row(r_top1.values, c.data.heldout));
    folds.add_row("Stage I fused", fold_row(r_stage1.values, c.data.heldout));
    folds.add_row("Final", fold_row(final_result.values, c.data.heldout));
    folds.add_row("Quantization ceiling", fold_row(r_oracle.values, c.data.heldout));
    write_file(path("metrics/folds.csv"), folds.to_csv());

    ordered_json summary{{"metric", metric_name(cfg_.task)},
                         {"random_prompt", r_random.mean},
                         {"top1_prompt", r_top1.mean},
                         {"stage1_fused", r_stage1.mean},
                         {"final", final_result.mean},
                         {"final_std_error", final_result.std_error},
                         {"selected_arrangement", s3.selected},
                         {"selected_after_stage3", r_sel.mean},
                         {"a1_after_stage3", r_a1.mean},
                         {"oracle", r_oracle.mean}};

    const Harness h{c, f, *this};
    if (cfg_.run_ablations && !cfg_.ablation.any()) {
        const auto t0 = Clock::now();
        Table ablation{"Ablation of model components", "variant", fold_columns(), {}};
        const std::vector<Ablation> variants = {parse_ablation("fusion=mean"), parse_ablation("reuse=off"),
                                                parse_ablation("residual=off"), parse_ablation("layers=1")};
        for (std::size_t i = 0; i < variants.size(); ++i) {
            std::cerr << "[vicl]   ablation " << variants[i].name() << "\n";
            ablation.add_row(ablation_rows()[i], h.ablation_row(variants[i], i + 1));
        }
        // Full model under the same Stage III protocol.
        std::vector<int> cands(s3.candidates.begin(),
                               s3.candidates.begin() +
                                   static_cast<std::ptrdiff_t>(
                                       std::min(cfg_.ablation_stage3_arrangements, s3.candidates.size())));
        const int chosen = cands.size() == 1 ? cands.front() : select_on_rank(c, cands, final_view);
        ablation.add_row(ablation_rows()[4], fold_row(test_eval(c, final_view(chosen)).result.values, c.data.heldout));
        write_file(path("metrics/ablation.csv"), ablation.to_csv());
        out["ablation_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
    }
    if (cfg_.run_grid) {
        const auto t0 = Clock::now();
        std::vector<Adapter> adapters;
        for (int id = 1; id <= 8; ++id) {
            adapters.push_back(load_adapter(path(adapter_file(id)), id, cfg_.backbone.embed_dim, cfg_.adapter));
        }
        Table grid{"Per-arrangement metric", "variant", arrangement_columns(), {}};
        for (const auto& name : grid_rows()) {
            std::cerr << "[vicl]   grid " << name << "\n";
            grid.add_row(name, h.grid_row(name, adapters));
        }
        write_file(path("metrics/grid.csv"), grid.to_csv());
        out["grid_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
    }

    const std::size_t d = cfg_.backbone.embed_dim;
    Table efficiency{"Parameter counts", "component", {"parameters"}, {}};
    efficiency.add_row("Backbone", {static_cast<double>(c.phi.params().count())});
    efficiency.add_row("Fusion module", {static_cast<double>(fusion_parameter_count(d, cfg_.fusion))});
    efficiency.add_row("Adapter (one arrangement)", {static_cast<double>(adapter_parameter_count(d, cfg_.adapter))});
    write_file(path("metrics/parameters.csv"), efficiency.to_csv());

    write_file(path("metrics/summary.json"), summary.dump(2) + "\n");
    out["summary"] = summary;
    return out;
}

// ---- report ----

ordered_json Pipeline::report(std::vector<std::string>& ckpts) {
    (void)ckpts;
    auto table = [&](const std::string& rel, const std::string& title, const std::string& producer) {
        require_file(path(rel), producer);
        return Table::from_csv(read_file(path(rel)), title);
    };
    std::vector<Table> tables;
    tables.push_back(table("metrics/folds.csv", "Held-out metric per fold", "eval"));
    tables.push_back(table("metrics/stage2_test.csv", "Stage II adapters on the held-out split", "stage2"));
    if (cfg_.run_ablations && !cfg_.ablation.any()) {
        Table t = table("metrics/ablation.csv", "Ablation of model components", "eval");
        if (t.rows.size() != ablation_rows().size()) throw Error("report: ablation table must have 5 rows");
        tables.push_back(std::move(t));
    }
    if (cfg_.run_grid) {
        Table t = table("metrics/grid.csv", "Per-arrangement metric", "eval");
        if (t.columns.size() != 9) throw Error("report: grid table must have a1..a8 and Mean columns");
        tables.push_back(std::move(t));
    }
    const Table params = table("metrics/parameters.csv", "Parameter counts", "eval");
    const double scale = cfg_.task == TaskKind::Colorization ? 1.0 : 100.0;
    std::string md = "# Run report\n\nMetric: " + std::string(metric_name(cfg_.task)) +
                     (scale == 100.0 ? " (x100)" : "") + ", seed " + std::to_string(cfg_.seed) + "\n\n";
    for (const auto& t : tables) md += t.to_markdown(scale, scale == 100.0 ? 2 : 4) + "\n";
    md += params.to_markdown(1.0, 0) + "\n";
    write_file(path("report.md"), md);

    // Qualitative strips: query | fused image | fused label | prediction | ground truth.
    Context c = load_context(*this);
    const FinetuneModel m = load_model(path("checkpoints/final.ckpt"), cfg_.backbone);
    const std::size_t k = m.fusion ? cfg_.k : 1, factor = 4;
    std::vector<Image> rows;
    for (std::size_t i = 0; i < std::min<std::size_t>(6, c.data.test.size()); ++i) {
        const Episode& e = c.data.test[i];
        const PromptPair& q = c.data.heldout[e.query];
        std::vector<const PromptPair*> supports;
        for (std::size_t s = 0; s < k; ++s) supports.push_back(&c.data.pool[e.supports[s]]);
        EpisodeInput in = episode_from_panels(m.backbone, q.image, supports);
        EpisodeForward fwd = forward_episode(m.view(), in);
        const std::size_t ext = q.image.height(), patch = cfg_.backbone.patch;
        Panel fused_image = unpatchify(fwd.fused.image_patches.value(), ext, ext, patch);
        Panel fused_label = unpatchify(fwd.fused.label_patches.value(), ext, ext, patch);
        Panel pred = c.codebook.decode(argmax_rows(fwd.logits.value()), ext, ext);
        std::vector<Image> cells;
        for (const Panel* p : std::initializer_list<const Panel*>{&q.image, &fused_image, &fused_label, &pred, &q.label}) {
            cells.push_back(upscale(*p, factor));
        }
        rows.push_back(hstack(cells));
    }
    write_png(path("figures/qualitative.png"), vstack(rows));

    // The eight arrangements of one canvas.
    const Episode& e = c.data.test.front();
    const PromptPair& s = c.data.pool[e.supports.front()];
    std::vector<Image> top, bottom;
    for (int id = 1; id <= 8; ++id) {
        Canvas cv = compose(s.image, s.label, c.data.heldout[e.query].image, arrangement(id));
        (id <= 4 ? top : bottom).push_back(upscale(cv.pixels, 2));
    }
    write_png(path("figures/arrangements.png"), vstack({hstack(top), hstack(bottom)}));
    return {{"report", "report.md"}, {"figures", {"figures/qualitative.png", "figures/arrangements.png"}}};
}

} // namespace vicl
