// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <tuple>

namespace vicl {

std::string Ablation::name() const {
    std::vector<std::string> parts;
    if (fusion_mean) parts.emplace_back("fusion=mean");
    if (reuse_off) parts.emplace_back("reuse=off");
    if (residual_off) parts.emplace_back("residual=off");
    if (single_layer) parts.emplace_back("layers=1");
    if (parts.empty()) return "full";
    std::string out = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) out += "," + parts[i];
    return out;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

Ablation parse_ablation(const std::string& text, Ablation base) {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty() || item == "full" || item == "none") continue;
        if (item == "fusion=mean") {
            base.fusion_mean = true;
        } else if (item == "reuse=off") {
            base.reuse_off = true;
        } else if (item == "residual=off") {
            base.residual_off = true;
        } else if (item == "layers=1") {
            base.single_layer = true;
        } else {
            throw ConfigError("ablation: unknown switch '" + item +
                              "' (expected fusion=mean, reuse=off, residual=off or layers=1)");
        }
    }
    return base;
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError(key + ": invalid value '" + value + "' (expected " + expected + ")");
}

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    bad_value(key, v, "true or false");
}

std::string fmt(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

struct Entry {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define VICL_SIZE(key, expr)                                                                  \
    Entry {                                                                                   \
        key, [](RunConfig& c, const std::string& v) { c.expr = to_size(key, v); },            \
            [](const RunConfig& c) { return std::to_string(c.expr); }                         \
    }
#define VICL_DOUBLE(key, expr)                                                                \
    Entry {                                                                                   \
        key, [](RunConfig& c, const std::string& v) { c.expr = to_double(key, v); },          \
            [](const RunConfig& c) { return fmt(c.expr); }                                    \
    }
#define VICL_BOOL(key, expr)                                                                  \
    Entry {                                                                                   \
        key, [](RunConfig& c, const std::string& v) { c.expr = to_bool(key, v); },            \
            [](const RunConfig& c) { return fmt(c.expr); }                                    \
    }

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        {"task", [](RunConfig& c, const std::string& v) { c.task = parse_task(v); },
         [](const RunConfig& c) { return task_name(c.task); }},
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); },
         [](const RunConfig& c) { return std::to_string(c.seed); }},
        VICL_SIZE("pool.size", pool_size),
        VICL_SIZE("pool.heldout", heldout_size),
        VICL_DOUBLE("pool.rank_fraction", rank_fraction),

        VICL_SIZE("backbone.canvas", backbone.canvas),
        VICL_SIZE("backbone.patch", backbone.patch),
        VICL_SIZE("backbone.embed_dim", backbone.embed_dim),
        VICL_SIZE("backbone.blocks", backbone.blocks),
        VICL_SIZE("backbone.heads", backbone.heads),
        VICL_SIZE("backbone.ffn_mult", backbone.ffn_mult),
        VICL_SIZE("backbone.vocab", backbone.vocab),
        VICL_SIZE("kmeans.iterations", kmeans.iterations),
        VICL_SIZE("kmeans.max_samples", kmeans.max_samples),
        VICL_SIZE("pretrain.count", pretrain_count),
        VICL_SIZE("pretrain.epochs", pretrain_epochs),
        VICL_SIZE("pretrain.batch", pretrain_batch),
        VICL_DOUBLE("pretrain.lr", pretrain_lr),

        VICL_SIZE("method.k", k),
        VICL_SIZE("method.n", n),
        VICL_DOUBLE("method.lambda", lambda),

        VICL_SIZE("fusion.depth", fusion.depth),
        VICL_SIZE("fusion.heads", fusion.heads),
        VICL_SIZE("fusion.expansion", fusion.expansion),
        {"fusion.mode",
         [](RunConfig& c, const std::string& v) {
             if (v == "attention") {
                 c.fusion.mode = FusionMode::Attention;
             } else if (v == "mean") {
                 c.fusion.mode = FusionMode::Mean;
             } else {
                 bad_value("fusion.mode", v, "attention or mean");
             }
         },
         [](const RunConfig& c) { return std::string(c.fusion.mode == FusionMode::Mean ? "mean" : "attention"); }},
        VICL_BOOL("fusion.reuse", fusion.reuse),

        VICL_SIZE("adapter.hidden", adapter.hidden),
        VICL_BOOL("adapter.residual", adapter.residual),
        {"adapter.layers",
         [](RunConfig& c, const std::string& v) {
             const std::size_t n = to_size("adapter.layers", v);
             if (n != 1 && n != 2) bad_value("adapter.layers", v, "1 or 2");
             c.adapter.single_layer = n == 1;
         },
         [](const RunConfig& c) { return std::string(c.adapter.single_layer ? "1" : "2"); }},

        VICL_SIZE("stage1.epochs", stage1.epochs),
        VICL_DOUBLE("stage1.lr", stage1.lr),
        VICL_DOUBLE("stage1.momentum", stage1.momentum),
        VICL_SIZE("stage1.batch", stage1.batch),

        VICL_SIZE("stage2.epochs", stage2.epochs),
        VICL_DOUBLE("stage2.lr", stage2.lr),
        VICL_DOUBLE("stage2.momentum", stage2.momentum),
        VICL_SIZE("stage2.batch", stage2.batch),
        VICL_SIZE("stage2.select", stage2.select),

        VICL_SIZE("stage3.epochs", stage3.epochs),
        VICL_DOUBLE("stage3.lr", stage3.lr),
        VICL_DOUBLE("stage3.momentum", stage3.momentum),
        VICL_SIZE("stage3.max_examples", stage3.max_examples),
        VICL_SIZE("stage3.arrangements", stage3_arrangements),
        VICL_BOOL("stage3.train_fusion", stage3.train_fusion),
        VICL_BOOL("stage3.train_adapter", stage3.train_adapter),
        VICL_BOOL("stage3.train_backbone", stage3.train_backbone),

        VICL_BOOL("ablations.enabled", run_ablations),
        VICL_SIZE("ablations.stage3_arrangements", ablation_stage3_arrangements),
        VICL_BOOL("grid.enabled", run_grid),
        VICL_SIZE("grid.epochs", grid_epochs),
        VICL_SIZE("grid.examples", grid_examples),

        {"ablation", [](RunConfig& c, const std::string& v) { c.ablation = parse_ablation(v); },
         [](const RunConfig& c) { return c.ablation.name(); }},
        {"mode",
         [](RunConfig& c, const std::string& v) {
             if (v == "single") {
                 c.mode = EvalMode::Single;
             } else if (v == "ensemble") {
                 c.mode = EvalMode::Ensemble;
             } else {
                 bad_value("mode", v, "single or ensemble");
             }
         },
         [](const RunConfig& c) { return std::string(c.mode == EvalMode::Ensemble ? "ensemble" : "single"); }},
        {"out",
         [](RunConfig& c, const std::string& v) {
             if (v.empty()) bad_value("out", v, "a directory path");
             c.out_dir = v;
         },
         [](const RunConfig& c) { return c.out_dir; }},
    };
    return table;
}

#undef VICL_SIZE
#undef VICL_DOUBLE
#undef VICL_BOOL

void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key + ": " + what);
}

} // namespace

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& e : entries()) {
        if (e.key == key) {
            e.set(cfg, trim(value));
            return;
        }
    }
    throw ConfigError(key + ": unknown configuration key");
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
        }
        apply_setting(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

void RunConfig::finalize() {
    backbone.validate();
    kmeans.vocab = backbone.vocab;
    require(pool_size >= 2, "pool.size", "must be at least 2");
    require(heldout_size >= 1, "pool.heldout", "must be at least 1");
    require(rank_fraction > 0.0 && rank_fraction < 1.0, "pool.rank_fraction", "must be in (0, 1)");
    require(pretrain_count >= 1, "pretrain.count", "must be at least 1");
    require(pretrain_batch >= 1, "pretrain.batch", "must be at least 1");
    require(pretrain_lr > 0.0, "pretrain.lr", "must be positive");
    require(k >= 1, "method.k", "must be at least 1");
    require(n <= k, "method.n", "must satisfy 0 <= N <= K (K=" + std::to_string(k) + ")");
    require(lambda >= 0.0 && lambda <= 1.0, "method.lambda", "must be in [0, 1]");
    const std::size_t train_pool = pool_size - static_cast<std::size_t>(rank_fraction * static_cast<double>(pool_size));
    require(k < train_pool, "method.k", "must be smaller than the training pool");

    if (ablation.fusion_mean) fusion.mode = FusionMode::Mean;
    if (ablation.reuse_off) fusion.reuse = false;
    if (ablation.residual_off) adapter.residual = false;
    if (ablation.single_layer) adapter.single_layer = true;
    fusion.validate(backbone.embed_dim);
    adapter.validate(backbone.embed_dim);
    const std::size_t fusion_params = fusion_parameter_count(backbone.embed_dim, fusion);
    const std::size_t adapter_params = adapter_parameter_count(backbone.embed_dim, adapter);
    require(10 * adapter_params < fusion_params, ablation.single_layer ? "adapter.layers" : "adapter.hidden",
            "adapter has " + std::to_string(adapter_params) + " parameters, not under 10% of the fusion module's " +
                std::to_string(fusion_params));

    for (const auto& [key, lr, m] :
         {std::tuple{"stage1", stage1.lr, stage1.momentum}, std::tuple{"stage2", stage2.lr, stage2.momentum},
          std::tuple{"stage3", stage3.lr, stage3.momentum}}) {
        require(lr > 0.0, std::string(key) + ".lr", "must be positive");
        require(m >= 0.0 && m < 1.0, std::string(key) + ".momentum", "must be in [0, 1)");
    }
    require(stage1.batch >= 1, "stage1.batch", "must be at least 1");
    require(stage2.batch >= 1, "stage2.batch", "must be at least 1");
    require(stage2.select >= 1 && stage2.select <= 8, "stage2.select", "must be in [1, 8]");
    require(stage3_arrangements >= 1 && stage3_arrangements <= stage2.select, "stage3.arrangements",
            "must be in [1, stage2.select]");
    require(ablation_stage3_arrangements >= 1 && ablation_stage3_arrangements <= stage2.select,
            "ablations.stage3_arrangements", "must be in [1, stage2.select]");

    stage1.k = k;
    stage1.lambda = lambda;
    stage2.k = k;
    stage2.adapter = adapter;
    stage3.k = k;
    stage3.swaps = n;
    stage3.validate();
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& e : entries()) out += e.key + " = " + e.get(*this) + "\n";
    return out;
}

} // namespace vicl
