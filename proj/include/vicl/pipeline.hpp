// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "vicl/config.hpp"
#include "vicl/episodes.hpp"
#include "vicl/metrics.hpp"
#include "vicl/prompt_store.hpp"
#include "vicl/report.hpp"

namespace vicl {

// Per-stage status, checkpoints, metrics, wall-clock and peak memory,
// persisted as ledger.json in the output directory.
class RunLedger {
public:
    explicit RunLedger(std::string path); // loads an existing ledger if present

    void begin(const std::string& stage);
    void finish(const std::string& stage, double seconds, const std::vector<std::string>& checkpoints,
                nlohmann::ordered_json metrics);
    void fail(const std::string& stage, const std::string& message);
    void set_config(const std::string& resolved);

    const nlohmann::ordered_json& json() const { return doc_; }
    void save() const;

private:
    std::string path_;
    nlohmann::ordered_json doc_;
};

// Peak resident set size of this process in KiB (0 where unavailable).
std::size_t peak_rss_kib();

// Pools, splits and retrieved episodes; a pure function of the config and
// the pretrained backbone.
struct RunData {
    SupportPool pool;    // supports, plus the training and ranking queries
    SupportPool heldout; // test queries
    std::set<PairId> rank_ids;
    RetrievalScope train_scope;
    RetrievalScope test_scope;
    std::vector<Episode> train;
    std::vector<Episode> rank;
    std::vector<Episode> test;
};

RunData prepare_data(const RunConfig& cfg, const Backbone& pretrained);

// Per-fold means of per-query values, followed by their mean.
std::vector<double> fold_row(const std::vector<double>& values, const SupportPool& queries);
std::vector<std::string> fold_columns();
std::vector<std::string> arrangement_columns();

// Row names of the ablation and arrangement-grid reports.
const std::vector<std::string>& ablation_rows();
const std::vector<std::string>& grid_rows();

class Pipeline {
public:
    explicit Pipeline(RunConfig cfg); // cfg must be finalized

    static const std::vector<std::string>& commands();
    void run(const std::string& command);

    std::string path(const std::string& relative) const;
    const RunConfig& config() const { return cfg_; }

private:
    nlohmann::ordered_json pretrain(std::vector<std::string>& ckpts);
    nlohmann::ordered_json stage1(std::vector<std::string>& ckpts);
    nlohmann::ordered_json stage2(std::vector<std::string>& ckpts);
    nlohmann::ordered_json stage3(std::vector<std::string>& ckpts);
    nlohmann::ordered_json evaluate(std::vector<std::string>& ckpts);
    nlohmann::ordered_json report(std::vector<std::string>& ckpts);

    void run_stage(const std::string& name);

    RunConfig cfg_;
    RunLedger ledger_;
};

} // namespace vicl
