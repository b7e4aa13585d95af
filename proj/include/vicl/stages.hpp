// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "vicl/adapters.hpp"
#include "vicl/fusion.hpp"
#include "vicl/model.hpp"

namespace vicl {

struct StageTrace {
    std::vector<double> loss; // mean objective per optimizer step
    std::vector<double> ce;
    std::vector<double> align;
};

// Called after every optimizer step with the number of steps taken so far.
using StepObserver = std::function<void(std::size_t step)>;

// Ids of a seeded `fraction` of the pool, used for arrangement ranking and
// final-model selection.
std::set<PairId> holdout_split(const SupportPool& pool, double fraction, std::uint64_t seed);

// Episodes whose query is (or is not) in `ids`.
std::vector<Episode> filter_episodes(const std::vector<Episode>& episodes, const std::set<PairId>& ids, bool keep);

// ---- Stage I: fusion module with a frozen backbone ----

struct Stage1Config {
    std::size_t k = 16;
    double lambda = 0.6;
    std::size_t epochs = 150;
    double lr = 0.03;
    double momentum = 0.9;
    std::size_t batch = 16;
};

// Supports come from `cache`/`episodes` over the training pool (the query's
// own pair excluded at retrieval). Only `f` is updated.
StageTrace train_stage1(FusionModule& f, Backbone& phi, const PoolCache& cache, const std::vector<Episode>& episodes,
                        const Stage1Config& cfg, Rng& rng, const StepObserver& observer = {});

// Same schedule and batching as train_stage1 but the prompt is the top-1
// support itself (no fusion module).
StageTrace stage1_baseline_trace(Backbone& phi, const PoolCache& cache, const std::vector<Episode>& episodes,
                                 const Stage1Config& cfg, Rng& rng);

// Mean CE of the masked tokens over episodes; with `random_prompt` each query
// gets one uniformly drawn support instead.
double mean_episode_ce(const ModelView& model, const PoolCache& cache, const std::vector<Episode>& episodes,
                       std::size_t k, bool random_prompt, Rng& rng);

// ---- Stage II: arrangement adapters with frozen f and backbone ----

struct Stage2Config {
    std::size_t k = 16;
    std::size_t epochs = 10;
    double lr = 0.03;
    double momentum = 0.9;
    std::size_t batch = 16;
    std::size_t select = 4;
    AdapterConfig adapter;
};

struct Stage2Result {
    std::vector<Adapter> adapters; // index i holds arrangement i + 1
    ArrangementReport report;
    std::vector<int> preferred;
    std::vector<StageTrace> traces;
};

// Called after arrangement `id` finishes with every adapter trained so far.
using Stage2Observer = std::function<void(int id, const std::vector<Adapter>& trained)>;

// Trains one adapter per arrangement on `train_episodes` and ranks them by the
// task metric on `rank_episodes`.
Stage2Result train_stage2(const FusionModule& f, Backbone& phi, const Codebook& codebook, TaskKind kind,
                          const SupportPool& pool, const PoolCache& cache, const std::vector<Episode>& train_episodes,
                          const std::vector<Episode>& rank_episodes, const Stage2Config& cfg, Rng& rng,
                          const Stage2Observer& after_each = {});

// ---- Stage III: joint fine-tuning with query/support swapping ----

struct FinetuneModel {
    int arrangement_id = 1;
    Backbone backbone;
    std::optional<FusionModule> fusion;
    std::optional<Adapter> adapter;

    ModelView view() const;
    FinetuneModel clone() const;
};

struct Stage3Config {
    std::size_t k = 16;
    std::size_t swaps = 2; // N
    std::size_t epochs = 10;
    double lr = 0.03;
    double momentum = 0.9;
    bool train_fusion = true;
    bool train_adapter = true;
    bool train_backbone = true;
    std::size_t max_examples = 0; // 0: every training episode, per epoch

    void validate() const;
};

struct Stage3Trace {
    StageTrace trace;
    std::vector<std::size_t> subiterations; // per processed example
};

PromptPair make_new_pair(const Panel& query, const Panel& prediction, PairId fresh_id);

struct SwappedSupports {
    std::vector<const PromptPair*> supports;
    const PromptPair* query = nullptr; // the displaced support, now the query
};

// Replaces the n-th support (1-based) with p_new; the displaced pair becomes
// the query.
SwappedSupports swap_supports(const std::vector<const PromptPair*>& supports, const PromptPair& p_new, std::size_t n);

// Forward pass and CE for one (query, supports) example under the model's
// arrangement. Panel tokens are taken from the current backbone but detached.
struct FinetuneStep {
    Var loss;
    Panel prediction;
};
FinetuneStep forward_finetune(const FinetuneModel& model, const Codebook& codebook, const Panel& query_image,
                              const Panel& query_label, const std::vector<const PromptPair*>& supports);

Stage3Trace train_stage3(FinetuneModel& model, const Codebook& codebook, const SupportPool& pool,
                         const std::vector<Episode>& episodes, const Stage3Config& cfg, Rng& rng);

} // namespace vicl
