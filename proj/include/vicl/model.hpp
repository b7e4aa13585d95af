// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "vicl/adapters.hpp"
#include "vicl/backbone.hpp"
#include "vicl/codebook.hpp"
#include "vicl/episodes.hpp"
#include "vicl/fusion.hpp"
#include "vicl/metrics.hpp"

namespace vicl {

// Non-owning view of the components used for one prediction. Without a
// fusion module the top-1 support is used as the prompt; without an adapter
// the tokens go straight into the encoder.
struct ModelView {
    const Backbone* backbone = nullptr;
    const FusionModule* fusion = nullptr;
    const Adapter* adapter = nullptr;
    int arrangement_id = 1;
};

struct EpisodeInput {
    Var query_tokens;  // [T x d]
    Var query_feature; // [d]
    Var query_patches; // [T x patch_dim]
    std::vector<SupportView> supports;
};

struct EpisodeForward {
    Var logits; // [T x V] for the MASK quadrant
    FusedVars fused;
};

EpisodeForward forward_episode(const ModelView& model, const EpisodeInput& in);

// Builds an episode from panels; tokens and features come from `model.backbone`
// and are constants.
EpisodeInput episode_from_panels(const Backbone& backbone, const Panel& query,
                                 const std::vector<const PromptPair*>& supports);
// Same from a frozen-backbone cache.
EpisodeInput episode_from_cache(const PoolCache& query_cache, std::size_t query, const PoolCache& support_cache,
                                const std::vector<std::size_t>& supports);

// The CE + alignment objective used by every training stage.
struct EpisodeLoss {
    Var total;
    double ce = 0.0;
    double align = 0.0;
};
EpisodeLoss episode_loss(const EpisodeForward& fwd, const EpisodeInput& in, const std::vector<int>& targets,
                         double lambda, bool use_alignment);

Panel predict(const ModelView& model, const Codebook& codebook, const Panel& query,
              const std::vector<const PromptPair*>& supports, Panel* fused_label = nullptr);

struct EvalOutput {
    EvalResult result;
    std::vector<Panel> predictions;
    std::vector<Panel> fused_labels;
};

// Scores every query of `queries` against its episode's supports in `pool`.
EvalOutput evaluate(const ModelView& model, const Codebook& codebook, TaskKind kind, const SupportPool& queries,
                    const std::vector<Episode>& episodes, const SupportPool& pool, std::size_t k);
// Averages decoded predictions of several models before scoring.
EvalOutput evaluate_ensemble(const std::vector<ModelView>& models, const Codebook& codebook, TaskKind kind,
                             const SupportPool& queries, const std::vector<Episode>& episodes,
                             const SupportPool& pool, std::size_t k);

// Inpaints decode(quantize(label)) for every query: the codebook ceiling.
EvalResult evaluate_oracle(const Codebook& codebook, TaskKind kind, const SupportPool& queries);
// Predicts a constant panel for every query.
EvalResult evaluate_constant(double value, TaskKind kind, const SupportPool& queries);

} // namespace vicl
