// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "vicl/backbone.hpp"
#include "vicl/ops.hpp"
#include "vicl/optim.hpp"
#include "vicl/prompt_store.hpp"
#include "vicl/rng.hpp"

namespace vicl {

enum class FusionMode : std::uint8_t { Attention, Mean };

struct FusionConfig {
    std::size_t depth = 2;     // residual MLP blocks in each of the query/key stacks
    std::size_t heads = 4;
    std::size_t expansion = 4; // hidden width multiplier of those blocks
    FusionMode mode = FusionMode::Attention;
    bool reuse = true; // false: labels are fused with uniform weights

    void validate(std::size_t embed_dim) const;
    bool operator==(const FusionConfig&) const = default;
};

// Trainable parameter count of a FusionModule built with these settings.
std::size_t fusion_parameter_count(std::size_t embed_dim, const FusionConfig& cfg);

// Fusion module f: multi-head cross-attention from query patch tokens to the
// tokens of K supports. The attention mass each support receives, averaged
// over query tokens and merged across heads, is its weight alpha_k.
class FusionModule {
public:
    FusionModule(std::size_t embed_dim, const FusionConfig& cfg, Rng& rng);
    FusionModule(const FusionModule&) = delete;
    FusionModule& operator=(const FusionModule&) = delete;
    FusionModule(FusionModule&&) = default;
    FusionModule& operator=(FusionModule&&) = default;

    FusionModule clone() const;

    const FusionConfig& config() const { return cfg_; }
    std::size_t embed_dim() const { return dim_; }
    ParamList& params() { return params_; }
    const ParamList& params() const { return params_; }
    std::size_t parameter_count() const { return params_.count(); }

    // alpha as a [K] vector on the simplex. K = 1 yields exactly [1].
    Var attend(const Var& query_tokens, const std::vector<Var>& support_tokens) const;

private:
    struct Block {
        Var w1, b1, w2, b2;
    };
    struct Stack {
        std::vector<Block> blocks;
        Var proj_w, proj_b;
    };
    Stack make_stack(const std::string& prefix, Rng& rng);
    Var project(const Stack& s, const Var& x) const;

    std::size_t dim_;
    FusionConfig cfg_;
    Stack query_, key_;
    Var head_logits_;
    ParamList params_;
};

// Everything fuse needs to know about one support pair.
struct SupportView {
    Var tokens;         // [T x d] panel tokens of the support image
    Var image_patches;  // [T x patch_dim]
    Var label_patches;  // [T x patch_dim]
    Var feature;        // [d] pooled feature
};

// Differentiable fused pair. The three weight handles are the ones actually
// applied to the images, labels and features.
struct FusedVars {
    Var image_patches;
    Var label_patches;
    Var feature;
    Var image_weights;
    Var label_weights;
    Var feature_weights;
};

FusedVars fuse_vars(const FusionModule& f, const Var& query_tokens, const std::vector<SupportView>& supports);

struct FusedPair {
    Panel fused_image;
    Panel fused_label;
    std::vector<double> weights;
    Array fused_feature;
    std::vector<double> label_weights;
    std::vector<double> feature_weights;
};

// Convenience wrapper over panels: tokens and features come from `backbone`.
FusedPair fuse(const Panel& query, const std::vector<const PromptPair*>& supports, const Backbone& backbone,
               const FusionModule& f);

Var alignment_loss(const Var& query_feature, const Var& fused_feature);
Var fusion_objective(const Var& ce, const Var& align, double lambda);
double fusion_objective(double ce, double align, double lambda);

} // namespace vicl
