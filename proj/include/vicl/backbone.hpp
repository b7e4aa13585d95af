// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "vicl/codebook.hpp"
#include "vicl/grid.hpp"
#include "vicl/ops.hpp"
#include "vicl/optim.hpp"
#include "vicl/rng.hpp"

namespace vicl {

struct BackboneConfig {
    std::size_t canvas = 64;
    std::size_t patch = 8;
    std::size_t embed_dim = 64;
    std::size_t blocks = 4;
    std::size_t heads = 4;
    std::size_t ffn_mult = 4;
    std::size_t vocab = 64;

    std::size_t panel() const { return canvas / 2; }
    std::size_t grid() const { return canvas / patch; }
    std::size_t tokens() const { return grid() * grid(); }
    std::size_t panel_grid() const { return panel() / patch; }
    std::size_t panel_tokens() const { return panel_grid() * panel_grid(); }
    std::size_t patch_dim() const { return patch * patch * 3; }

    void validate() const;
    bool operator==(const BackboneConfig&) const = default;
};

// Applied to the [tokens x embed_dim] matrix after patch embedding and
// positional addition, before the encoder blocks.
using TokenHook = std::function<Var(const Var&)>;

// Per-role patch matrices of one canvas, each [panel_tokens x patch_dim].
struct RolePatches {
    Var support_image;
    Var support_label;
    Var query_image;
    Var mask;
};

RolePatches role_patches(const Canvas& canvas, std::size_t patch);
// Constant patch matrix of a mask_fill panel.
Array mask_patches(const BackboneConfig& cfg, double mask_fill = kDefaultMaskFill);

// Patch-token transformer encoder with a token-prediction head. Not copyable:
// parameters are shared handles, use clone() for an independent copy.
class Backbone {
public:
    Backbone(const BackboneConfig& cfg, Rng& rng);
    Backbone(const Backbone&) = delete;
    Backbone& operator=(const Backbone&) = delete;
    Backbone(Backbone&&) = default;
    Backbone& operator=(Backbone&&) = default;

    Backbone clone() const;

    const BackboneConfig& config() const { return cfg_; }
    ParamList& params() { return params_; }
    const ParamList& params() const { return params_; }

    // Canvas token rows covered by a quadrant, raster order within it.
    std::vector<std::size_t> quadrant_rows(Quadrant q) const;

    // [T_masked x V] logits for the MASK quadrant, raster order.
    Var mask_logits(const RolePatches& patches, const Arrangement& arr, const TokenHook* hook = nullptr) const;
    Var mask_logits(const Canvas& canvas, const TokenHook* hook = nullptr) const;

    // Encoder output (after final norm) for a lone panel placed at the
    // top-left positions: [panel_tokens x embed_dim].
    Var encode_panel(const Var& panel_patches) const;
    Array panel_tokens(const Panel& panel) const;
    Array pooled_feature(const Panel& panel) const;

private:
    Var encode(Var tokens) const;
    Var embed(const Var& patches, const std::vector<std::size_t>& pos_rows) const;

    struct Block {
        Var ln1_g, ln1_b, wqkv, bqkv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
    };

    BackboneConfig cfg_;
    Var patch_w_, patch_b_, pos_;
    std::vector<Block> blocks_;
    Var lnf_g_, lnf_b_, head_w_, head_b_;
    ParamList params_;
};

std::vector<int> argmax_rows(const Array& logits);

// Replaces the MASK quadrant with decode(argmax logits); other quadrants are
// copied untouched.
Canvas inpaint(const Canvas& canvas, const Backbone& backbone, const Codebook& codebook,
               const TokenHook* hook = nullptr);
// Same, from precomputed logits.
Canvas inpaint_with_logits(const Canvas& canvas, const Array& logits, const Codebook& codebook);

struct PretrainTriple {
    Panel support_image;
    Panel support_label;
    Panel query_image;
    Panel query_label;
};

struct PretrainConfig {
    std::size_t epochs = 12;
    std::size_t batch = 16;
    double lr = 2e-3;
    KMeansOptions kmeans;
};

struct PretrainResult {
    Backbone backbone;
    Codebook codebook;
    std::vector<double> loss_trace; // mean batch loss per optimizer step
};

// Builds the codebook by k-means over all panels, then trains the encoder with
// masked-token cross-entropy on a1 canvases.
PretrainResult pretrain(const std::vector<PretrainTriple>& data, const BackboneConfig& cfg, const PretrainConfig& pcfg,
                        Rng& rng);

double masked_token_accuracy(const Backbone& backbone, const Codebook& codebook,
                             const std::vector<PretrainTriple>& data);

} // namespace vicl
