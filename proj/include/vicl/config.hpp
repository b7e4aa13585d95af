// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vicl/adapters.hpp"
#include "vicl/backbone.hpp"
#include "vicl/fusion.hpp"
#include "vicl/stages.hpp"
#include "vicl/tasks.hpp"

namespace vicl {

enum class EvalMode : std::uint8_t { Single, Ensemble };

// Ablation switches; several may be combined.
struct Ablation {
    bool fusion_mean = false;  // fusion=mean
    bool reuse_off = false;    // reuse=off
    bool residual_off = false; // residual=off
    bool single_layer = false; // layers=1

    bool any() const { return fusion_mean || reuse_off || residual_off || single_layer; }
    std::string name() const; // "full" or e.g. "fusion=mean"
    bool operator==(const Ablation&) const = default;
};

Ablation parse_ablation(const std::string& switch_text, Ablation base = {});

struct RunConfig {
    // task
    TaskKind task = TaskKind::Segmentation;
    std::uint64_t seed = 7;
    std::size_t pool_size = 500;
    std::size_t heldout_size = 100;
    double rank_fraction = 0.2;

    // backbone pretraining
    BackboneConfig backbone;
    KMeansOptions kmeans;
    std::size_t pretrain_count = 8000;
    std::size_t pretrain_epochs = 5;
    std::size_t pretrain_batch = 8;
    double pretrain_lr = 1e-3;

    // method
    std::size_t k = 16;
    std::size_t n = 2;
    double lambda = 0.6;
    FusionConfig fusion;
    AdapterConfig adapter;
    Stage1Config stage1;
    Stage2Config stage2;
    Stage3Config stage3;
    std::size_t stage3_arrangements = 4; // how many of the preferred set are fine-tuned

    // comparison harness
    bool run_ablations = true;
    bool run_grid = true;
    std::size_t grid_epochs = 1;
    std::size_t grid_examples = 100;
    std::size_t ablation_stage3_arrangements = 1;

    Ablation ablation;
    EvalMode mode = EvalMode::Single;
    std::string out_dir = "runs/default";

    std::size_t panel_extent() const { return backbone.panel(); }

    // Copies the shared knobs (K, N, lambda, ablation, hidden) into the
    // per-stage structs and checks every invariant. Errors name the key.
    void finalize();

    // Every key, defaults included, one "key = value" per line.
    std::string to_text() const;
};

// Parses "key = value" lines ('#' comments) on top of `base`. Unknown keys
// and malformed values raise ConfigError naming the key.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

} // namespace vicl
