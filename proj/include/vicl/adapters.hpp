// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "vicl/autograd.hpp"
#include "vicl/backbone.hpp"
#include "vicl/optim.hpp"
#include "vicl/rng.hpp"

namespace vicl {

struct AdapterConfig {
    std::size_t hidden = 16;
    bool residual = true;
    bool single_layer = false; // one d x d linear map instead of the bottleneck

    void validate(std::size_t embed_dim) const;
    bool operator==(const AdapterConfig&) const = default;
};

// Arrangement-specific token adapter: Z = X + W2 gelu(W1 X + b1) + b2 per
// token, with W2 = 0 and b2 = 0 at initialization.
class Adapter {
public:
    Adapter(int arrangement_id, std::size_t embed_dim, const AdapterConfig& cfg, Rng& rng);
    Adapter(const Adapter&) = delete;
    Adapter& operator=(const Adapter&) = delete;
    Adapter(Adapter&&) = default;
    Adapter& operator=(Adapter&&) = default;

    Adapter clone() const;

    int arrangement_id() const { return arrangement_id_; }
    const AdapterConfig& config() const { return cfg_; }
    std::size_t embed_dim() const { return dim_; }
    ParamList& params() { return params_; }
    const ParamList& params() const { return params_; }
    std::size_t parameter_count() const { return params_.count(); }

    Var apply(const Var& tokens) const;
    // Hook for Backbone::mask_logits; valid while this adapter is alive.
    TokenHook hook() const;

private:
    int arrangement_id_;
    std::size_t dim_;
    AdapterConfig cfg_;
    Var w1_, b1_, w2_, b2_;
    ParamList params_;
};

// Entries of the bottleneck: d*h + h + h*d + d (or d*d + d for one layer).
std::size_t adapter_parameter_count(std::size_t embed_dim, const AdapterConfig& cfg);

struct ArrangementScore {
    int arrangement_id = 0;
    double metric = 0.0;
    int rank = 0; // 1 = best
    bool selected = false;
};

struct ArrangementReport {
    std::vector<ArrangementScore> rows; // ordered by arrangement id
    bool higher_is_better = true;

    std::string to_csv() const;
};

// Ranks by metric (ties by arrangement id) and flags the best m.
ArrangementReport rank_arrangements(const std::vector<double>& metric_by_arrangement, bool higher_is_better,
                                    std::size_t m = 4);
// The m best arrangement ids, best first.
std::vector<int> select_preferred(const ArrangementReport& report, std::size_t m = 4);

} // namespace vicl
