// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <vector>

#include "vicl/backbone.hpp"
#include "vicl/codebook.hpp"
#include "vicl/prompt_store.hpp"

namespace vicl {

// Per-pair tensors of a pool under one backbone and codebook.
struct PoolCache {
    std::vector<Array> tokens;         // [T x d] panel tokens of each image
    std::vector<Array> features;       // [d] pooled features
    std::vector<Array> image_patches;  // [T x patch_dim]
    std::vector<Array> label_patches;  // [T x patch_dim]
    std::vector<std::vector<int>> label_tokens;
    std::uint64_t backbone_checksum = 0;

    std::size_t size() const { return tokens.size(); }
};

PoolCache build_pool_cache(const SupportPool& pool, const Backbone& backbone, const Codebook& codebook);

// Refreshes tokens and features only (patches and label tokens do not depend
// on the backbone).
void refresh_features(PoolCache& cache, const SupportPool& pool, const Backbone& backbone);

// A query and its retrieved supports (indices into the support pool).
struct Episode {
    std::size_t query = 0;
    PairId query_id = 0;
    std::vector<std::size_t> supports;
    std::vector<double> scores;
};

struct RetrievalScope {
    bool exclude_self = false;      // a query never retrieves the pair carrying its own id
    bool same_fold = false;         // only supports whose class lies in the query's fold
    std::set<PairId> excluded;      // never retrieved
};

// Retrieves the top-K supports from `support_pool` (whose features must be
// computed) for every pair of `queries`.
std::vector<Episode> make_episodes(const SupportPool& queries, const std::vector<Array>& query_features,
                                   const SupportPool& support_pool, std::size_t k, const RetrievalScope& scope);

// Support indices of `support_pool` that `query` may draw from under `scope`.
std::vector<std::size_t> candidate_supports(const PromptPair& query, const SupportPool& support_pool,
                                            const RetrievalScope& scope);

} // namespace vicl
