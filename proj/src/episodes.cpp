// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/episodes.hpp"

#include "vicl/tasks.hpp"

namespace vicl {

namespace {

Array column_mean(const Array& tok) {
    const std::size_t t = tok.rows(), d = tok.cols();
    Array out({d}, 0.0);
    for (std::size_t r = 0; r < t; ++r) {
        for (std::size_t c = 0; c < d; ++c) out[c] += tok[r * d + c];
    }
    for (auto& v : out.storage()) v /= static_cast<double>(t);
    return out;
}

} // namespace

void refresh_features(PoolCache& cache, const SupportPool& pool, const Backbone& backbone) {
    cache.tokens.clear();
    cache.features.clear();
    for (const auto& p : pool.pairs()) {
        cache.tokens.push_back(backbone.panel_tokens(p.image));
        cache.features.push_back(column_mean(cache.tokens.back()));
    }
    cache.backbone_checksum = backbone.params().checksum();
}

PoolCache build_pool_cache(const SupportPool& pool, const Backbone& backbone, const Codebook& codebook) {
    const std::size_t patch = backbone.config().patch;
    if (codebook.patch() != patch) throw ConfigError("codebook patch size does not match backbone");
    PoolCache c;
    refresh_features(c, pool, backbone);
    for (const auto& p : pool.pairs()) {
        c.image_patches.push_back(patchify(p.image, patch));
        c.label_patches.push_back(patchify(p.label, patch));
        c.label_tokens.push_back(codebook.quantize(p.label));
    }
    return c;
}

namespace {

bool in_scope(const PromptPair& query, const PromptPair& support, const RetrievalScope& scope) {
    if (scope.exclude_self && support.id == query.id) return false;
    if (scope.excluded.count(support.id) > 0) return false;
    if (scope.same_fold && query.target_class >= 0 && support.target_class >= 0 &&
        fold_of_class(query.target_class) != fold_of_class(support.target_class)) {
        return false;
    }
    return true;
}

} // namespace

std::vector<std::size_t> candidate_supports(const PromptPair& query, const SupportPool& support_pool,
                                            const RetrievalScope& scope) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < support_pool.size(); ++i) {
        if (in_scope(query, support_pool[i], scope)) out.push_back(i);
    }
    return out;
}

std::vector<Episode> make_episodes(const SupportPool& queries, const std::vector<Array>& query_features,
                                   const SupportPool& support_pool, std::size_t k, const RetrievalScope& scope) {
    if (query_features.size() != queries.size()) throw ShapeError("make_episodes: one feature per query required");
    std::vector<Episode> out;
    out.reserve(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
        std::set<PairId> exclude;
        for (const auto& p : support_pool.pairs()) {
            if (!in_scope(queries[q], p, scope)) exclude.insert(p.id);
        }
        auto hits = retrieve_topk(query_features[q], support_pool, k, exclude);
        Episode e{q, queries[q].id, {}, {}};
        for (const auto& h : hits) {
            e.supports.push_back(h.index);
            e.scores.push_back(h.score);
        }
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace vicl
