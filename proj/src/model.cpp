// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/model.hpp"

namespace vicl {

EpisodeForward forward_episode(const ModelView& model, const EpisodeInput& in) {
    if (!model.backbone) throw Error("forward_episode: missing backbone");
    if (in.supports.empty()) throw Error("forward_episode: empty support set");
    const Backbone& phi = *model.backbone;
    FusedVars fused;
    if (model.fusion) {
        fused = fuse_vars(*model.fusion, in.query_tokens, in.supports);
    } else {
        const auto& s = in.supports.front();
        Var one = constant(Array::vector({1.0}));
        fused = {s.image_patches, s.label_patches, s.feature, one, one, one};
    }
    RolePatches rp{fused.image_patches, fused.label_patches, in.query_patches, constant(mask_patches(phi.config()))};
    const Arrangement& arr = arrangement(model.arrangement_id);
    if (model.adapter) {
        if (model.adapter->arrangement_id() != model.arrangement_id) {
            throw ConfigError("adapter for a" + std::to_string(model.adapter->arrangement_id()) +
                              " used under a" + std::to_string(model.arrangement_id));
        }
        TokenHook hook = model.adapter->hook();
        return {phi.mask_logits(rp, arr, &hook), std::move(fused)};
    }
    return {phi.mask_logits(rp, arr), std::move(fused)};
}

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

EpisodeInput episode_from_panels(const Backbone& backbone, const Panel& query,
                                 const std::vector<const PromptPair*>& supports) {
    const std::size_t patch = backbone.config().patch;
    Array qt = backbone.panel_tokens(query);
    EpisodeInput in;
    in.query_feature = constant(column_mean(qt));
    in.query_tokens = constant(std::move(qt));
    in.query_patches = constant(patchify(query, patch));
    for (const PromptPair* p : supports) {
        Array st = backbone.panel_tokens(p->image);
        Array feat = column_mean(st);
        in.supports.push_back({constant(std::move(st)), constant(patchify(p->image, patch)),
                               constant(patchify(p->label, patch)), constant(std::move(feat))});
    }
    return in;
}

EpisodeInput episode_from_cache(const PoolCache& qc, std::size_t query, const PoolCache& sc,
                                const std::vector<std::size_t>& supports) {
    EpisodeInput in;
    in.query_tokens = constant(qc.tokens.at(query));
    in.query_feature = constant(qc.features.at(query));
    in.query_patches = constant(qc.image_patches.at(query));
    for (std::size_t s : supports) {
        in.supports.push_back({constant(sc.tokens.at(s)), constant(sc.image_patches.at(s)),
                               constant(sc.label_patches.at(s)), constant(sc.features.at(s))});
    }
    return in;
}

EpisodeLoss episode_loss(const EpisodeForward& fwd, const EpisodeInput& in, const std::vector<int>& targets,
                         double lambda, bool use_alignment) {
    Var ce = cross_entropy(fwd.logits, targets);
    EpisodeLoss out;
    out.ce = ce.value()[0];
    if (!use_alignment) {
        out.total = ce;
        return out;
    }
    Var align = alignment_loss(in.query_feature, fwd.fused.feature);
    out.align = align.value()[0];
    out.total = fusion_objective(ce, align, lambda);
    return out;
}

Panel predict(const ModelView& model, const Codebook& codebook, const Panel& query,
              const std::vector<const PromptPair*>& supports, Panel* fused_label) {
    const auto& cfg = model.backbone->config();
    EpisodeInput in = episode_from_panels(*model.backbone, query, supports);
    EpisodeForward fwd = forward_episode(model, in);
    if (fused_label) *fused_label = unpatchify(fwd.fused.label_patches.value(), query.height(), query.width(), cfg.patch);
    return codebook.decode(argmax_rows(fwd.logits.value()), query.height(), query.width());
}

namespace {

std::vector<const PromptPair*> support_pointers(const Episode& e, const SupportPool& pool, std::size_t k) {
    if (k < 1 || k > e.supports.size()) throw ConfigError("episode has fewer supports than K=" + std::to_string(k));
    std::vector<const PromptPair*> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(&pool[e.supports[i]]);
    return out;
}

} // namespace

EvalOutput evaluate(const ModelView& model, const Codebook& codebook, TaskKind kind, const SupportPool& queries,
                    const std::vector<Episode>& episodes, const SupportPool& pool, std::size_t k) {
    return evaluate_ensemble({model}, codebook, kind, queries, episodes, pool, k);
}

EvalOutput evaluate_ensemble(const std::vector<ModelView>& models, const Codebook& codebook, TaskKind kind,
                             const SupportPool& queries, const std::vector<Episode>& episodes,
                             const SupportPool& pool, std::size_t k) {
    if (models.empty()) throw Error("evaluate: no models");
    if (episodes.empty()) throw Error("evaluate: empty split");
    EvalOutput out;
    std::vector<double> values;
    for (const auto& e : episodes) {
        const PromptPair& q = queries[e.query];
        const auto supports = support_pointers(e, pool, k);
        Panel sum;
        Panel fused;
        for (std::size_t m = 0; m < models.size(); ++m) {
            Panel pred = predict(models[m], codebook, q.image, supports, m == 0 ? &fused : nullptr);
            if (m == 0) {
                sum = std::move(pred);
            } else {
                for (std::size_t i = 0; i < sum.size(); ++i) sum.data()[i] += pred.data()[i];
            }
        }
        if (models.size() > 1) {
            for (auto& v : sum.data()) v /= static_cast<double>(models.size());
        }
        values.push_back(score(kind, sum, q.label));
        out.predictions.push_back(std::move(sum));
        out.fused_labels.push_back(std::move(fused));
    }
    out.result = EvalResult::from_values(kind, std::move(values), queries.fingerprint());
    return out;
}

EvalResult evaluate_oracle(const Codebook& codebook, TaskKind kind, const SupportPool& queries) {
    std::vector<double> values;
    for (const auto& q : queries.pairs()) {
        Panel pred = codebook.decode(codebook.quantize(q.label), q.label.height(), q.label.width());
        values.push_back(score(kind, pred, q.label));
    }
    return EvalResult::from_values(kind, std::move(values), queries.fingerprint());
}

EvalResult evaluate_constant(double value, TaskKind kind, const SupportPool& queries) {
    std::vector<double> values;
    for (const auto& q : queries.pairs()) {
        values.push_back(score(kind, Panel(q.label.height(), q.label.width(), value), q.label));
    }
    return EvalResult::from_values(kind, std::move(values), queries.fingerprint());
}

} // namespace vicl
