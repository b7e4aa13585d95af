// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/fusion.hpp"

#include <cmath>

#include "vicl/codebook.hpp"

namespace vicl {

void FusionConfig::validate(std::size_t embed_dim) const {
    if (heads == 0 || embed_dim % heads != 0) {
        throw ConfigError("fusion.heads: must divide embed_dim (" + std::to_string(embed_dim) + "), got " +
                          std::to_string(heads));
    }
    if (expansion == 0) throw ConfigError("fusion.expansion: must be >= 1");
}

std::size_t fusion_parameter_count(std::size_t d, const FusionConfig& cfg) {
    const std::size_t h = d * cfg.expansion;
    const std::size_t stack = cfg.depth * (d * h + h + h * d + d) + d * d + d;
    return 2 * stack + cfg.heads;
}

namespace {

Array random_matrix(std::size_t r, std::size_t c, double stddev, Rng& rng) {
    Array a(Shape{r, c});
    for (auto& v : a.storage()) v = rng.normal(0.0, stddev);
    return a;
}

Var uniform_weights(std::size_t k) {
    return constant(Array(Shape{k}, 1.0 / static_cast<double>(k)));
}

} // namespace

FusionModule::Stack FusionModule::make_stack(const std::string& prefix, Rng& rng) {
    const std::size_t d = dim_, h = d * cfg_.expansion;
    Stack s;
    for (std::size_t b = 0; b < cfg_.depth; ++b) {
        Block blk{parameter(random_matrix(d, h, 1.0 / std::sqrt(static_cast<double>(d)), rng)),
                  parameter(Array(Shape{h}, 0.0)), parameter(random_matrix(h, d, 0.02, rng)),
                  parameter(Array(Shape{d}, 0.0))};
        const std::string p = prefix + ".block" + std::to_string(b) + ".";
        params_.add(p + "w1", blk.w1);
        params_.add(p + "b1", blk.b1);
        params_.add(p + "w2", blk.w2);
        params_.add(p + "b2", blk.b2);
        s.blocks.push_back(std::move(blk));
    }
    // Near-identity projection: attention starts as token similarity.
    Array w = random_matrix(d, d, 0.02, rng);
    for (std::size_t i = 0; i < d; ++i) w[i * d + i] += 1.0;
    s.proj_w = parameter(std::move(w));
    s.proj_b = parameter(Array(Shape{d}, 0.0));
    params_.add(prefix + ".proj_w", s.proj_w);
    params_.add(prefix + ".proj_b", s.proj_b);
    return s;
}

FusionModule::FusionModule(std::size_t embed_dim, const FusionConfig& cfg, Rng& rng) : dim_(embed_dim), cfg_(cfg) {
    cfg_.validate(dim_);
    query_ = make_stack("query", rng);
    key_ = make_stack("key", rng);
    head_logits_ = parameter(Array(Shape{cfg_.heads}, 0.0));
    params_.add("head_logits", head_logits_);
}

FusionModule FusionModule::clone() const {
    Rng scratch(0);
    FusionModule out(dim_, cfg_, scratch);
    out.params_.assign(params_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        out.params_.items()[i].var.ptr()->needs_grad = params_.items()[i].var.needs_grad();
    }
    return out;
}

Var FusionModule::project(const Stack& s, const Var& x) const {
    Var h = x;
    for (const auto& blk : s.blocks) h = add(h, linear(gelu(linear(h, blk.w1, blk.b1)), blk.w2, blk.b2));
    return linear(h, s.proj_w, s.proj_b);
}

Var FusionModule::attend(const Var& query_tokens, const std::vector<Var>& support_tokens) const {
    if (support_tokens.empty()) throw Error("attend: empty support set");
    const std::size_t t = support_tokens[0].rows();
    if (query_tokens.cols() != dim_) {
        throw ShapeError("attend: query tokens have width " + std::to_string(query_tokens.cols()) + ", expected " +
                         std::to_string(dim_));
    }
    for (const auto& s : support_tokens) {
        if (s.rows() != t || s.cols() != dim_) {
            throw ShapeError("attend: support token sets must share shape [" + std::to_string(t) + "x" +
                             std::to_string(dim_) + "], got " + shape_str(s.shape()));
        }
    }
    const std::size_t k = support_tokens.size();
    if (k == 1) return constant(Array::vector({1.0}));
    if (cfg_.mode == FusionMode::Mean) return uniform_weights(k);

    const std::size_t heads = cfg_.heads, dh = dim_ / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    Var q = project(query_, query_tokens);
    Var keys = project(key_, concat_rows(support_tokens));
    std::vector<Var> per_head;
    per_head.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = heads == 1 ? keys : slice_cols(keys, h * dh, (h + 1) * dh);
        Var att = softmax_rows(scale(matmul_nt(qh, kh), inv)); // [Tq x K*T]
        per_head.push_back(mean_rows(block_sum_cols(att, t)));  // [K]
    }
    if (heads == 1) return per_head[0];
    return weighted_sum(softmax(head_logits_, 0), per_head);
}

FusedVars fuse_vars(const FusionModule& f, const Var& query_tokens, const std::vector<SupportView>& supports) {
    if (supports.empty()) throw Error("fuse: empty support set");
    std::vector<Var> tokens, images, labels, features;
    for (const auto& s : supports) {
        tokens.push_back(s.tokens);
        images.push_back(s.image_patches);
        labels.push_back(s.label_patches);
        features.push_back(s.feature);
    }
    Var alpha = f.attend(query_tokens, tokens);
    Var label_alpha = f.config().reuse || supports.size() == 1 ? alpha : uniform_weights(supports.size());
    return {weighted_sum(alpha, images), weighted_sum(label_alpha, labels), weighted_sum(alpha, features), alpha,
            label_alpha, alpha};
}

FusedPair fuse(const Panel& query, const std::vector<const PromptPair*>& supports, const Backbone& backbone,
               const FusionModule& f) {
    if (supports.empty()) throw Error("fuse: empty support set");
    const auto& cfg = backbone.config();
    std::vector<SupportView> views;
    for (const PromptPair* p : supports) {
        if (!p->image.same_extent(query) || !p->label.same_extent(query)) {
            throw ShapeError("fuse: support " + std::to_string(p->id) + " extent differs from the query");
        }
        Array feat = p->feature ? *p->feature : backbone.pooled_feature(p->image);
        views.push_back({constant(backbone.panel_tokens(p->image)), constant(patchify(p->image, cfg.patch)),
                         constant(patchify(p->label, cfg.patch)), constant(std::move(feat))});
    }
    FusedVars fv = fuse_vars(f, constant(backbone.panel_tokens(query)), views);
    auto to_vec = [](const Var& v) { return std::vector<double>(v.value().values().begin(), v.value().values().end()); };
    return {unpatchify(fv.image_patches.value(), query.height(), query.width(), cfg.patch),
            unpatchify(fv.label_patches.value(), query.height(), query.width(), cfg.patch),
            to_vec(fv.image_weights),
            fv.feature.value(),
            to_vec(fv.label_weights),
            to_vec(fv.feature_weights)};
}

Var alignment_loss(const Var& query_feature, const Var& fused_feature) {
    return squared_distance(query_feature, fused_feature);
}

namespace {

void check_lambda(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ConfigError("fusion objective weight lambda must be in [0, 1], got " + std::to_string(lambda));
    }
}

} // namespace

Var fusion_objective(const Var& ce, const Var& align, double lambda) {
    check_lambda(lambda);
    return add(scale(align, lambda), scale(ce, 1.0 - lambda));
}

double fusion_objective(double ce, double align, double lambda) {
    check_lambda(lambda);
    return lambda * align + (1.0 - lambda) * ce;
}

} // namespace vicl
