// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vicl {

void BackboneConfig::validate() const {
    if (patch == 0 || canvas % 2 != 0 || panel() % patch != 0) {
        throw ConfigError("backbone: canvas/2 must be divisible by patch (canvas=" + std::to_string(canvas) +
                          ", patch=" + std::to_string(patch) + ")");
    }
    if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
        throw ConfigError("backbone: embed_dim must be a positive multiple of heads");
    }
    if (blocks == 0) throw ConfigError("backbone: blocks must be >= 1");
    if (ffn_mult == 0) throw ConfigError("backbone: ffn_mult must be >= 1");
    if (vocab < 2) throw ConfigError("backbone: vocab must be >= 2");
}

namespace {

Array normal_array(Shape shape, double stddev, Rng& rng) {
    Array a(std::move(shape));
    for (auto& v : a.storage()) v = rng.normal(0.0, stddev);
    return a;
}

// Sinusoids of the within-quadrant row/column in the first half of the
// channels, a +-1 code of the quadrant row/column in the second half, plus
// small noise.
Array positional_init(const BackboneConfig& cfg, double noise, Rng& rng) {
    const std::size_t d = cfg.embed_dim, g = cfg.grid(), pg = cfg.panel_grid();
    Array pos = normal_array({g * g, d}, noise, rng);
    const std::size_t half = d / 2, pairs = std::max<std::size_t>(1, half / 4);
    for (std::size_t gy = 0; gy < g; ++gy) {
        for (std::size_t gx = 0; gx < g; ++gx) {
            double* row = pos.data() + (gy * g + gx) * d;
            const double ry = static_cast<double>(gy % pg), rx = static_cast<double>(gx % pg);
            for (std::size_t k = 0; k < pairs && 4 * k + 3 < half; ++k) {
                const double w = std::numbers::pi / static_cast<double>(pg) / std::pow(2.0, static_cast<double>(k));
                row[4 * k] += 0.5 * std::sin(ry * w);
                row[4 * k + 1] += 0.5 * std::cos(ry * w);
                row[4 * k + 2] += 0.5 * std::sin(rx * w);
                row[4 * k + 3] += 0.5 * std::cos(rx * w);
            }
            const double qy = gy < pg ? -0.5 : 0.5, qx = gx < pg ? -0.5 : 0.5;
            for (std::size_t c = half; c < d; ++c) row[c] += (c - half) % 2 == 0 ? qy : qx;
        }
    }
    return pos;
}

} // namespace

RolePatches role_patches(const Canvas& canvas, std::size_t patch) {
    return {constant(patchify(extract(canvas, Role::SupportImage), patch)),
            constant(patchify(extract(canvas, Role::SupportLabel), patch)),
            constant(patchify(extract(canvas, Role::QueryImage), patch)),
            constant(patchify(extract(canvas, Role::Mask), patch))};
}

Array mask_patches(const BackboneConfig& cfg, double mask_fill) {
    return Array(Shape{cfg.panel_tokens(), cfg.patch_dim()}, mask_fill);
}

Backbone::Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t d = cfg_.embed_dim, f = d * cfg_.ffn_mult;
    constexpr double s = 0.02;
    const double resid = s / std::sqrt(2.0 * static_cast<double>(cfg_.blocks));
    patch_w_ = parameter(normal_array({cfg_.patch_dim(), d}, 1.0 / std::sqrt(static_cast<double>(cfg_.patch_dim())), rng));
    patch_b_ = parameter(Array({d}, 0.0));
    pos_ = parameter(positional_init(cfg_, s, rng));
    params_.add("patch_w", patch_w_);
    params_.add("patch_b", patch_b_);
    params_.add("pos", pos_);
    for (std::size_t b = 0; b < cfg_.blocks; ++b) {
        Block blk{parameter(Array({d}, 1.0)),
                  parameter(Array({d}, 0.0)),
                  parameter(normal_array({d, 3 * d}, s, rng)),
                  parameter(Array({3 * d}, 0.0)),
                  parameter(normal_array({d, d}, resid, rng)),
                  parameter(Array({d}, 0.0)),
                  parameter(Array({d}, 1.0)),
                  parameter(Array({d}, 0.0)),
                  parameter(normal_array({d, f}, s, rng)),
                  parameter(Array({f}, 0.0)),
                  parameter(normal_array({f, d}, resid, rng)),
                  parameter(Array({d}, 0.0))};
        const std::string p = "block" + std::to_string(b) + ".";
        params_.add(p + "ln1_g", blk.ln1_g);
        params_.add(p + "ln1_b", blk.ln1_b);
        params_.add(p + "wqkv", blk.wqkv);
        params_.add(p + "bqkv", blk.bqkv);
        params_.add(p + "wo", blk.wo);
        params_.add(p + "bo", blk.bo);
        params_.add(p + "ln2_g", blk.ln2_g);
        params_.add(p + "ln2_b", blk.ln2_b);
        params_.add(p + "w1", blk.w1);
        params_.add(p + "b1", blk.b1);
        params_.add(p + "w2", blk.w2);
        params_.add(p + "b2", blk.b2);
        blocks_.push_back(std::move(blk));
    }
    lnf_g_ = parameter(Array({d}, 1.0));
    lnf_b_ = parameter(Array({d}, 0.0));
    // Zero head: uniform logits at initialization.
    head_w_ = parameter(Array({d, cfg_.vocab}, 0.0));
    head_b_ = parameter(Array({cfg_.vocab}, 0.0));
    params_.add("lnf_g", lnf_g_);
    params_.add("lnf_b", lnf_b_);
    params_.add("head_w", head_w_);
    params_.add("head_b", head_b_);
}

Backbone Backbone::clone() const {
    Rng scratch(0);
    Backbone out(cfg_, scratch);
    out.params_.assign(params_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        out.params_.items()[i].var.ptr()->needs_grad = params_.items()[i].var.needs_grad();
    }
    return out;
}

std::vector<std::size_t> Backbone::quadrant_rows(Quadrant q) const {
    const std::size_t pg = cfg_.panel_grid(), g = cfg_.grid();
    auto [y0, x0] = quadrant_origin(q, pg, pg);
    std::vector<std::size_t> rows;
    rows.reserve(pg * pg);
    for (std::size_t i = 0; i < pg; ++i) {
        for (std::size_t j = 0; j < pg; ++j) rows.push_back((y0 + i) * g + (x0 + j));
    }
    return rows;
}

Var Backbone::embed(const Var& patches, const std::vector<std::size_t>& pos_rows) const {
    Var tok = linear(patches, patch_w_, patch_b_);
    std::vector<Var> parts;
    std::vector<std::vector<std::size_t>> where;
    if (pos_rows.size() == cfg_.tokens()) {
        bool identity = true;
        for (std::size_t i = 0; i < pos_rows.size(); ++i) identity = identity && pos_rows[i] == i;
        if (identity) return add(tok, pos_);
    }
    // Contiguous runs of positional rows.
    std::size_t i = 0;
    while (i < pos_rows.size()) {
        std::size_t j = i + 1;
        while (j < pos_rows.size() && pos_rows[j] == pos_rows[j - 1] + 1) ++j;
        parts.push_back(slice_rows(pos_, pos_rows[i], pos_rows[j - 1] + 1));
        std::vector<std::size_t> w;
        for (std::size_t k = i; k < j; ++k) w.push_back(k);
        where.push_back(std::move(w));
        i = j;
    }
    return add(tok, assemble_rows(parts, where, pos_rows.size()));
}

Var Backbone::encode(Var x) const {
    const std::size_t d = cfg_.embed_dim, h = cfg_.heads, dh = d / h;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    for (const auto& blk : blocks_) {
        Var n1 = layer_norm(x, blk.ln1_g, blk.ln1_b);
        Var qkv = linear(n1, blk.wqkv, blk.bqkv);
        std::vector<Var> heads;
        heads.reserve(h);
        for (std::size_t j = 0; j < h; ++j) {
            Var q = slice_cols(qkv, j * dh, (j + 1) * dh);
            Var k = slice_cols(qkv, d + j * dh, d + (j + 1) * dh);
            Var v = slice_cols(qkv, 2 * d + j * dh, 2 * d + (j + 1) * dh);
            Var att = softmax_rows(scale(matmul_nt(q, k), inv));
            heads.push_back(matmul(att, v));
        }
        Var merged = h == 1 ? heads[0] : concat_cols(heads);
        x = add(x, linear(merged, blk.wo, blk.bo));
        Var n2 = layer_norm(x, blk.ln2_g, blk.ln2_b);
        x = add(x, linear(gelu(linear(n2, blk.w1, blk.b1)), blk.w2, blk.b2));
    }
    return layer_norm(x, lnf_g_, lnf_b_);
}

Var Backbone::mask_logits(const RolePatches& patches, const Arrangement& arr, const TokenHook* hook) const {
    const std::array<std::pair<Role, const Var*>, 4> by_role{{{Role::SupportImage, &patches.support_image},
                                                              {Role::SupportLabel, &patches.support_label},
                                                              {Role::QueryImage, &patches.query_image},
                                                              {Role::Mask, &patches.mask}}};
    std::vector<Var> parts;
    std::vector<std::vector<std::size_t>> where;
    for (const auto& [role, var] : by_role) {
        if (var->rows() != cfg_.panel_tokens() || var->cols() != cfg_.patch_dim()) {
            throw ShapeError(std::string("mask_logits: patch matrix for ") + role_name(role) + " has shape " +
                             shape_str(var->shape()) + ", backbone expects [" + std::to_string(cfg_.panel_tokens()) +
                             "x" + std::to_string(cfg_.patch_dim()) + "]");
        }
        parts.push_back(*var);
        where.push_back(quadrant_rows(arr.quadrant_of(role)));
    }
    Var canvas_patches = assemble_rows(parts, where, cfg_.tokens());
    Var tokens = add(linear(canvas_patches, patch_w_, patch_b_), pos_);
    if (hook) tokens = (*hook)(tokens);
    Var enc = encode(tokens);
    const auto mask_rows = quadrant_rows(arr.quadrant_of(Role::Mask));
    // Mask rows form pg contiguous runs of pg rows each.
    const std::size_t pg = cfg_.panel_grid();
    std::vector<Var> runs;
    for (std::size_t i = 0; i < pg; ++i) runs.push_back(slice_rows(enc, mask_rows[i * pg], mask_rows[i * pg] + pg));
    Var masked = pg == 1 ? runs[0] : concat_rows(runs);
    return linear(masked, head_w_, head_b_);
}

Var Backbone::mask_logits(const Canvas& canvas, const TokenHook* hook) const {
    if (canvas.pixels.height() != cfg_.canvas || canvas.pixels.width() != cfg_.canvas) {
        throw ShapeError("mask_logits: canvas " + std::to_string(canvas.pixels.height()) + "x" +
                         std::to_string(canvas.pixels.width()) + " does not match backbone canvas " +
                         std::to_string(cfg_.canvas));
    }
    return mask_logits(role_patches(canvas, cfg_.patch), canvas.arrangement, hook);
}

Var Backbone::encode_panel(const Var& panel_patches) const {
    if (panel_patches.rows() != cfg_.panel_tokens() || panel_patches.cols() != cfg_.patch_dim()) {
        throw ShapeError("encode_panel: patch matrix shape " + shape_str(panel_patches.shape()) + " does not match backbone");
    }
    return encode(embed(panel_patches, quadrant_rows(Quadrant::TopLeft)));
}

Array Backbone::panel_tokens(const Panel& panel) const {
    if (panel.height() != cfg_.panel() || panel.width() != cfg_.panel()) {
        throw ShapeError("panel extent " + std::to_string(panel.height()) + "x" + std::to_string(panel.width()) +
                         " does not match backbone panel " + std::to_string(cfg_.panel()));
    }
    return encode_panel(constant(patchify(panel, cfg_.patch))).value();
}

Array Backbone::pooled_feature(const Panel& panel) const {
    Array tok = panel_tokens(panel);
    const std::size_t t = tok.rows(), d = tok.cols();
    Array out({d}, 0.0);
    for (std::size_t r = 0; r < t; ++r) {
        for (std::size_t c = 0; c < d; ++c) out[c] += tok[r * d + c];
    }
    for (auto& v : out.storage()) v /= static_cast<double>(t);
    return out;
}

std::vector<int> argmax_rows(const Array& logits) {
    const std::size_t t = logits.rows(), v = logits.cols();
    std::vector<int> out(t);
    for (std::size_t r = 0; r < t; ++r) {
        const double* row = logits.data() + r * v;
        out[r] = static_cast<int>(std::max_element(row, row + v) - row);
    }
    return out;
}

Canvas inpaint_with_logits(const Canvas& canvas, const Array& logits, const Codebook& codebook) {
    Canvas out = canvas;
    Panel pred = codebook.decode(argmax_rows(logits), canvas.panel_height(), canvas.panel_width());
    place(out, Role::Mask, pred);
    return out;
}

Canvas inpaint(const Canvas& canvas, const Backbone& backbone, const Codebook& codebook, const TokenHook* hook) {
    if (codebook.vocab() != backbone.config().vocab || codebook.patch() != backbone.config().patch) {
        throw ConfigError("inpaint: codebook does not match backbone configuration");
    }
    return inpaint_with_logits(canvas, backbone.mask_logits(canvas, hook).value(), codebook);
}

PretrainResult pretrain(const std::vector<PretrainTriple>& data, const BackboneConfig& cfg, const PretrainConfig& pcfg,
                        Rng& rng) {
    if (data.empty()) throw Error("pretrain: empty dataset");
    cfg.validate();
    std::vector<const Image*> panels;
    for (const auto& t : data) {
        panels.push_back(&t.support_image);
        panels.push_back(&t.support_label);
        panels.push_back(&t.query_image);
        panels.push_back(&t.query_label);
    }
    KMeansOptions km = pcfg.kmeans;
    km.vocab = cfg.vocab;
    Codebook codebook = build_codebook(panels, cfg.patch, km, rng);

    Backbone backbone(cfg, rng);
    const Arrangement& a1 = arrangement(1);
    const Var mask = constant(mask_patches(cfg));

    struct Prepared {
        RolePatches patches;
        std::vector<int> targets;
    };
    std::vector<Prepared> prepared;
    prepared.reserve(data.size());
    for (const auto& t : data) {
        prepared.push_back({{constant(patchify(t.support_image, cfg.patch)), constant(patchify(t.support_label, cfg.patch)),
                             constant(patchify(t.query_image, cfg.patch)), mask},
                            codebook.quantize(t.query_label)});
    }

    const std::size_t batch = std::max<std::size_t>(1, pcfg.batch);
    const std::size_t steps_per_epoch = (data.size() + batch - 1) / batch;
    Adam opt(CosineSchedule{pcfg.lr, steps_per_epoch * pcfg.epochs});
    std::vector<double> trace;
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < pcfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            const std::size_t b0 = s * batch, b1 = std::min(order.size(), b0 + batch);
            backbone.params().zero_grad();
            double total = 0.0;
            for (std::size_t i = b0; i < b1; ++i) {
                const auto& ex = prepared[order[i]];
                Var loss = cross_entropy(backbone.mask_logits(ex.patches, a1), ex.targets);
                total += loss.value()[0];
                backward(scale(loss, 1.0 / static_cast<double>(b1 - b0)));
            }
            const double mean_loss = total / static_cast<double>(b1 - b0);
            if (!std::isfinite(mean_loss)) throw NumericError("pretrain: non-finite loss at step " + std::to_string(trace.size()));
            trace.push_back(mean_loss);
            opt.step(backbone.params());
        }
    }
    backbone.params().zero_grad();
    return {std::move(backbone), std::move(codebook), std::move(trace)};
}

double masked_token_accuracy(const Backbone& backbone, const Codebook& codebook, const std::vector<PretrainTriple>& data) {
    if (data.empty()) throw Error("masked_token_accuracy: empty dataset");
    const auto& cfg = backbone.config();
    const Var mask = constant(mask_patches(cfg));
    std::size_t hit = 0, total = 0;
    for (const auto& t : data) {
        RolePatches p{constant(patchify(t.support_image, cfg.patch)), constant(patchify(t.support_label, cfg.patch)),
                      constant(patchify(t.query_image, cfg.patch)), mask};
        auto pred = argmax_rows(backbone.mask_logits(p, arrangement(1)).value());
        auto gt = codebook.quantize(t.query_label);
        for (std::size_t i = 0; i < gt.size(); ++i) hit += pred[i] == gt[i];
        total += gt.size();
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

} // namespace vicl
