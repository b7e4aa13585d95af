// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <set>

#include "support.hpp"
#include "vicl/backbone.hpp"
#include "vicl/tasks.hpp"

using namespace vicl;
using vicl::testing::random_image;
using vicl::testing::tiny_backbone;

namespace {

Canvas random_canvas(const BackboneConfig& cfg, Rng& rng, int arr = 1) {
    const std::size_t p = cfg.panel();
    return compose(random_image(p, p, rng), random_image(p, p, rng), random_image(p, p, rng), arrangement(arr));
}

} // namespace

TEST_CASE("config validation") {
    BackboneConfig c = tiny_backbone();
    CHECK_NOTHROW(c.validate());
    c.patch = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_backbone();
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_backbone();
    c.vocab = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("quadrant rows partition the canvas tokens") {
    Rng rng(1);
    const BackboneConfig cfg = tiny_backbone();
    Backbone bb(cfg, rng);
    std::set<std::size_t> all;
    for (Quadrant q : kQuadrants) {
        const auto rows = bb.quadrant_rows(q);
        CHECK(rows.size() == cfg.panel_tokens());
        all.insert(rows.begin(), rows.end());
    }
    CHECK(all.size() == cfg.tokens());
    CHECK(*all.rbegin() == cfg.tokens() - 1);
    // Top-left quadrant of a 4x4 token grid: rows 0,1,4,5.
    CHECK(bb.quadrant_rows(Quadrant::TopLeft) == std::vector<std::size_t>{0, 1, 4, 5});
}

TEST_CASE("mask logits shape and agreement between entry points") {
    Rng rng(2);
    const BackboneConfig cfg = tiny_backbone();
    Backbone bb(cfg, rng);
    for (int id = 1; id <= 8; ++id) {
        CAPTURE(id);
        const Canvas c = random_canvas(cfg, rng, id);
        const Array a = bb.mask_logits(c).value();
        CHECK(a.rows() == cfg.panel_tokens());
        CHECK(a.cols() == cfg.vocab);
        const Array b = bb.mask_logits(role_patches(c, cfg.patch), c.arrangement).value();
        CHECK(a == b);
    }
}

TEST_CASE("identity hook reproduces the plain forward bit-exactly") {
    Rng rng(3);
    const BackboneConfig cfg = tiny_backbone();
    Backbone bb(cfg, rng);
    const Canvas c = random_canvas(cfg, rng, 6);
    const TokenHook identity = [](const Var& x) { return x; };
    CHECK(bb.mask_logits(c).value() == bb.mask_logits(c, &identity).value());
    const TokenHook zero_add = [](const Var& x) { return add(x, constant(Array(x.shape(), 0.0))); };
    CHECK(bb.mask_logits(c).value() == bb.mask_logits(c, &zero_add).value());
}

TEST_CASE("mask logits ignore the mask quadrant content") {
    Rng rng(4);
    const BackboneConfig cfg = tiny_backbone();
    Backbone bb(cfg, rng);
    Canvas c = random_canvas(cfg, rng);
    const Array before = bb.mask_logits(c).value();
    place(c, Role::Mask, random_image(cfg.panel(), cfg.panel(), rng));
    const Array after = bb.mask_logits(c).value();
    CHECK(before == after);
}

TEST_CASE("clone is independent of the original") {
    Rng rng(5);
    Backbone bb(tiny_backbone(), rng);
    Backbone copy = bb.clone();
    CHECK(copy.params().checksum() == bb.params().checksum());
    copy.params().items()[0].var.ptr()->value[0] += 0.5;
    CHECK(copy.params().checksum() != bb.params().checksum());
}

TEST_CASE("panel features") {
    Rng rng(6);
    const BackboneConfig cfg = tiny_backbone();
    Backbone bb(cfg, rng);
    const Panel p = random_image(cfg.panel(), cfg.panel(), rng);
    const Array t = bb.panel_tokens(p);
    CHECK(t.rows() == cfg.panel_tokens());
    CHECK(t.cols() == cfg.embed_dim);
    const Array f = bb.pooled_feature(p);
    CHECK(f.size() == cfg.embed_dim);
    CHECK(f == bb.pooled_feature(p));
    CHECK_THROWS_AS(bb.panel_tokens(random_image(4, 4, rng)), ShapeError);
}

TEST_CASE("backbone gradients match central differences") {
    Rng rng(7);
    const BackboneConfig cfg = tiny_backbone();
    Backbone bb(cfg, rng);
    const Canvas c = random_canvas(cfg, rng, 3);
    std::vector<int> targets(cfg.panel_tokens());
    for (auto& t : targets) t = static_cast<int>(rng.index(cfg.vocab));
    auto loss = [&] { return cross_entropy(bb.mask_logits(c), targets); };
    const auto r = vicl::testing::gradient_check(loss, bb.params(), rng, 60);
    CHECK(r.checked == 60);
    CHECK_MESSAGE(r.max_rel_error < 1e-3, r.worst);
}

TEST_CASE("inpaint only changes the mask quadrant") {
    Rng rng(8);
    const BackboneConfig cfg = tiny_backbone();
    Backbone bb(cfg, rng);
    const Array entries = vicl::testing::random_array({cfg.vocab, cfg.patch_dim()}, rng, 0.2);
    Array clipped = entries;
    for (auto& v : clipped.storage()) v = std::clamp(v + 0.5, 0.0, 1.0);
    const Codebook cb(cfg.patch, clipped);
    const Canvas c = random_canvas(cfg, rng, 2);
    const Canvas out = inpaint(c, bb, cb);
    for (Role r : {Role::SupportImage, Role::SupportLabel, Role::QueryImage}) CHECK(extract(out, r) == extract(c, r));
    const auto tokens = argmax_rows(bb.mask_logits(c).value());
    CHECK(extract(out, Role::Mask) == cb.decode(tokens, cfg.panel(), cfg.panel()));
}

TEST_CASE("short pretraining reduces the masked-token loss") {
    Rng rng(9);
    BackboneConfig cfg = tiny_backbone();
    cfg.canvas = 32;
    const auto data = generate_pretrain(TaskKind::Segmentation, 3, 48, cfg.panel());
    PretrainConfig pcfg;
    pcfg.epochs = 4;
    pcfg.batch = 8;
    pcfg.lr = 3e-3;
    pcfg.kmeans.vocab = cfg.vocab;
    pcfg.kmeans.iterations = 5;
    const PretrainResult r = pretrain(data, cfg, pcfg, rng);
    REQUIRE(r.loss_trace.size() == 4 * 6);
    CHECK(r.codebook.vocab() == cfg.vocab);
    const double head = (r.loss_trace[0] + r.loss_trace[1]) / 2.0;
    const double tail = (r.loss_trace.end()[-1] + r.loss_trace.end()[-2]) / 2.0;
    CHECK(tail < head);
}
