// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "support.hpp"
#include "vicl/stages.hpp"

using namespace vicl;
using vicl::testing::tiny_backbone;
using vicl::testing::World;

namespace {

FusionConfig tiny_fusion() {
    FusionConfig c;
    c.depth = 1;
    c.heads = 2;
    c.expansion = 2;
    return c;
}

Stage1Config stage1_config(std::size_t k) {
    Stage1Config c;
    c.k = k;
    c.epochs = 2;
    c.batch = 5;
    c.lr = 0.05;
    return c;
}

bool on_simplex(const Array& a) {
    double s = 0.0;
    for (double v : a.values()) {
        if (v < 0.0) return false;
        s += v;
    }
    return std::abs(s - 1.0) < 1e-12;
}

} // namespace

TEST_CASE("holdout split is seeded, sized and a subset of the pool") {
    World w;
    const auto a = holdout_split(w.pool, 0.25, 3);
    CHECK(a.size() == 6);
    CHECK(a == holdout_split(w.pool, 0.25, 3));
    CHECK(a != holdout_split(w.pool, 0.25, 4));
    for (PairId id : a) CHECK(w.pool.index_of(id).has_value());
    const auto kept = filter_episodes(w.episodes, a, true);
    const auto dropped = filter_episodes(w.episodes, a, false);
    CHECK(kept.size() == 6);
    CHECK(dropped.size() == 18);
}

TEST_CASE("episodes exclude the query itself and respect folds") {
    World w(3);
    for (const auto& e : w.episodes) {
        CHECK(std::find(e.supports.begin(), e.supports.end(), e.query) == e.supports.end());
        CHECK(std::is_sorted(e.scores.rbegin(), e.scores.rend()));
    }
    std::vector<Array> feats;
    for (std::size_t i = 0; i < w.pool.size(); ++i) feats.push_back(w.pool.feature(i));
    const auto folded = make_episodes(w.pool, feats, w.pool, 2, RetrievalScope{true, true, {}});
    for (const auto& e : folded) {
        for (std::size_t s : e.supports) CHECK(w.pool[s].target_class / 3 == w.pool[e.query].target_class / 3);
    }
}

TEST_CASE("stage I keeps the backbone and codebook frozen and alpha on the simplex") {
    World w(3);
    FusionModule f(w.phi.config().embed_dim, tiny_fusion(), w.rng);
    const auto phi_before = w.phi.params().checksum();
    const auto cb_before = w.codebook.checksum();
    const auto f_before = f.params().checksum();
    std::size_t observed = 0;
    bool simplex = true;
    auto observer = [&](std::size_t) {
        ++observed;
        for (std::size_t i = 0; i < 4; ++i) {
            const Episode& e = w.episodes[i];
            std::vector<Var> tokens;
            for (std::size_t s = 0; s < 3; ++s) tokens.push_back(constant(w.cache.tokens[e.supports[s]]));
            simplex = simplex && on_simplex(f.attend(constant(w.cache.tokens[e.query]), tokens).value());
        }
    };
    Rng rng(1);
    const StageTrace t = train_stage1(f, w.phi, w.cache, w.episodes, stage1_config(3), rng, observer);
    CHECK(t.loss.size() == 10);
    CHECK(observed == 10);
    CHECK(simplex);
    CHECK(w.phi.params().checksum() == phi_before);
    CHECK(w.codebook.checksum() == cb_before);
    CHECK(f.params().checksum() != f_before);
    for (std::size_t i = 0; i < t.loss.size(); ++i) {
        CHECK(t.loss[i] == doctest::Approx(0.6 * t.align[i] + 0.4 * t.ce[i]).epsilon(1e-12));
    }
}

TEST_CASE("stage I with K = 1 reproduces the top-1 baseline trace") {
    World w(3);
    FusionModule f(w.phi.config().embed_dim, tiny_fusion(), w.rng);
    Rng a(9), b(9);
    const StageTrace fused = train_stage1(f, w.phi, w.cache, w.episodes, stage1_config(1), a);
    const StageTrace base = stage1_baseline_trace(w.phi, w.cache, w.episodes, stage1_config(1), b);
    CHECK(fused.loss == base.loss);
    CHECK(fused.ce == base.ce);
}

TEST_CASE("stage I rejects a pool that is too small") {
    World w(3, 4);
    FusionModule f(w.phi.config().embed_dim, tiny_fusion(), w.rng);
    Rng rng(1);
    Stage1Config c = stage1_config(3);
    c.k = 4;
    CHECK_THROWS_AS(train_stage1(f, w.phi, w.cache, w.episodes, c, rng), ConfigError);
}

TEST_CASE("stage II: frozen f and backbone, identity start, adapter isolation") {
    World w(3);
    const FusionModule f(w.phi.config().embed_dim, tiny_fusion(), w.rng);
    const std::set<PairId> rank_ids = holdout_split(w.pool, 0.25, 1);
    const auto train = filter_episodes(w.episodes, rank_ids, false);
    const auto rank = filter_episodes(w.episodes, rank_ids, true);
    Stage2Config c;
    c.k = 3;
    c.epochs = 2;
    c.batch = train.size(); // one full batch per epoch
    c.lr = 0.1;
    c.adapter.hidden = 3;
    const auto phi_before = w.phi.params().checksum();
    const auto f_before = f.params().checksum();

    std::map<int, std::uint64_t> snapshot;
    bool isolated = true;
    auto observer = [&](int id, const std::vector<Adapter>& trained) {
        CHECK(trained.size() == static_cast<std::size_t>(id));
        for (const auto& [prev, sum] : snapshot) isolated = isolated && trained[prev - 1].params().checksum() == sum;
        snapshot[id] = trained.back().params().checksum();
    };
    Rng rng(2);
    const Stage2Result r = train_stage2(f, w.phi, w.codebook, TaskKind::Segmentation, w.pool, w.cache, train, rank, c,
                                        rng, observer);
    CHECK(isolated);
    CHECK(snapshot.size() == 8);
    CHECK(w.phi.params().checksum() == phi_before);
    CHECK(f.params().checksum() == f_before);
    REQUIRE(r.adapters.size() == 8);
    CHECK(r.preferred.size() == 4);
    CHECK(r.report.rows.size() == 8);

    // Step 0 of every arrangement sees zero-initialized adapters.
    for (int id = 1; id <= 8; ++id) {
        CAPTURE(id);
        const ModelView view{&w.phi, &f, nullptr, id};
        double sum = 0.0;
        for (const auto& e : train) {
            EpisodeInput in = episode_from_cache(w.cache, e.query, w.cache, {e.supports[0], e.supports[1], e.supports[2]});
            sum += cross_entropy(forward_episode(view, in).logits, w.cache.label_tokens[e.query]).value()[0];
        }
        CHECK(r.traces[id - 1].loss[0] == doctest::Approx(sum / static_cast<double>(train.size())).epsilon(1e-12));
        CHECK(r.adapters[id - 1].arrangement_id() == id);
    }
}

TEST_CASE("make_new_pair and swap_supports") {
    World w(3);
    const Episode& e = w.episodes[0];
    const auto supports = w.supports(e, 3);
    const PromptPair& q = w.pool[e.query];
    const Panel pred(q.image.height(), q.image.width(), 0.25);
    const PromptPair p_new = make_new_pair(q.image, pred, w.pool.fresh_id());
    CHECK(p_new.image == q.image);
    CHECK(p_new.label == pred);
    CHECK_FALSE(w.pool.index_of(p_new.id).has_value());
    CHECK(w.phi.pooled_feature(p_new.image) == w.pool.feature(e.query));
    CHECK_THROWS_AS(make_new_pair(q.image, Panel(4, 4), 99), ShapeError);

    std::set<const PromptPair*> removed;
    for (std::size_t n = 1; n <= 2; ++n) {
        const SwappedSupports sw = swap_supports(supports, p_new, n);
        CHECK(sw.supports.size() == supports.size());
        CHECK(std::count(sw.supports.begin(), sw.supports.end(), &p_new) == 1);
        std::size_t differ = 0;
        for (std::size_t i = 0; i < supports.size(); ++i) differ += sw.supports[i] != supports[i];
        CHECK(differ == 1);
        removed.insert(sw.query);
    }
    CHECK(removed == std::set<const PromptPair*>{supports[0], supports[1]});
    CHECK_THROWS_AS(swap_supports(supports, p_new, 0), ConfigError);
    CHECK_THROWS_AS(swap_supports(supports, p_new, 4), ConfigError);
}

namespace {

FinetuneModel make_model(World& w, int id) {
    Rng rng(4);
    FinetuneModel m{id, w.phi.clone(), std::nullopt, std::nullopt};
    m.fusion.emplace(w.phi.config().embed_dim, tiny_fusion(), rng);
    AdapterConfig ac;
    ac.hidden = 3;
    m.adapter.emplace(id, w.phi.config().embed_dim, ac, rng);
    return m;
}

Stage3Config stage3_config(std::size_t swaps) {
    Stage3Config c;
    c.k = 3;
    c.swaps = swaps;
    c.epochs = 1;
    c.lr = 0.01;
    c.max_examples = 4;
    return c;
}

} // namespace

TEST_CASE("stage III runs N + 1 sub-iterations per example") {
    World w(3);
    for (std::size_t n : {0u, 1u, 2u, 3u}) {
        CAPTURE(n);
        FinetuneModel m = make_model(w, 2);
        Rng rng(5);
        const Stage3Trace t = train_stage3(m, w.codebook, w.pool, w.episodes, stage3_config(n), rng);
        REQUIRE(t.subiterations.size() == 4);
        for (std::size_t s : t.subiterations) CHECK(s == n + 1);
        CHECK(t.trace.loss.size() == 4 * (n + 1));
    }
}

TEST_CASE("stage III config validation") {
    Stage3Config c = stage3_config(4);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = stage3_config(1);
    c.train_fusion = c.train_adapter = c.train_backbone = false;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("stage III with lr = 0 leaves every parameter unchanged") {
    World w(3);
    FinetuneModel m = make_model(w, 3);
    const auto b = m.backbone.params().checksum(), f = m.fusion->params().checksum(),
               a = m.adapter->params().checksum();
    Stage3Config c = stage3_config(2);
    c.lr = 0.0;
    Rng rng(6);
    train_stage3(m, w.codebook, w.pool, w.episodes, c, rng);
    CHECK(m.backbone.params().checksum() == b);
    CHECK(m.fusion->params().checksum() == f);
    CHECK(m.adapter->params().checksum() == a);
}

TEST_CASE("stage III is deterministic for a fixed seed") {
    World w(3);
    FinetuneModel m1 = make_model(w, 4), m2 = make_model(w, 4);
    Rng r1(7), r2(7);
    const auto t1 = train_stage3(m1, w.codebook, w.pool, w.episodes, stage3_config(2), r1);
    const auto t2 = train_stage3(m2, w.codebook, w.pool, w.episodes, stage3_config(2), r2);
    CHECK(t1.trace.loss == t2.trace.loss);
    CHECK(m1.backbone.params().checksum() == m2.backbone.params().checksum());
    CHECK(m1.fusion->params().checksum() == m2.fusion->params().checksum());
    CHECK(m1.adapter->params().checksum() == m2.adapter->params().checksum());
}

TEST_CASE("forward_finetune: consistency, gradient reach and descent") {
    World w(3);
    FinetuneModel m = make_model(w, 1);
    // The prediction head starts at zero, which would block every upstream gradient.
    Rng noise(11);
    for (const auto& p : m.adapter->params().items()) {
        for (auto& v : p.var.ptr()->value.storage()) v += 0.05;
    }
    for (auto& v : m.backbone.params().find("head_w")->ptr()->value.storage()) v = noise.normal(0.0, 0.5);
    const Episode& e = w.episodes[1];
    const PromptPair& q = w.pool[e.query];
    const auto supports = w.supports(e, 3);

    const FinetuneStep s = forward_finetune(m, w.codebook, q.image, q.label, supports);
    EpisodeInput in = episode_from_cache(w.cache, e.query, w.cache, {e.supports[0], e.supports[1], e.supports[2]});
    const double cached = cross_entropy(forward_episode(m.view(), in).logits, w.cache.label_tokens[e.query]).value()[0];
    CHECK(s.loss.value()[0] == doctest::Approx(cached).epsilon(1e-12));

    ParamList all;
    all.append(m.backbone.params(), "backbone.");
    all.append(m.fusion->params(), "fusion.");
    all.append(m.adapter->params(), "adapter.");
    all.set_requires_grad(true);
    all.zero_grad();
    backward(forward_finetune(m, w.codebook, q.image, q.label, supports).loss);
    CHECK(m.fusion->params().grad_norm() > 0.0);
    CHECK(m.adapter->params().grad_norm() > 0.0);
    CHECK(m.backbone.params().grad_norm() > 0.0);
    Sgd opt(CosineSchedule{1e-3, 10});
    opt.step(all);
    const double after = forward_finetune(m, w.codebook, q.image, q.label, supports).loss.value()[0];
    CHECK(after < s.loss.value()[0]);
}
