// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "support.hpp"
#include "vicl/adapters.hpp"
#include "vicl/fusion.hpp"

using namespace vicl;
using vicl::testing::random_array;
using vicl::testing::random_image;
using vicl::testing::tiny_backbone;

namespace {

AdapterConfig tiny_adapter() {
    AdapterConfig c;
    c.hidden = 3;
    return c;
}

// Perturbs every parameter so the adapter is no longer the identity.
void perturb(Adapter& a, Rng& rng) {
    for (const auto& p : a.params().items()) {
        for (auto& v : p.var.ptr()->value.storage()) v += rng.normal(0.0, 0.3);
    }
}

} // namespace

TEST_CASE("zero-initialized adapter is the identity bit-exactly") {
    Rng rng(1);
    const Adapter a(1, 8, tiny_adapter(), rng);
    const Array x = random_array({5, 8}, rng);
    CHECK(a.apply(constant(x)).value() == x);
}

TEST_CASE("zero-init adapters leave inpainting unchanged for every arrangement") {
    Rng rng(2);
    const BackboneConfig cfg = tiny_backbone();
    Backbone bb(cfg, rng);
    const std::size_t p = cfg.panel();
    for (int id = 1; id <= 8; ++id) {
        CAPTURE(id);
        const Adapter a(id, cfg.embed_dim, tiny_adapter(), rng);
        const Canvas c = compose(random_image(p, p, rng), random_image(p, p, rng), random_image(p, p, rng), arrangement(id));
        const TokenHook hook = a.hook();
        CHECK(bb.mask_logits(c).value() == bb.mask_logits(c, &hook).value());
    }
}

TEST_CASE("parameter counts") {
    Rng rng(3);
    CHECK(adapter_parameter_count(64, AdapterConfig{16, true, false}) == 2128);
    CHECK(adapter_parameter_count(64, AdapterConfig{16, true, true}) == 4160);
    const Adapter a(2, 8, tiny_adapter(), rng);
    CHECK(a.parameter_count() == adapter_parameter_count(8, tiny_adapter()));
    AdapterConfig one = tiny_adapter();
    one.single_layer = true;
    const Adapter b(2, 8, one, rng);
    CHECK(b.parameter_count() == 72);
    CHECK(10 * adapter_parameter_count(64, AdapterConfig{}) < fusion_parameter_count(64, FusionConfig{}));
}

TEST_CASE("forward formula with and without the residual") {
    Rng rng(4);
    Adapter a(1, 4, AdapterConfig{2, true, false}, rng);
    perturb(a, rng);
    const Array x = random_array({3, 4}, rng);
    const auto& items = a.params().items();
    const Array& w1 = items[0].var.value();
    const Array& b1 = items[1].var.value();
    const Array& w2 = items[2].var.value();
    const Array& b2 = items[3].var.value();
    const Array z = a.apply(constant(x)).value();
    for (std::size_t r = 0; r < 3; ++r) {
        std::vector<double> h(2);
        for (std::size_t j = 0; j < 2; ++j) {
            double s = b1[j];
            for (std::size_t i = 0; i < 4; ++i) s += x.at(r, i) * w1.at(i, j);
            h[j] = kernel::gelu(s);
        }
        for (std::size_t i = 0; i < 4; ++i) {
            double s = x.at(r, i) + b2[i];
            for (std::size_t j = 0; j < 2; ++j) s += h[j] * w2.at(j, i);
            CHECK(z.at(r, i) == doctest::Approx(s).epsilon(1e-12));
        }
    }

    Adapter plain(1, 4, AdapterConfig{2, false, false}, rng);
    plain.params().assign(a.params());
    const Array zp = plain.apply(constant(x)).value();
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(zp[i] == doctest::Approx(z[i] - x[i]).epsilon(1e-12));
}

TEST_CASE("adapter rejects bad shapes and settings") {
    Rng rng(5);
    const Adapter a(1, 8, tiny_adapter(), rng);
    CHECK_THROWS_AS(a.apply(constant(random_array({2, 6}, rng))), ShapeError);
    CHECK_THROWS_AS(Adapter(9, 8, tiny_adapter(), rng), ConfigError);
    CHECK_THROWS_AS(AdapterConfig({8, true, false}).validate(8), ConfigError);
}

TEST_CASE("adapter gradients match central differences") {
    Rng rng(6);
    const BackboneConfig cfg = tiny_backbone();
    Backbone bb(cfg, rng);
    Adapter a(5, cfg.embed_dim, tiny_adapter(), rng);
    perturb(a, rng);
    const std::size_t p = cfg.panel();
    const Canvas c = compose(random_image(p, p, rng), random_image(p, p, rng), random_image(p, p, rng), arrangement(5));
    std::vector<int> targets(cfg.panel_tokens());
    for (auto& t : targets) t = static_cast<int>(rng.index(cfg.vocab));
    const TokenHook hook = a.hook();
    auto loss = [&] { return cross_entropy(bb.mask_logits(c, &hook), targets); };
    const auto r = vicl::testing::gradient_check(loss, a.params(), rng, 200);
    CHECK(r.checked == a.parameter_count());
    CHECK_MESSAGE(r.max_rel_error < 1e-3, r.worst);
}

TEST_CASE("ranking and selection") {
    const std::vector<double> dec = {0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2};
    CHECK(select_preferred(rank_arrangements(dec, true)) == std::vector<int>{1, 2, 3, 4});
    const std::vector<double> flat(8, 0.5);
    const ArrangementReport fr = rank_arrangements(flat, true);
    CHECK(select_preferred(fr) == std::vector<int>{1, 2, 3, 4});
    std::size_t selected = 0;
    for (const auto& row : fr.rows) selected += row.selected;
    CHECK(selected == 4);
    CHECK_THROWS_AS(rank_arrangements(dec, true, 9), ConfigError);
    CHECK_THROWS(rank_arrangements({0.1, 0.2}, true));
}

TEST_CASE("ranking matches an exhaustive sort") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> metric(8);
        // Coarse values force ties.
        for (auto& m : metric) m = static_cast<double>(rng.index(5)) / 4.0;
        const bool higher = trial % 2 == 0;
        const ArrangementReport rep = rank_arrangements(metric, higher, 4);
        std::vector<int> order(8);
        std::iota(order.begin(), order.end(), 1);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            const double ma = metric[a - 1], mb = metric[b - 1];
            return higher ? ma > mb : ma < mb;
        });
        std::vector<int> ranks;
        for (std::size_t i = 0; i < 8; ++i) {
            const auto& row = rep.rows[i];
            CHECK(row.arrangement_id == static_cast<int>(i) + 1);
            const int want = static_cast<int>(std::find(order.begin(), order.end(), row.arrangement_id) - order.begin()) + 1;
            CHECK(row.rank == want);
            CHECK(row.selected == (want <= 4));
            ranks.push_back(row.rank);
        }
        std::sort(ranks.begin(), ranks.end());
        CHECK(ranks == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
        CHECK(select_preferred(rep, 4) == std::vector<int>(order.begin(), order.begin() + 4));
    }
}

TEST_CASE("arrangement report csv") {
    const ArrangementReport rep = rank_arrangements({0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.4, 0.6}, true);
    const std::string csv = rep.to_csv();
    CHECK(csv.rfind("arrangement,metric,rank,selected\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
    CHECK(csv.find("a2,0.9,1,1") != std::string::npos);
}
