// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "vicl/ops.hpp"

using namespace vicl;
using vicl::testing::gradient_check;
using vicl::testing::random_array;

TEST_CASE("array accessors and fingerprint") {
    Array a = Array::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(a.rows() == 2);
    CHECK(a.cols() == 3);
    CHECK(a.at(1, 2) == 6.0);
    Array b = a;
    CHECK(fingerprint(a) == fingerprint(b));
    b[0] = 1.0000001;
    CHECK(fingerprint(a) != fingerprint(b));
    CHECK(fingerprint(a) != fingerprint(a.reshaped({3, 2})));
    CHECK_THROWS_AS(a.reshaped({4, 2}), ShapeError);
}

TEST_CASE("cosine similarity") {
    const Array u = Array::vector({1, 0, 0}), v = Array::vector({0, 2, 0}), w = Array::vector({3, 0, 0});
    CHECK(cosine_similarity(u.values(), v.values()) == doctest::Approx(0.0));
    CHECK(cosine_similarity(u.values(), w.values()) == doctest::Approx(1.0));
    const Array z = Array::vector({0, 0, 0});
    CHECK_THROWS(cosine_similarity(u.values(), z.values()));
}

TEST_CASE("rng streams are reproducible and forks are independent") {
    Rng a(42), b(42);
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng f1 = Rng(42).fork(1), f2 = Rng(42).fork(2), f1b = Rng(42).fork(1);
    const auto x = f1.next_u64();
    CHECK(x == f1b.next_u64());
    CHECK(x != f2.next_u64());
    Rng r(3);
    for (int i = 0; i < 1000; ++i) {
        const auto k = r.index(7);
        CHECK(k < 7);
    }
}

TEST_CASE("matmul and linear forward values") {
    Var a = constant(Array::matrix(2, 2, {1, 2, 3, 4}));
    Var b = constant(Array::matrix(2, 2, {5, 6, 7, 8}));
    const Array c = matmul(a, b).value();
    CHECK(c == Array::matrix(2, 2, {19, 22, 43, 50}));
    const Array d = matmul_nt(a, b).value();
    CHECK(d == Array::matrix(2, 2, {17, 23, 39, 53}));
    CHECK_THROWS_AS(matmul(a, constant(Array({3, 2}))), ShapeError);
}

TEST_CASE("softmax rows sum to one and cross entropy of uniform logits is log V") {
    Rng rng(1);
    Var x = constant(random_array({4, 5}, rng));
    const Array s = softmax_rows(x).value();
    for (std::size_t r = 0; r < 4; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 5; ++c) sum += s.at(r, c);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    const std::vector<int> targets = {0, 1, 2, 3};
    const double ce = cross_entropy(constant(Array({4, 5}, 0.0)), targets).value()[0];
    CHECK(ce == doctest::Approx(std::log(5.0)));
}

TEST_CASE("squared distance matches elementwise accumulation") {
    Rng rng(9);
    const Array a = random_array({7}, rng), b = random_array({7}, rng);
    double oracle = 0.0;
    for (std::size_t i = 0; i < 7; ++i) oracle += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(squared_distance(constant(a), constant(b)).value()[0] == doctest::Approx(oracle).epsilon(1e-14));
}

TEST_CASE("gradients of composite graphs match central differences") {
    Rng rng(5);
    ParamList params;
    Var w = parameter(random_array({3, 4}, rng, 0.5));
    Var bias = parameter(random_array({4}, rng, 0.1));
    Var g = parameter(Array({4}, 1.0));
    Var be = parameter(Array({4}, 0.0));
    Var weights = parameter(random_array({3}, rng));
    params.add("w", w);
    params.add("b", bias);
    params.add("g", g);
    params.add("be", be);
    params.add("weights", weights);
    const Var x = constant(random_array({5, 3}, rng));
    const std::vector<int> targets = {0, 3, 1, 2, 2};
    auto loss = [&] {
        Var h = gelu(layer_norm(linear(x, w, bias), g, be));
        Var att = softmax_rows(matmul_nt(h, h));
        Var mixed = matmul(att, h);
        Var alpha = softmax(weights, 0);
        Var fused = weighted_sum(alpha, {slice_rows(mixed, 0, 1), slice_rows(mixed, 1, 2), slice_rows(mixed, 2, 3)});
        Var ce = cross_entropy(mixed, targets);
        return add(ce, scale(sum(mul(fused, fused)), 0.1));
    };
    const auto r = gradient_check(loss, params, rng, 40);
    CHECK(r.checked == params.count());
    CHECK_MESSAGE(r.max_rel_error < 1e-4, r.worst);
}

TEST_CASE("block sums, assembly and mean rows have exact gradients") {
    Rng rng(6);
    ParamList params;
    Var a = parameter(random_array({2, 6}, rng));
    Var b = parameter(random_array({2, 6}, rng));
    params.add("a", a);
    params.add("b", b);
    auto loss = [&] {
        Var m = assemble_rows({a, b}, {{0, 2}, {1, 3}}, 4);
        Var s = block_sum_cols(softmax_rows(m), 3);
        Var pooled = mean_rows(concat_cols({s, m}));
        return sum(mul(pooled, pooled));
    };
    const auto r = gradient_check(loss, params, rng, 24);
    CHECK_MESSAGE(r.max_rel_error < 1e-5, r.worst);
}

TEST_CASE("detach blocks gradient flow") {
    Var p = parameter(Array::vector({2.0}));
    Var y = mul(detach(p), p);
    backward(sum(y));
    CHECK(p.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("non-finite values are rejected") {
    Array a = Array::vector({1.0, std::numeric_limits<double>::quiet_NaN()});
    CHECK_FALSE(a.all_finite());
    CHECK_THROWS_AS(a.check_finite("a"), NumericError);
}

TEST_CASE("cosine schedule and sgd update") {
    CosineSchedule s{0.03, 10};
    CHECK(s.lr(0) == doctest::Approx(0.03));
    CHECK(s.lr(5) == doctest::Approx(0.015));
    CHECK(s.lr(10) == doctest::Approx(0.0));
    CHECK(s.lr(20) == doctest::Approx(0.0));

    ParamList params;
    Var p = parameter(Array::vector({1.0, -1.0}));
    params.add("p", p);
    Sgd opt(CosineSchedule{0.5, 100});
    backward(sum(mul(p, p))); // grad = 2p
    opt.step(params);
    CHECK(p.value()[0] == doctest::Approx(0.0));
    CHECK(p.value()[1] == doctest::Approx(0.0));
}

TEST_CASE("sgd skips frozen parameters") {
    ParamList params;
    Var p = parameter(Array::vector({1.0}));
    Var q = parameter(Array::vector({1.0}));
    params.add("p", p);
    params.add("q", q);
    q.set_requires_grad(false);
    backward(sum(add(mul(p, p), mul(q, q))));
    Sgd opt(CosineSchedule{0.1, 10}, 0.9);
    opt.step(params);
    CHECK(p.value()[0] < 1.0);
    CHECK(q.value()[0] == 1.0);
}

TEST_CASE("param list clone, assign and checksum") {
    Rng rng(2);
    ParamList a;
    a.add("w", parameter(random_array({3, 3}, rng)));
    ParamList b = a.clone();
    CHECK(a.checksum() == b.checksum());
    b.items()[0].var.ptr()->value[0] += 1.0;
    CHECK(a.checksum() != b.checksum());
    a.assign(b);
    CHECK(a.checksum() == b.checksum());
    CHECK(a.count() == 9);
}
