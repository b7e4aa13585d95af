// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "support.hpp"
#include "vicl/metrics.hpp"
#include "vicl/model.hpp"
#include "vicl/prompt_store.hpp"

using namespace vicl;
using vicl::testing::random_image;

namespace {

// Panel whose listed pixels are white, everything else black.
Panel mask_panel(std::size_t h, std::size_t w, std::initializer_list<std::pair<std::size_t, std::size_t>> on) {
    Panel p(h, w, 0.0);
    for (auto [y, x] : on) {
        for (std::size_t c = 0; c < 3; ++c) p.at(y, x, c) = 1.0;
    }
    return p;
}

} // namespace

TEST_CASE("miou hand counts") {
    // Prediction {a, b}, ground truth {b, c}: overlap 1 of a 3-pixel union.
    const Panel pred = mask_panel(2, 2, {{0, 0}, {0, 1}});
    const Panel gt = mask_panel(2, 2, {{0, 1}, {1, 0}});
    CHECK(miou(pred, gt) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(miou(pred, pred) == 1.0);
    CHECK(miou(pred, mask_panel(2, 2, {{1, 1}})) == 0.0);
    CHECK(miou(Panel(2, 2, 0.0), Panel(2, 2, 0.0)) == 1.0);
    CHECK_THROWS_AS(miou(pred, Panel(2, 3)), ShapeError);
}

TEST_CASE("binarization threshold uses the channel mean") {
    Panel p(1, 2, 0.0);
    p.at(0, 0, 0) = 1.0;
    p.at(0, 0, 1) = 0.5;
    p.at(0, 1, 0) = 1.0;
    CHECK(binarize(p) == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("mse hand counts") {
    Panel a(1, 2, 0.0), b(1, 2, 0.0);
    a.at(0, 0, 0) = 1.0;
    a.at(0, 1, 2) = 0.5;
    CHECK(mse(a, b) == doctest::Approx((1.0 + 0.25) / 6.0).epsilon(1e-15));
    CHECK(mse(a, a) == 0.0);
}

TEST_CASE("metrics are symmetric") {
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        const Panel a = random_image(8, 8, rng), b = random_image(8, 8, rng);
        CHECK(miou(a, b) == miou(b, a));
        CHECK(mse(a, b) == mse(b, a));
        CHECK(miou(a, b) >= 0.0);
        CHECK(miou(a, b) <= 1.0);
    }
}

TEST_CASE("task metric selection") {
    CHECK(higher_is_better(TaskKind::Segmentation));
    CHECK(higher_is_better(TaskKind::Detection));
    CHECK_FALSE(higher_is_better(TaskKind::Colorization));
    CHECK(std::string(metric_name(TaskKind::Colorization)) == "mse");
    CHECK(parse_task("detection") == TaskKind::Detection);
    CHECK_THROWS(parse_task("depth"));
}

TEST_CASE("eval result summary and CSV round trip") {
    const EvalResult r = EvalResult::from_values(TaskKind::Segmentation, {0.1, 0.2, 0.3 + 1e-17, 1.0 / 3.0}, 0xabcdef);
    CHECK(r.mean == doctest::Approx((0.1 + 0.2 + 0.3 + 1.0 / 3.0) / 4.0));
    CHECK(r.std_error > 0.0);
    const EvalResult back = EvalResult::from_csv(r.to_csv());
    CHECK(back.values == r.values);
    CHECK(back.mean == r.mean);
    CHECK(back.split_fingerprint == r.split_fingerprint);
    CHECK(back.kind == r.kind);
    CHECK(r.to_json().find("\"split_fingerprint\": \"0000000000abcdef\"") != std::string::npos);
    CHECK_THROWS(EvalResult::from_values(TaskKind::Segmentation, {}, 0));
    CHECK_THROWS_AS(EvalResult::from_csv("index,value\n0,1\n"), IoError);
}

TEST_CASE("split fingerprints identify the split") {
    TaskSpec spec;
    spec.count = 4;
    spec.extent = 8;
    const auto a = generate(spec);
    CHECK(split_fingerprint(a) == split_fingerprint(generate(spec)));
    spec.seed = 1;
    CHECK(split_fingerprint(a) != split_fingerprint(generate(spec)));
}

TEST_CASE("task label encodings") {
    TaskSpec spec;
    spec.count = 3;
    spec.extent = 16;
    spec.kind = TaskKind::Detection;
    for (const auto& s : generate(spec)) {
        // Boxes: the foreground is an axis-aligned rectangle.
        const auto m = binarize(s.label);
        std::size_t y0 = 16, y1 = 0, x0 = 16, x1 = 0, on = 0;
        for (std::size_t y = 0; y < 16; ++y) {
            for (std::size_t x = 0; x < 16; ++x) {
                if (!m[y * 16 + x]) continue;
                ++on;
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
            }
        }
        CHECK(on == (y1 - y0 + 1) * (x1 - x0 + 1));
    }
    spec.kind = TaskKind::Colorization;
    for (const auto& s : generate(spec)) {
        for (std::size_t i = 0; i < s.image.size(); i += 3) {
            CHECK(s.image.data()[i] == s.image.data()[i + 1]);
            CHECK(s.image.data()[i] == s.image.data()[i + 2]);
        }
    }
}

TEST_CASE("constant and codebook-ceiling evaluations") {
    TaskSpec spec;
    spec.count = 6;
    spec.extent = 8;
    const SupportPool q = ingest_synthetic(spec);
    const EvalResult zero = evaluate_constant(0.0, TaskKind::Segmentation, q);
    CHECK(zero.mean == 0.0);
    const EvalResult white = evaluate_constant(1.0, TaskKind::Segmentation, q);
    for (std::size_t i = 0; i < q.size(); ++i) {
        CHECK(white.values[i] == doctest::Approx(miou(Panel(8, 8, 1.0), q[i].label)));
    }
    // Black and white 1x1 entries reproduce binary labels exactly.
    const Codebook cb(1, Array::matrix(2, 3, {0.0, 0.0, 0.0, 1.0, 1.0, 1.0}));
    CHECK(evaluate_oracle(cb, TaskKind::Segmentation, q).mean == 1.0);
}
