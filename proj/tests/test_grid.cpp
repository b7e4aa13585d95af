// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <limits>
#include <set>

#include "support.hpp"
#include "vicl/codebook.hpp"
#include "vicl/grid.hpp"
#include "vicl/tasks.hpp"

using namespace vicl;
using vicl::testing::random_image;

TEST_CASE("catalog holds eight distinct valid arrangements") {
    const auto& cat = arrangement_catalog();
    REQUIRE(cat.size() == 8);
    std::set<std::array<Role, 4>> layouts;
    for (std::size_t i = 0; i < cat.size(); ++i) {
        CHECK(cat[i].id == static_cast<int>(i) + 1);
        CHECK(cat[i].valid());
        layouts.insert(cat[i].role_of_quadrant);
    }
    CHECK(layouts.size() == 8);
    const Arrangement& a1 = arrangement(1);
    CHECK(a1.role_at(Quadrant::TopLeft) == Role::SupportImage);
    CHECK(a1.role_at(Quadrant::TopRight) == Role::SupportLabel);
    CHECK(a1.role_at(Quadrant::BottomLeft) == Role::QueryImage);
    CHECK(a1.role_at(Quadrant::BottomRight) == Role::Mask);
    CHECK_THROWS(arrangement(0));
    CHECK_THROWS(arrangement(9));
}

TEST_CASE("invalid role assignments are rejected") {
    Arrangement dup{1, {Role::SupportImage, Role::SupportImage, Role::QueryImage, Role::Mask}};
    CHECK_FALSE(dup.valid());
    // Support image and label on a diagonal.
    Arrangement diag{1, {Role::SupportImage, Role::QueryImage, Role::Mask, Role::SupportLabel}};
    CHECK_FALSE(diag.valid());
}

TEST_CASE("compose then extract recovers every panel for all arrangements") {
    Rng rng(11);
    const Panel s = random_image(8, 8, rng), l = random_image(8, 8, rng), q = random_image(8, 8, rng);
    for (const auto& arr : arrangement_catalog()) {
        CAPTURE(arr.id);
        const Canvas c = compose(s, l, q, arr);
        CHECK(c.pixels.height() == 16);
        CHECK(c.pixels.width() == 16);
        CHECK(extract(c, Role::SupportImage) == s);
        CHECK(extract(c, Role::SupportLabel) == l);
        CHECK(extract(c, Role::QueryImage) == q);
        CHECK(extract(c, Role::Mask) == Panel(8, 8, kDefaultMaskFill));
        Canvas placed = c;
        place(placed, Role::Mask, l);
        CHECK(extract(placed, Role::Mask) == l);
        CHECK(extract(placed, Role::QueryImage) == q);
    }
}

TEST_CASE("compose rejects mismatched panels") {
    Rng rng(1);
    CHECK_THROWS_AS(compose(random_image(8, 8, rng), random_image(8, 4, rng), random_image(8, 8, rng), arrangement(1)),
                    ShapeError);
}

TEST_CASE("patchify round trip") {
    Rng rng(3);
    const Image im = random_image(8, 12, rng);
    const Array p = patchify(im, 4);
    CHECK(p.rows() == 6);
    CHECK(p.cols() == 48);
    // Patch 1 starts at pixel (0, 4).
    CHECK(p.at(1, 0) == im.at(0, 4, 0));
    CHECK(unpatchify(p, 8, 12, 4) == im);
    CHECK_THROWS_AS(patchify(im, 5), ShapeError);
}

TEST_CASE("quantize matches a brute-force scan") {
    Rng rng(7);
    std::vector<Image> imgs;
    for (int i = 0; i < 6; ++i) imgs.push_back(random_image(8, 8, rng));
    std::vector<const Image*> ptrs;
    for (const auto& im : imgs) ptrs.push_back(&im);
    KMeansOptions opts;
    opts.vocab = 10;
    opts.iterations = 5;
    const Codebook cb = build_codebook(ptrs, 2, opts, rng);
    REQUIRE(cb.vocab() == 10);
    for (const auto& im : imgs) {
        const auto tokens = cb.quantize(im);
        const Array p = patchify(im, 2);
        REQUIRE(tokens.size() == p.rows());
        for (std::size_t r = 0; r < p.rows(); ++r) {
            int best = -1;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t e = 0; e < cb.vocab(); ++e) {
                double d = 0.0;
                for (std::size_t j = 0; j < p.cols(); ++j) {
                    const double diff = p.at(r, j) - cb.entries().at(e, j);
                    d += diff * diff;
                }
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(e);
                }
            }
            CHECK(tokens[r] == best);
        }
    }
}

TEST_CASE("quantize ties go to the lowest index") {
    Array entries = Array::matrix(3, 3, {0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0});
    const Codebook cb(1, entries);
    const Image grey(1, 1, 0.5);
    CHECK(cb.quantize(grey) == std::vector<int>{0});
    const Image white(1, 1, 1.0);
    CHECK(cb.quantize(white) == std::vector<int>{1});
    CHECK(cb.decode({1}, 1, 1) == white);
}

TEST_CASE("codebook entries are distinct") {
    Rng rng(2);
    std::vector<Image> imgs(3, Image(4, 4, 0.25));
    imgs.push_back(random_image(4, 4, rng));
    std::vector<const Image*> ptrs;
    for (const auto& im : imgs) ptrs.push_back(&im);
    KMeansOptions opts;
    opts.vocab = 4;
    const Codebook cb = build_codebook(ptrs, 2, opts, rng);
    std::set<std::vector<double>> rows;
    for (std::size_t e = 0; e < cb.vocab(); ++e) {
        rows.insert(std::vector<double>(cb.entries().data() + e * cb.entry_dim(),
                                        cb.entries().data() + (e + 1) * cb.entry_dim()));
    }
    CHECK(rows.size() == cb.vocab());
}

TEST_CASE("task generation is a pure function of its TaskSpec") {
    TaskSpec spec;
    spec.seed = 5;
    spec.count = 6;
    spec.extent = 16;
    const auto a = generate(spec);
    const auto b = generate(spec);
    REQUIRE(a.size() == 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image == b[i].image);
        CHECK(a[i].label == b[i].label);
        CHECK(a[i].fold == fold_of_class(a[i].target_class));
        CHECK(a[i].image.in_unit_range());
    }
    TaskSpec shifted = spec;
    shifted.offset = 2;
    shifted.count = 4;
    const auto c = generate(shifted);
    CHECK(c[0].image == a[2].image);
    CHECK(c[3].label == a[5].label);
}

TEST_CASE("folds partition the classes") {
    std::set<int> seen;
    for (int f = 0; f < kNumFolds; ++f) {
        for (int c : fold_classes(f)) {
            CHECK(fold_of_class(c) == f);
            seen.insert(c);
        }
    }
    CHECK(seen.size() == static_cast<std::size_t>(kNumClasses));
}

TEST_CASE("segmentation label is the binary target mask") {
    TaskSpec spec;
    spec.seed = 9;
    spec.count = 3;
    spec.extent = 16;
    const auto samples = generate(spec);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto mask = target_mask(spec, i);
        const Panel& lab = samples[i].label;
        std::size_t on = 0;
        for (std::size_t y = 0; y < 16; ++y) {
            for (std::size_t x = 0; x < 16; ++x) {
                const bool fg = lab.intensity(y, x) > 0.5;
                CHECK(fg == (mask[y * 16 + x] != 0));
                on += fg;
            }
        }
        CHECK(on > 0);
    }
}
