// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "vicl/autograd.hpp"
#include "vicl/backbone.hpp"
#include "vicl/episodes.hpp"
#include "vicl/optim.hpp"
#include "vicl/rng.hpp"
#include "vicl/tasks.hpp"

namespace vicl::testing {

inline BackboneConfig tiny_backbone() {
    BackboneConfig c;
    c.canvas = 16;
    c.patch = 4;
    c.embed_dim = 8;
    c.blocks = 1;
    c.heads = 2;
    c.ffn_mult = 2;
    c.vocab = 8;
    return c;
}

inline Array random_array(Shape shape, Rng& rng, double stddev = 1.0) {
    Array a(std::move(shape));
    for (auto& v : a.storage()) v = rng.normal(0.0, stddev);
    return a;
}

inline Image random_image(std::size_t h, std::size_t w, Rng& rng) {
    Image im(h, w);
    for (auto& v : im.data()) v = rng.uniform();
    return im;
}

struct GradCheck {
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    std::string worst;
};

inline double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

// Central differences on `samples` randomly chosen scalar entries of `params`.
inline GradCheck gradient_check(const std::function<Var()>& loss, ParamList& params, Rng& rng, std::size_t samples,
                                double eps = 1e-5) {
    params.zero_grad();
    backward(loss());
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t i = 0; i < params.items()[p].var.size(); ++i) coords.emplace_back(p, i);
    }
    rng.shuffle(coords);
    coords.resize(std::min(samples, coords.size()));
    GradCheck out;
    for (auto [p, i] : coords) {
        Var v = params.items()[p].var;
        const double analytic = v.grad()[i];
        double& x = v.mutable_value()[i];
        const double saved = x;
        x = saved + eps;
        const double up = loss().value()[0];
        x = saved - eps;
        const double down = loss().value()[0];
        x = saved;
        const double rel = relative_error(analytic, (up - down) / (2.0 * eps));
        ++out.checked;
        if (rel > out.max_rel_error) {
            out.max_rel_error = rel;
            out.worst = params.items()[p].name + "[" + std::to_string(i) + "]";
        }
    }
    params.zero_grad();
    return out;
}

// A small frozen world: pool, backbone, codebook, cache and episodes.
struct World {
    Rng rng{17};
    Backbone phi{tiny_backbone(), rng};
    SupportPool pool;
    Codebook codebook;
    PoolCache cache;
    std::vector<Episode> episodes;

    explicit World(std::size_t k = 3, std::size_t n = 24) {
        pool = ingest_synthetic({TaskKind::Segmentation, 5, n, phi.config().panel(), -1, true, 0});
        pool.compute_features(phi);
        std::vector<const Image*> panels;
        for (const auto& p : pool.pairs()) {
            panels.push_back(&p.image);
            panels.push_back(&p.label);
        }
        KMeansOptions km;
        km.vocab = phi.config().vocab;
        km.iterations = 5;
        codebook = build_codebook(panels, phi.config().patch, km, rng);
        cache = build_pool_cache(pool, phi, codebook);
        std::vector<Array> feats;
        for (std::size_t i = 0; i < pool.size(); ++i) feats.push_back(pool.feature(i));
        episodes = make_episodes(pool, feats, pool, k, RetrievalScope{true, false, {}});
    }

    std::vector<const PromptPair*> supports(const Episode& e, std::size_t k) const {
        std::vector<const PromptPair*> out;
        for (std::size_t i = 0; i < k; ++i) out.push_back(&pool[e.supports[i]]);
        return out;
    }
};

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() / ("vicl_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path_.string(); }
    std::string operator/(const std::string& rel) const { return (path_ / rel).string(); }

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::filesystem::path path_;
};

} // namespace vicl::testing
