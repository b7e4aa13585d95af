// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "vicl/ops.hpp"
#include "vicl/report.hpp"

namespace vicl {

void AdapterConfig::validate(std::size_t embed_dim) const {
    if (!single_layer && (hidden == 0 || hidden >= embed_dim)) {
        throw ConfigError("adapter.hidden: must be in [1, embed_dim) for a bottleneck, got " + std::to_string(hidden) +
                          " with embed_dim " + std::to_string(embed_dim));
    }
}

std::size_t adapter_parameter_count(std::size_t d, const AdapterConfig& cfg) {
    if (cfg.single_layer) return d * d + d;
    return d * cfg.hidden + cfg.hidden + cfg.hidden * d + d;
}

Adapter::Adapter(int arrangement_id, std::size_t embed_dim, const AdapterConfig& cfg, Rng& rng)
    : arrangement_id_(arrangement_id), dim_(embed_dim), cfg_(cfg) {
    if (arrangement_id < 1 || arrangement_id > 8) throw ConfigError("adapter arrangement id must be in 1..8");
    cfg_.validate(dim_);
    if (cfg_.single_layer) {
        w2_ = parameter(Array(Shape{dim_, dim_}, 0.0));
        b2_ = parameter(Array(Shape{dim_}, 0.0));
    } else {
        Array w1(Shape{dim_, cfg_.hidden});
        const double s = 1.0 / std::sqrt(static_cast<double>(dim_));
        for (auto& v : w1.storage()) v = rng.normal(0.0, s);
        w1_ = parameter(std::move(w1));
        b1_ = parameter(Array(Shape{cfg_.hidden}, 0.0));
        w2_ = parameter(Array(Shape{cfg_.hidden, dim_}, 0.0));
        b2_ = parameter(Array(Shape{dim_}, 0.0));
        params_.add("w1", w1_);
        params_.add("b1", b1_);
    }
    params_.add("w2", w2_);
    params_.add("b2", b2_);
}

Adapter Adapter::clone() const {
    Rng scratch(0);
    Adapter out(arrangement_id_, dim_, cfg_, scratch);
    out.params_.assign(params_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        out.params_.items()[i].var.ptr()->needs_grad = params_.items()[i].var.needs_grad();
    }
    return out;
}

Var Adapter::apply(const Var& tokens) const {
    if (tokens.cols() != dim_) {
        throw ShapeError("adapter: token width " + std::to_string(tokens.cols()) + " does not match embed_dim " +
                         std::to_string(dim_));
    }
    Var delta = cfg_.single_layer ? linear(tokens, w2_, b2_) : linear(gelu(linear(tokens, w1_, b1_)), w2_, b2_);
    return cfg_.residual ? add(tokens, delta) : delta;
}

TokenHook Adapter::hook() const {
    return [this](const Var& x) { return apply(x); };
}

std::string ArrangementReport::to_csv() const {
    std::ostringstream os;
    os << "arrangement,metric,rank,selected\n";
    for (const auto& r : rows) os << "a" << r.arrangement_id << "," << format_double(r.metric) << "," << r.rank << "," << (r.selected ? 1 : 0) << "\n";
    return os.str();
}

ArrangementReport rank_arrangements(const std::vector<double>& metric, bool higher_is_better, std::size_t m) {
    if (metric.size() != 8) throw Error("rank_arrangements: need one metric per arrangement (8)");
    if (m > 8) throw ConfigError("cannot select more than 8 arrangements");
    std::vector<int> order(8);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (metric[a] != metric[b]) return higher_is_better ? metric[a] > metric[b] : metric[a] < metric[b];
        return a < b;
    });
    ArrangementReport r;
    r.higher_is_better = higher_is_better;
    r.rows.resize(8);
    for (int i = 0; i < 8; ++i) r.rows[i] = {i + 1, metric[i], 0, false};
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        r.rows[order[pos]].rank = static_cast<int>(pos) + 1;
        r.rows[order[pos]].selected = pos < m;
    }
    return r;
}

std::vector<int> select_preferred(const ArrangementReport& report, std::size_t m) {
    if (m > 8) throw ConfigError("cannot select more than 8 arrangements");
    if (report.rows.size() != 8) throw Error("select_preferred: report must cover all 8 arrangements");
    std::vector<const ArrangementScore*> rows;
    for (const auto& r : report.rows) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](const ArrangementScore* a, const ArrangementScore* b) {
        if (a->rank != b->rank) return a->rank < b->rank;
        return a->arrangement_id < b->arrangement_id;
    });
    std::vector<int> out;
    for (std::size_t i = 0; i < m; ++i) out.push_back(rows[i]->arrangement_id);
    return out;
}

} // namespace vicl
