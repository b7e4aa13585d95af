// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/stages.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vicl {

std::set<PairId> holdout_split(const SupportPool& pool, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must be in (0, 1)");
    std::vector<PairId> ids;
    for (const auto& p : pool.pairs()) ids.push_back(p.id);
    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    rng.shuffle(ids);
    const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
    if (n == 0 || n >= ids.size()) throw ConfigError("holdout split would be empty or cover the whole pool");
    return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::vector<Episode> filter_episodes(const std::vector<Episode>& episodes, const std::set<PairId>& ids, bool keep) {
    std::vector<Episode> out;
    for (const auto& e : episodes) {
        if ((ids.count(e.query_id) > 0) == keep) out.push_back(e);
    }
    return out;
}

namespace {

std::vector<std::size_t> first_k(const Episode& e, std::size_t k) {
    if (k < 1 || k > e.supports.size()) {
        throw ConfigError("episode for query " + std::to_string(e.query_id) + " has " +
                          std::to_string(e.supports.size()) + " supports, K=" + std::to_string(k) + " requested");
    }
    return {e.supports.begin(), e.supports.begin() + static_cast<std::ptrdiff_t>(k)};
}

void check_loss(double v, const char* stage, std::size_t step) {
    if (!std::isfinite(v)) throw NumericError(std::string(stage) + ": non-finite loss at step " + std::to_string(step));
}

// Restores requires_grad flags on scope exit.
class GradScope {
public:
    GradScope(ParamList& params, bool flag) : params_(params) {
        for (const auto& p : params_.items()) saved_.push_back(p.var.needs_grad());
        params_.set_requires_grad(flag);
    }
    ~GradScope() {
        for (std::size_t i = 0; i < saved_.size(); ++i) params_.items()[i].var.ptr()->needs_grad = saved_[i];
    }
    GradScope(const GradScope&) = delete;
    GradScope& operator=(const GradScope&) = delete;

private:
    ParamList& params_;
    std::vector<bool> saved_;
};

template <typename StepFn>
StageTrace run_batched(std::size_t n, std::size_t epochs, std::size_t batch, Rng& rng, const char* stage,
                       ParamList* params, Sgd* opt, const StepFn& example_loss, const StepObserver& observer) {
    StageTrace trace;
    batch = std::max<std::size_t>(1, batch);
    const std::size_t steps_per_epoch = (n + batch - 1) / batch;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            const std::size_t b0 = s * batch, b1 = std::min(n, b0 + batch);
            const double inv = 1.0 / static_cast<double>(b1 - b0);
            if (params) params->zero_grad();
            double loss = 0.0, ce = 0.0, align = 0.0;
            for (std::size_t i = b0; i < b1; ++i) {
                EpisodeLoss l = example_loss(order[i]);
                loss += l.total.value()[0];
                ce += l.ce;
                align += l.align;
                if (params) backward(scale(l.total, inv));
            }
            check_loss(loss, stage, trace.loss.size());
            trace.loss.push_back(loss * inv);
            trace.ce.push_back(ce * inv);
            trace.align.push_back(align * inv);
            if (opt) opt->step(*params);
            if (observer) observer(trace.loss.size());
        }
    }
    if (params) params->zero_grad();
    return trace;
}

std::size_t total_steps(std::size_t n, std::size_t epochs, std::size_t batch) {
    batch = std::max<std::size_t>(1, batch);
    return std::max<std::size_t>(1, ((n + batch - 1) / batch) * epochs);
}

} // namespace

StageTrace train_stage1(FusionModule& f, Backbone& phi, const PoolCache& cache, const std::vector<Episode>& episodes,
                        const Stage1Config& cfg, Rng& rng, const StepObserver& observer) {
    if (episodes.empty()) throw Error("stage1: no training episodes");
    if (cache.size() <= cfg.k) {
        throw ConfigError("stage1: pool of " + std::to_string(cache.size()) + " pairs is too small for K=" +
                          std::to_string(cfg.k) + " with the query excluded");
    }
    if (cache.backbone_checksum != phi.params().checksum()) throw PrerequisiteError("stage1: pool cache is stale");
    GradScope frozen(phi.params(), false);
    Sgd opt(CosineSchedule{cfg.lr, total_steps(episodes.size(), cfg.epochs, cfg.batch)}, cfg.momentum);
    const ModelView view{&phi, &f, nullptr, 1};
    auto example = [&](std::size_t i) {
        const Episode& e = episodes[i];
        for (std::size_t s : first_k(e, cfg.k)) {
            if (s == e.query) throw Error("stage1: query " + std::to_string(e.query_id) + " retrieved itself");
        }
        EpisodeInput in = episode_from_cache(cache, e.query, cache, first_k(e, cfg.k));
        EpisodeForward fwd = forward_episode(view, in);
        return episode_loss(fwd, in, cache.label_tokens[e.query], cfg.lambda, true);
    };
    return run_batched(episodes.size(), cfg.epochs, cfg.batch, rng, "stage1", &f.params(), &opt, example, observer);
}

StageTrace stage1_baseline_trace(Backbone& phi, const PoolCache& cache, const std::vector<Episode>& episodes,
                                 const Stage1Config& cfg, Rng& rng) {
    if (episodes.empty()) throw Error("stage1 baseline: no episodes");
    GradScope frozen(phi.params(), false);
    const ModelView view{&phi, nullptr, nullptr, 1};
    auto example = [&](std::size_t i) {
        const Episode& e = episodes[i];
        EpisodeInput in = episode_from_cache(cache, e.query, cache, first_k(e, 1));
        EpisodeForward fwd = forward_episode(view, in);
        return episode_loss(fwd, in, cache.label_tokens[e.query], cfg.lambda, true);
    };
    return run_batched(episodes.size(), cfg.epochs, cfg.batch, rng, "stage1 baseline", nullptr, nullptr, example, {});
}

double mean_episode_ce(const ModelView& model, const PoolCache& cache, const std::vector<Episode>& episodes,
                       std::size_t k, bool random_prompt, Rng& rng) {
    if (episodes.empty()) throw Error("mean_episode_ce: no episodes");
    double total = 0.0;
    for (const auto& e : episodes) {
        std::vector<std::size_t> supports;
        if (random_prompt) {
            std::size_t s;
            do {
                s = rng.index(cache.size());
            } while (s == e.query);
            supports = {s};
        } else {
            supports = first_k(e, k);
        }
        EpisodeInput in = episode_from_cache(cache, e.query, cache, supports);
        ModelView v = model;
        if (random_prompt) v.fusion = nullptr;
        total += cross_entropy(forward_episode(v, in).logits, cache.label_tokens[e.query]).value()[0];
    }
    return total / static_cast<double>(episodes.size());
}

Stage2Result train_stage2(const FusionModule& f, Backbone& phi, const Codebook& codebook, TaskKind kind,
                          const SupportPool& pool, const PoolCache& cache, const std::vector<Episode>& train_episodes,
                          const std::vector<Episode>& rank_episodes, const Stage2Config& cfg, Rng& rng,
                          const Stage2Observer& after_each) {
    if (train_episodes.empty() || rank_episodes.empty()) throw Error("stage2: empty training or ranking split");
    if (cache.backbone_checksum != phi.params().checksum()) throw PrerequisiteError("stage2: pool cache is stale");
    GradScope frozen_phi(phi.params(), false);

    // f and phi are frozen, so each episode's fused prompt is fixed.
    struct Fixed {
        Var image, label, query;
    };
    auto fix = [&](const Episode& e) {
        EpisodeInput in = episode_from_cache(cache, e.query, cache, first_k(e, cfg.k));
        FusedVars fv = fuse_vars(f, in.query_tokens, in.supports);
        return Fixed{constant(fv.image_patches.value()), constant(fv.label_patches.value()), in.query_patches};
    };
    std::vector<Fixed> train_fixed, rank_fixed;
    for (const auto& e : train_episodes) train_fixed.push_back(fix(e));
    for (const auto& e : rank_episodes) rank_fixed.push_back(fix(e));
    const Var mask = constant(mask_patches(phi.config()));

    Stage2Result result;
    std::vector<double> metric(8, 0.0);
    for (int id = 1; id <= 8; ++id) {
        Rng local = rng.fork(static_cast<std::uint64_t>(id));
        Adapter adapter(id, phi.config().embed_dim, cfg.adapter, local);
        const Arrangement& arr = arrangement(id);
        TokenHook hook = adapter.hook();
        Sgd opt(CosineSchedule{cfg.lr, total_steps(train_fixed.size(), cfg.epochs, cfg.batch)}, cfg.momentum);
        auto example = [&](std::size_t i) {
            const Fixed& x = train_fixed[i];
            Var logits = phi.mask_logits(RolePatches{x.image, x.label, x.query, mask}, arr, &hook);
            Var ce = cross_entropy(logits, cache.label_tokens[train_episodes[i].query]);
            return EpisodeLoss{ce, ce.value()[0], 0.0};
        };
        result.traces.push_back(
            run_batched(train_fixed.size(), cfg.epochs, cfg.batch, local, "stage2", &adapter.params(), &opt, example, {}));

        double sum = 0.0;
        for (std::size_t i = 0; i < rank_fixed.size(); ++i) {
            const Fixed& x = rank_fixed[i];
            Var logits = phi.mask_logits(RolePatches{x.image, x.label, x.query, mask}, arr, &hook);
            const Panel& gt = pool[rank_episodes[i].query].label;
            sum += score(kind, codebook.decode(argmax_rows(logits.value()), gt.height(), gt.width()), gt);
        }
        metric[id - 1] = sum / static_cast<double>(rank_fixed.size());
        result.adapters.push_back(std::move(adapter));
        if (after_each) after_each(id, result.adapters);
    }
    result.report = rank_arrangements(metric, higher_is_better(kind), cfg.select);
    result.preferred = select_preferred(result.report, cfg.select);
    return result;
}

ModelView FinetuneModel::view() const {
    return {&backbone, fusion ? &*fusion : nullptr, adapter ? &*adapter : nullptr, arrangement_id};
}

FinetuneModel FinetuneModel::clone() const {
    FinetuneModel out{arrangement_id, backbone.clone(), std::nullopt, std::nullopt};
    if (fusion) out.fusion.emplace(fusion->clone());
    if (adapter) out.adapter.emplace(adapter->clone());
    return out;
}

void Stage3Config::validate() const {
    if (k < 1) throw ConfigError("stage3.k must be >= 1");
    if (swaps > k) throw ConfigError("stage3 swaps N=" + std::to_string(swaps) + " exceeds K=" + std::to_string(k));
    if (!train_fusion && !train_adapter && !train_backbone) {
        throw ConfigError("stage3 needs at least one unfrozen component");
    }
    if (lr < 0.0) throw ConfigError("stage3.lr must be >= 0");
}

PromptPair make_new_pair(const Panel& query, const Panel& prediction, PairId fresh_id) {
    if (!query.same_extent(prediction)) throw ShapeError("make_new_pair: query and prediction extents differ");
    return PromptPair{fresh_id, query, prediction, -1, std::nullopt};
}

SwappedSupports swap_supports(const std::vector<const PromptPair*>& supports, const PromptPair& p_new, std::size_t n) {
    if (n < 1 || n > supports.size()) {
        throw ConfigError("swap index " + std::to_string(n) + " outside [1, " + std::to_string(supports.size()) + "]");
    }
    SwappedSupports out{supports, supports[n - 1]};
    out.supports[n - 1] = &p_new;
    return out;
}

FinetuneStep forward_finetune(const FinetuneModel& model, const Codebook& codebook, const Panel& query_image,
                              const Panel& query_label, const std::vector<const PromptPair*>& supports) {
    EpisodeInput in = episode_from_panels(model.backbone, query_image, supports);
    EpisodeForward fwd = forward_episode(model.view(), in);
    Var loss = cross_entropy(fwd.logits, codebook.quantize(query_label));
    Panel pred = codebook.decode(argmax_rows(fwd.logits.value()), query_image.height(), query_image.width());
    return {loss, std::move(pred)};
}

Stage3Trace train_stage3(FinetuneModel& model, const Codebook& codebook, const SupportPool& pool,
                         const std::vector<Episode>& episodes, const Stage3Config& cfg, Rng& rng) {
    cfg.validate();
    if (episodes.empty()) throw Error("stage3: no training episodes");
    const std::size_t k = model.fusion ? cfg.k : 1;
    const std::size_t swaps = std::min(cfg.swaps, k);

    ParamList trainable;
    model.backbone.params().set_requires_grad(cfg.train_backbone);
    if (cfg.train_backbone) trainable.append(model.backbone.params(), "backbone.");
    if (model.fusion) {
        model.fusion->params().set_requires_grad(cfg.train_fusion);
        if (cfg.train_fusion) trainable.append(model.fusion->params(), "fusion.");
    }
    if (model.adapter) {
        model.adapter->params().set_requires_grad(cfg.train_adapter);
        if (cfg.train_adapter) trainable.append(model.adapter->params(), "adapter.");
    }
    if (trainable.size() == 0) throw ConfigError("stage3: nothing to train for this model");

    const std::size_t per_epoch =
        cfg.max_examples == 0 ? episodes.size() : std::min(cfg.max_examples, episodes.size());
    Sgd opt(CosineSchedule{cfg.lr, std::max<std::size_t>(1, per_epoch * cfg.epochs * (swaps + 1))}, cfg.momentum);
    const PairId fresh = pool.fresh_id();
    Stage3Trace out;
    std::vector<std::size_t> order(episodes.size());
    std::iota(order.begin(), order.end(), 0);

    auto step = [&](const Panel& image, const Panel& label, const std::vector<const PromptPair*>& supports) {
        trainable.zero_grad();
        FinetuneStep s = forward_finetune(model, codebook, image, label, supports);
        const double v = s.loss.value()[0];
        check_loss(v, "stage3", out.trace.loss.size());
        backward(s.loss);
        opt.step(trainable);
        out.trace.loss.push_back(v);
        out.trace.ce.push_back(v);
        out.trace.align.push_back(0.0);
        return s;
    };

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t j = 0; j < per_epoch; ++j) {
            const Episode& e = episodes[order[j]];
            const PromptPair& q = pool[e.query];
            std::vector<const PromptPair*> supports;
            for (std::size_t s : first_k(e, k)) supports.push_back(&pool[s]);

            std::size_t count = 1;
            FinetuneStep first = step(q.image, q.label, supports);
            // The prediction enters the swapped episodes as data only.
            const PromptPair p_new = make_new_pair(q.image, first.prediction, fresh);
            for (std::size_t n = 1; n <= swaps; ++n) {
                SwappedSupports sw = swap_supports(supports, p_new, n);
                step(sw.query->image, sw.query->label, sw.supports);
                ++count;
            }
            out.subiterations.push_back(count);
        }
    }
    trainable.zero_grad();
    return out;
}

} // namespace vicl
