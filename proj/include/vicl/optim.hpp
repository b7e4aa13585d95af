// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vicl/autograd.hpp"

namespace vicl {

struct NamedParam {
    std::string name;
    Var var;
};

// Ordered, named view over a component's trainable leaves. Order is the
// serialization order in checkpoints.
class ParamList {
public:
    void add(std::string name, Var var);
    void append(const ParamList& other, const std::string& prefix = "");

    std::size_t size() const { return params_.size(); }
    const std::vector<NamedParam>& items() const { return params_; }
    const Var* find(const std::string& name) const;

    std::size_t count() const; // total scalar parameters
    void zero_grad();
    void set_requires_grad(bool flag);
    std::uint64_t checksum() const;
    double grad_norm() const;

    // Deep copy of values into fresh leaves (same names, same requires_grad).
    ParamList clone() const;
    // Copies values from `other` by position; names and shapes must match.
    void assign(const ParamList& other);

private:
    std::vector<NamedParam> params_;
};

// lr(step) = lr0 * 0.5 * (1 + cos(pi * step / total)), held at 0 past total.
struct CosineSchedule {
    double initial_lr = 0.03;
    std::size_t total_steps = 1;

    double lr(std::size_t step) const;
};

struct OptimizerState {
    CosineSchedule schedule;
    std::size_t step = 0;

    double current_lr() const { return schedule.lr(step); }
};

// p <- p - lr(step) * g for each pair, then step += 1.
void sgd_step(std::span<Array> params, std::span<const Array> grads, OptimizerState& state);

// SGD over a ParamList's accumulated gradients, with optional heavy-ball momentum.
class Sgd {
public:
    Sgd(CosineSchedule schedule, double momentum = 0.0) : state_{schedule, 0}, momentum_(momentum) {}

    void step(ParamList& params);
    const OptimizerState& state() const { return state_; }

private:
    OptimizerState state_;
    double momentum_;
    std::vector<Array> velocity_;
};

class Adam {
public:
    Adam(CosineSchedule schedule, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : state_{schedule, 0}, beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamList& params);
    const OptimizerState& state() const { return state_; }

private:
    OptimizerState state_;
    double beta1_, beta2_, eps_;
    std::vector<Array> m_, v_;
};

} // namespace vicl
