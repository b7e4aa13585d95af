// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/optim.hpp"

#include <cmath>
#include <numbers>

namespace vicl {

void ParamList::add(std::string name, Var var) {
    for (const auto& p : params_) {
        if (p.name == name) throw Error("duplicate parameter name: " + name);
    }
    params_.push_back({std::move(name), std::move(var)});
}

void ParamList::append(const ParamList& other, const std::string& prefix) {
    for (const auto& p : other.params_) add(prefix + p.name, p.var);
}

const Var* ParamList::find(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name == name) return &p.var;
    }
    return nullptr;
}

std::size_t ParamList::count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.size();
    return n;
}

void ParamList::zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
}

void ParamList::set_requires_grad(bool flag) {
    for (auto& p : params_) p.var.set_requires_grad(flag);
}

std::uint64_t ParamList::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) h = fingerprint(p.var.value(), h);
    return h;
}

double ParamList::grad_norm() const {
    double s = 0.0;
    for (const auto& p : params_) {
        for (double g : p.var.grad().values()) s += g * g;
    }
    return std::sqrt(s);
}

ParamList ParamList::clone() const {
    ParamList out;
    for (const auto& p : params_) {
        Var v = parameter(p.var.value());
        v.set_requires_grad(p.var.needs_grad());
        out.add(p.name, v);
    }
    return out;
}

void ParamList::assign(const ParamList& other) {
    if (other.size() != size()) throw Error("ParamList::assign: size mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& src = other.params_[i];
        auto& dst = params_[i];
        if (src.name != dst.name || src.var.shape() != dst.var.shape()) {
            throw ShapeError("ParamList::assign: mismatch at " + dst.name);
        }
        dst.var.mutable_value() = src.var.value();
    }
}

double CosineSchedule::lr(std::size_t step) const {
    if (total_steps == 0 || step >= total_steps) return 0.0;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    return initial_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void sgd_step(std::span<Array> params, std::span<const Array> grads, OptimizerState& state) {
    if (params.size() != grads.size()) throw ShapeError("sgd_step: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != grads[i].shape()) {
            throw ShapeError("sgd_step: shape mismatch " + shape_str(params[i].shape()) + " vs " +
                             shape_str(grads[i].shape()));
        }
    }
    const double lr = state.current_lr();
    for (std::size_t i = 0; i < params.size(); ++i) {
        grads[i].check_finite("gradient passed to sgd_step");
        for (std::size_t j = 0; j < params[i].size(); ++j) params[i][j] -= lr * grads[i][j];
    }
    ++state.step;
}

void Sgd::step(ParamList& params) {
    const double lr = state_.current_lr();
    if (velocity_.empty()) {
        for (const auto& p : params.items()) velocity_.emplace_back(p.var.shape(), 0.0);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Var v = params.items()[i].var;
        if (!v.needs_grad()) continue;
        const Array& g = v.grad();
        g.check_finite(params.items()[i].name.c_str());
        Array& val = v.mutable_value();
        Array& vel = velocity_[i];
        for (std::size_t j = 0; j < val.size(); ++j) {
            vel[j] = momentum_ * vel[j] + g[j];
            val[j] -= lr * vel[j];
        }
    }
    ++state_.step;
}

void Adam::step(ParamList& params) {
    const double lr = state_.current_lr();
    if (m_.empty()) {
        for (const auto& p : params.items()) {
            m_.emplace_back(p.var.shape(), 0.0);
            v_.emplace_back(p.var.shape(), 0.0);
        }
    }
    const double t = static_cast<double>(state_.step + 1);
    const double c1 = 1.0 - std::pow(beta1_, t);
    const double c2 = 1.0 - std::pow(beta2_, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Var v = params.items()[i].var;
        if (!v.needs_grad()) continue;
        const Array& g = v.grad();
        g.check_finite(params.items()[i].name.c_str());
        Array& val = v.mutable_value();
        for (std::size_t j = 0; j < val.size(); ++j) {
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
            val[j] -= lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_);
        }
    }
    ++state_.step;
}

} // namespace vicl
