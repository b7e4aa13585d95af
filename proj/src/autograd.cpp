// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/autograd.hpp"

#include <unordered_map>

namespace vicl {

Array& Node::grad_buffer() {
    if (grad.size() != value.size()) grad = Array(value.shape(), 0.0);
    return grad;
}

void Node::accumulate(const Array& g) {
    Array& buf = grad_buffer();
    double* dst = buf.data();
    const double* src = g.data();
    for (std::size_t i = 0, n = buf.size(); i < n; ++i) dst[i] += src[i];
}

const Array& Var::grad() const {
    return node_->grad_buffer();
}

void Var::zero_grad() {
    if (node_->grad.size() == node_->value.size()) node_->grad.fill(0.0);
}

void Var::set_requires_grad(bool flag) {
    if (!node_->is_leaf) throw Error("set_requires_grad on a non-leaf node");
    node_->needs_grad = flag;
}

Var constant(Array value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var parameter(Array value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->needs_grad = true;
    n->grad_buffer();
    return Var(std::move(n));
}

Var make_node(Array value, std::vector<Var> parents, std::function<void(Node&)> backward, const char* op) {
    value.check_finite(op);
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->is_leaf = false;
    n->op = op;
    bool any = false;
    for (const auto& p : parents) any = any || p.needs_grad();
    if (any) {
        n->needs_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.ptr());
        n->backward_fn = std::move(backward);
    }
    return Var(std::move(n));
}

void backward(const Var& loss) {
    if (!loss.valid()) throw Error("backward on an empty Var");
    if (loss.size() != 1) throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.needs_grad()) return;

    // Iterative DFS post-order; state 1 = on stack, 2 = done.
    std::vector<Node*> order;
    std::unordered_map<Node*, int> state;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    state[loss.node()] = 1;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (!p->needs_grad) continue;
            int& s = state[p];
            if (s == 1) throw Error("graph cycle detected during backward");
            if (s == 0) {
                s = 1;
                stack.emplace_back(p, 0);
            }
        } else {
            state[node] = 2;
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad_buffer().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->is_leaf) continue;
        if (n->grad.size() != n->value.size()) continue; // nothing flowed here
        n->grad.check_finite("gradient");
        if (n->backward_fn) n->backward_fn(*n);
        if (n != loss.node()) {
            // Interior gradients are consumed; release memory.
            n->grad = Array();
        }
    }
    for (Node* n : order) {
        if (n->is_leaf && n->grad.size() == n->value.size()) n->grad.check_finite("leaf gradient");
    }
}

} // namespace vicl
