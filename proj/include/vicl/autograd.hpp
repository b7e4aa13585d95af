// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vicl/array.hpp"

namespace vicl {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. Nodes that do not need a gradient keep
// no parents and no backward closure, so inference graphs cost nothing extra.
struct Node {
    Array value;
    Array grad; // allocated lazily; same shape as value
    bool needs_grad = false;
    bool is_leaf = true;
    std::vector<NodePtr> parents;
    // Reads this->grad, accumulates into parents' grads.
    std::function<void(Node&)> backward_fn;
    const char* op = "leaf";

    Array& grad_buffer();
    void accumulate(const Array& g);
};

// Handle to a node. Cheap to copy.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    const Array& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }
    std::size_t size() const { return node_->value.size(); }
    bool needs_grad() const { return node_ && node_->needs_grad; }
    bool valid() const { return static_cast<bool>(node_); }

    // Gradient accumulated by backward(); zeros if the leaf never participated.
    const Array& grad() const;
    Array& mutable_value() { return node_->value; }
    void zero_grad();
    void set_requires_grad(bool flag);

    Node* node() const { return node_.get(); }
    const NodePtr& ptr() const { return node_; }

private:
    NodePtr node_;
};

Var constant(Array value);
// Trainable leaf; its grad buffer is allocated (zeros) up front.
Var parameter(Array value);

// Builds an interior node. `backward` is dropped when no parent needs a gradient.
Var make_node(Array value, std::vector<Var> parents, std::function<void(Node&)> backward, const char* op);

// Reverse sweep from a scalar loss. Gradients accumulate into every leaf with
// needs_grad; call zero_grad() on parameters between independent steps.
void backward(const Var& loss);

} // namespace vicl
