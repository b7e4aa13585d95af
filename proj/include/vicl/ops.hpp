// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "vicl/autograd.hpp"

namespace vicl {

// Differentiable primitives. Matrices are row-major; 1-D arrays act as a
// single row where a matrix is expected.

Var matmul(const Var& a, const Var& b);    // [m x k] * [k x n]
Var matmul_nt(const Var& a, const Var& b); // [m x k] * [n x k]^T

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
// Adds a length-n vector to every row of an [m x n] matrix.
Var add_row(const Var& a, const Var& bias);
Var linear(const Var& x, const Var& weight, const Var& bias);

// Tanh approximation.
Var gelu(const Var& x);
Var softmax(const Var& x, std::size_t axis);
Var softmax_rows(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Mean over rows of -log softmax(logits)[target].
Var cross_entropy(const Var& logits, std::span<const int> targets);

Var sum(const Var& x);
Var mean(const Var& x);
// [m x n] -> [n], the average row.
Var mean_rows(const Var& x);
// ||a - b||^2 as a scalar.
Var squared_distance(const Var& a, const Var& b);

Var reshape(const Var& x, Shape shape);
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
// Row r of part p lands at row positions[p][r] of a [total_rows x n] result.
Var assemble_rows(const std::vector<Var>& parts, const std::vector<std::vector<std::size_t>>& positions,
                  std::size_t total_rows);
// Sums consecutive column blocks of width `block`: [m x K*block] -> [m x K].
Var block_sum_cols(const Var& x, std::size_t block);
// sum_k weights[k] * parts[k]; all parts share a shape.
Var weighted_sum(const Var& weights, const std::vector<Var>& parts);

Var detach(const Var& x);

// Plain kernels, exposed for reuse in forward-only code paths.
namespace kernel {
// c (+)= a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
// c (+)= a[m x k] * b[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
// c (+)= a[k x m]^T * b[k x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
double gelu(double x);
double gelu_grad(double x);
} // namespace kernel

} // namespace vicl
