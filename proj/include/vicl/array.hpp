// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "vicl/error.hpp"

namespace vicl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. A 1-D array of length n is treated as a
// 1 x n matrix by the 2-D accessors.
class Array {
public:
    Array() = default;
    explicit Array(Shape shape, double fill = 0.0);
    Array(Shape shape, std::vector<double> data);

    static Array matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
    static Array vector(std::initializer_list<double> values);
    static Array scalar(double value);

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const;
    std::size_t cols() const;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double item() const;

    Array reshaped(Shape shape) const;
    void fill(double value);
    bool all_finite() const;
    // Throws NumericError naming `what` if any value is NaN or Inf.
    void check_finite(const char* what) const;

    bool operator==(const Array& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

// 64-bit FNV-1a over shape and raw value bytes; used for checkpoint and
// frozen-parameter checksums.
std::uint64_t fingerprint(const Array& a, std::uint64_t seed = 0xcbf29ce484222325ULL);

double cosine_similarity(std::span<const double> u, std::span<const double> v);

} // namespace vicl
