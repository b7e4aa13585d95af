// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/array.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace vicl {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("array shape must have at least one extent");
    for (auto e : shape) {
        if (e == 0) throw ShapeError("array extents must be positive, got " + shape_str(shape));
    }
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), fill);
}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
    }
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Array({rows, cols}, std::vector<double>(values));
}

Array Array::vector(std::initializer_list<double> values) {
    return Array({values.size()}, std::vector<double>(values));
}

Array Array::scalar(double value) { return Array({1}, std::vector<double>{value}); }

std::size_t Array::rows() const {
    if (shape_.size() == 1) return 1;
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
    return r;
}

std::size_t Array::cols() const { return shape_.empty() ? 0 : shape_.back(); }

double Array::item() const {
    if (data_.size() != 1) throw ShapeError("item() on array of shape " + shape_str(shape_));
    return data_[0];
}

Array Array::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Array(std::move(shape), data_);
}

void Array::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Array::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Array::check_finite(const char* what) const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw NumericError(std::string("non-finite value in ") + what + " at flat index " + std::to_string(i));
        }
    }
}

std::uint64_t fingerprint(const Array& a, std::uint64_t h) {
    constexpr std::uint64_t prime = 0x100000001b3ULL;
    auto mix = [&](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= prime;
        }
    };
    for (auto e : a.shape()) {
        std::uint64_t e64 = e;
        mix(&e64, sizeof e64);
    }
    mix(a.data(), a.size() * sizeof(double));
    return h;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ShapeError("cosine_similarity: length mismatch");
    double uv = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if (uu <= 0.0 || vv <= 0.0) throw Error("cosine_similarity: zero-norm input");
    double c = uv / (std::sqrt(uu) * std::sqrt(vv));
    return std::clamp(c, -1.0, 1.0);
}

} // namespace vicl
