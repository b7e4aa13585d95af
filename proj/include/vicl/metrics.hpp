// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vicl/grid.hpp"
#include "vicl/tasks.hpp"

namespace vicl {

inline constexpr double kBinarizeThreshold = 0.5;

// Foreground where the channel mean is >= threshold.
std::vector<std::uint8_t> binarize(const Panel& panel, double threshold = kBinarizeThreshold);

// |pred ∩ gt| / |pred ∪ gt| after binarization; 1.0 when both are empty.
double miou(const Panel& pred, const Panel& gt, double threshold = kBinarizeThreshold);
double mse(const Panel& pred, const Panel& gt);

// mIoU for segmentation and detection, MSE for colorization.
double score(TaskKind kind, const Panel& pred, const Panel& gt);
bool higher_is_better(TaskKind kind);
const char* metric_name(TaskKind kind);

std::uint64_t fingerprint(const Image& image, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t split_fingerprint(const std::vector<Sample>& split);

struct EvalResult {
    TaskKind kind = TaskKind::Segmentation;
    std::vector<double> values;
    double mean = 0.0;
    double std_error = 0.0;
    std::uint64_t split_fingerprint = 0;

    static EvalResult from_values(TaskKind kind, std::vector<double> values, std::uint64_t fingerprint);

    std::string to_csv() const;
    std::string to_json() const;
    static EvalResult from_csv(const std::string& text);
};

} // namespace vicl
