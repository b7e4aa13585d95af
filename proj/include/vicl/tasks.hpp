// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vicl/backbone.hpp"
#include "vicl/grid.hpp"

namespace vicl {

enum class TaskKind : std::uint8_t { Segmentation, Detection, Colorization };

const char* task_name(TaskKind k);
TaskKind parse_task(const std::string& s);

inline constexpr int kNumClasses = 12;
inline constexpr int kNumFolds = 4;

// Class c has geometry c % 3 (circle, rectangle, triangle) and its own colour.
// Fold f owns classes {3f, 3f+1, 3f+2}.
std::vector<int> fold_classes(int fold);
int fold_of_class(int cls);

// Synthetic scenes: a target object and a distractor of another class on a
// textured background. In task pools the background palette follows the
// target class (scene context); with `context_coupled = false` the palette is
// drawn independently, which is how the pretraining corpus is built.
struct TaskSpec {
    TaskKind kind = TaskKind::Segmentation;
    std::uint64_t seed = 0;
    std::size_t count = 1;
    std::size_t extent = 32; // panel side in pixels
    int fold = -1;           // -1: all folds, round-robin
    bool context_coupled = true;
    std::size_t offset = 0; // index of the first example in the stream
};

struct Sample {
    Panel image;
    Panel label;
    int target_class = 0;
    int fold = 0;
};

// Pure function of the TaskSpec: example i depends only on (kind, seed, extent,
// fold, coupling, offset + i).
std::vector<Sample> generate(const TaskSpec& spec);

// Binary foreground mask of the target object of a freshly generated sample
// (before any label transform). Exposed for tests.
std::vector<std::uint8_t> target_mask(const TaskSpec& spec, std::size_t index);

// (support, query) pairs sharing the target class with decoupled palettes.
std::vector<PretrainTriple> generate_pretrain(TaskKind kind, std::uint64_t seed, std::size_t count, std::size_t extent);

} // namespace vicl
