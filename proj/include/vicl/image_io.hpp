// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "vicl/grid.hpp"

namespace vicl {

// 8-bit RGB PNG; values are scaled by 255 and rounded. Grayscale and alpha
// inputs are expanded/dropped on read.
void write_png(const std::string& path, const Image& image);
Image read_png(const std::string& path);

// Bilinear resampling with pixel-center alignment.
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);

// Tiles images left to right with a 1-px white gutter (all must share height).
Image hstack(const std::vector<Image>& images);
Image vstack(const std::vector<Image>& images);

} // namespace vicl
