// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "vicl/array.hpp"
#include "vicl/grid.hpp"
#include "vicl/rng.hpp"

namespace vicl {

// Flattens a panel into [num_patches x patch*patch*3], patches in raster
// order, each patch laid out (row, col, channel).
Array patchify(const Image& image, std::size_t patch);
Image unpatchify(const Array& patches, std::size_t height, std::size_t width, std::size_t patch);

// Frozen discrete patch vocabulary.
class Codebook {
public:
    Codebook() = default;
    Codebook(std::size_t patch, Array entries); // entries: [V x patch*patch*3]

    std::size_t patch() const { return patch_; }
    std::size_t vocab() const { return entries_.rows(); }
    std::size_t entry_dim() const { return entries_.cols(); }
    const Array& entries() const { return entries_; }

    // Nearest entry per patch by squared Euclidean distance; ties go to the
    // lowest index.
    std::vector<int> quantize(const Image& panel) const;
    int nearest(const double* patch) const;
    Image decode(const std::vector<int>& tokens, std::size_t height, std::size_t width) const;

    std::uint64_t checksum() const { return fingerprint(entries_); }

private:
    std::size_t patch_ = 0;
    Array entries_;
};

struct KMeansOptions {
    std::size_t vocab = 64;
    std::size_t iterations = 20;
    std::size_t max_samples = 6000; // patches subsampled before clustering
};

// k-means++ seeding followed by Lloyd iterations. Empty clusters keep their
// previous centre; duplicate centres are replaced so entries stay distinct.
Codebook build_codebook(const std::vector<const Image*>& panels, std::size_t patch, const KMeansOptions& opts, Rng& rng);

} // namespace vicl
