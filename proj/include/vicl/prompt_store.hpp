// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vicl/array.hpp"
#include "vicl/backbone.hpp"
#include "vicl/grid.hpp"
#include "vicl/tasks.hpp"

namespace vicl {

using PairId = std::int64_t;

struct PromptPair {
    PairId id = 0;
    Panel image;
    Panel label;
    int target_class = -1; // -1 when unknown (ingested from disk)
    std::optional<Array> feature;
};

class SupportPool {
public:
    SupportPool() = default;
    explicit SupportPool(std::vector<PromptPair> pairs);

    std::size_t size() const { return pairs_.size(); }
    const PromptPair& operator[](std::size_t i) const { return pairs_.at(i); }
    const std::vector<PromptPair>& pairs() const { return pairs_; }
    std::optional<std::size_t> index_of(PairId id) const;
    // Smallest id strictly greater than every id in the pool.
    PairId fresh_id() const;

    // Fills every feature from `backbone` and remembers its checksum.
    void compute_features(const Backbone& backbone);
    void clear_features();
    bool has_features() const { return bound_.has_value(); }
    std::uint64_t bound_backbone() const;
    const Array& feature(std::size_t i) const;

    // Hash of ids, images and labels; ignores cached features.
    std::uint64_t fingerprint() const;

    // Pairs whose ids are (or are not) in `ids`, order preserved.
    SupportPool select(const std::set<PairId>& ids, bool keep) const;

private:
    std::vector<PromptPair> pairs_;
    std::optional<std::uint64_t> bound_;
};

// Pair i gets id spec.offset + i, so pools drawn from one stream never collide.
SupportPool ingest_synthetic(const TaskSpec& spec);
// Reads `images/<name>.png` with matching `labels/<name>.png`, resized to
// extent x extent. Names are sorted; numeric names become ids, otherwise ids
// follow the sorted order.
SupportPool ingest_directory(const std::string& root, std::size_t extent);
// JSON manifest: ids, optional file paths, pool fingerprint.
std::string pool_manifest(const SupportPool& pool, const std::string& root = "");

struct Retrieved {
    std::size_t index = 0;
    PairId id = 0;
    double score = 0.0;
};

// Top-K by cosine similarity, descending, ties by ascending id. Pairs whose ids
// are in `exclude` are skipped.
std::vector<Retrieved> retrieve_topk(const Array& query_feature, const SupportPool& pool, std::size_t k,
                                     const std::set<PairId>& exclude = {});

} // namespace vicl
