// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vicl/array.hpp"
#include "vicl/optim.hpp"

namespace vicl {

// Versioned binary container: magic, version, JSON header, then named arrays
// (name, shape, raw little-endian doubles) in insertion order.
struct Checkpoint {
    nlohmann::ordered_json header = nlohmann::ordered_json::object();
    std::vector<std::pair<std::string, Array>> arrays;

    void add(const std::string& name, const Array& a);
    void add_params(const std::string& prefix, const ParamList& params);
    const Array& get(const std::string& name) const;
    bool has(const std::string& name) const;
    // Copies "<prefix><name>" arrays into `params`; shapes must match.
    void load_params(const std::string& prefix, ParamList& params) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

} // namespace vicl
