// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "vicl/adapters.hpp"
#include "vicl/backbone.hpp"
#include "vicl/checkpoint.hpp"
#include "vicl/codebook.hpp"
#include "vicl/fusion.hpp"
#include "vicl/stages.hpp"

namespace vicl {

// Typed checkpoints of the pipeline components. Loaders check the stored
// configuration against the expected one and raise PrerequisiteError when
// the file is missing or was written under different settings.

struct PretrainedBundle {
    Backbone backbone;
    Codebook codebook;
};

Checkpoint backbone_checkpoint(const Backbone& backbone, const Codebook& codebook);
PretrainedBundle load_backbone(const std::string& path, const BackboneConfig& expected);

Checkpoint fusion_checkpoint(const FusionModule& f);
FusionModule load_fusion(const std::string& path, std::size_t embed_dim, const FusionConfig& expected);

Checkpoint adapter_checkpoint(const Adapter& adapter);
Adapter load_adapter(const std::string& path, int arrangement_id, std::size_t embed_dim, const AdapterConfig& expected);

// Backbone, optional fusion module and adapter, and the arrangement.
Checkpoint model_checkpoint(const FinetuneModel& model);
FinetuneModel load_model(const std::string& path, const BackboneConfig& expected);

// Throws PrerequisiteError naming `path` and the stage that produces it.
void require_file(const std::string& path, const std::string& producer);

} // namespace vicl
