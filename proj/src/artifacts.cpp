// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/artifacts.hpp"

#include <filesystem>

namespace vicl {

using nlohmann::ordered_json;

namespace {

ordered_json backbone_json(const BackboneConfig& c) {
    return {{"canvas", c.canvas}, {"patch", c.patch},     {"embed_dim", c.embed_dim}, {"blocks", c.blocks},
            {"heads", c.heads},   {"ffn_mult", c.ffn_mult}, {"vocab", c.vocab}};
}

ordered_json fusion_json(std::size_t d, const FusionConfig& c) {
    return {{"embed_dim", d},
            {"depth", c.depth},
            {"heads", c.heads},
            {"expansion", c.expansion},
            {"mode", c.mode == FusionMode::Mean ? "mean" : "attention"},
            {"reuse", c.reuse}};
}

ordered_json adapter_json(int id, std::size_t d, const AdapterConfig& c) {
    return {{"arrangement", id},
            {"embed_dim", d},
            {"hidden", c.hidden},
            {"residual", c.residual},
            {"single_layer", c.single_layer}};
}

void expect_kind(const Checkpoint& ckpt, const std::string& path, const std::string& kind) {
    if (!ckpt.header.contains("kind") || ckpt.header["kind"] != kind) {
        throw PrerequisiteError(path + ": expected a " + kind + " checkpoint");
    }
}

void expect_section(const Checkpoint& ckpt, const std::string& path, const std::string& section,
                    const ordered_json& expected) {
    if (!ckpt.header.contains(section) || ckpt.header[section] != expected) {
        throw PrerequisiteError(path + ": stored " + section + " settings " +
                                (ckpt.header.contains(section) ? ckpt.header[section].dump() : std::string("(none)")) +
                                " differ from the configured " + expected.dump() + "; rerun the producing stage");
    }
}

BackboneConfig backbone_from_json(const ordered_json& j) {
    BackboneConfig c;
    c.canvas = j.at("canvas");
    c.patch = j.at("patch");
    c.embed_dim = j.at("embed_dim");
    c.blocks = j.at("blocks");
    c.heads = j.at("heads");
    c.ffn_mult = j.at("ffn_mult");
    c.vocab = j.at("vocab");
    return c;
}

FusionConfig fusion_from_json(const ordered_json& j) {
    FusionConfig c;
    c.depth = j.at("depth");
    c.heads = j.at("heads");
    c.expansion = j.at("expansion");
    c.mode = j.at("mode") == "mean" ? FusionMode::Mean : FusionMode::Attention;
    c.reuse = j.at("reuse");
    return c;
}

AdapterConfig adapter_from_json(const ordered_json& j) {
    AdapterConfig c;
    c.hidden = j.at("hidden");
    c.residual = j.at("residual");
    c.single_layer = j.at("single_layer");
    return c;
}

Checkpoint open(const std::string& path, const std::string& producer) {
    require_file(path, producer);
    return load_checkpoint(path);
}

} // namespace

void require_file(const std::string& path, const std::string& producer) {
    if (!std::filesystem::exists(path)) {
        throw PrerequisiteError("missing prerequisite " + path + " (produced by `" + producer + "`)");
    }
}

Checkpoint backbone_checkpoint(const Backbone& backbone, const Codebook& codebook) {
    Checkpoint c;
    c.header["kind"] = "backbone";
    c.header["backbone"] = backbone_json(backbone.config());
    c.header["codebook_patch"] = codebook.patch();
    c.add_params("phi.", backbone.params());
    c.add("codebook.entries", codebook.entries());
    return c;
}

PretrainedBundle load_backbone(const std::string& path, const BackboneConfig& expected) {
    Checkpoint c = open(path, "pretrain");
    expect_kind(c, path, "backbone");
    expect_section(c, path, "backbone", backbone_json(expected));
    Rng scratch(0);
    Backbone phi(expected, scratch);
    c.load_params("phi.", phi.params());
    Codebook cb(c.header.at("codebook_patch").get<std::size_t>(), c.get("codebook.entries"));
    return {std::move(phi), std::move(cb)};
}

Checkpoint fusion_checkpoint(const FusionModule& f) {
    Checkpoint c;
    c.header["kind"] = "fusion";
    c.header["fusion"] = fusion_json(f.embed_dim(), f.config());
    c.add_params("fusion.", f.params());
    return c;
}

FusionModule load_fusion(const std::string& path, std::size_t embed_dim, const FusionConfig& expected) {
    Checkpoint c = open(path, "stage1");
    expect_kind(c, path, "fusion");
    expect_section(c, path, "fusion", fusion_json(embed_dim, expected));
    Rng scratch(0);
    FusionModule f(embed_dim, expected, scratch);
    c.load_params("fusion.", f.params());
    return f;
}

Checkpoint adapter_checkpoint(const Adapter& adapter) {
    Checkpoint c;
    c.header["kind"] = "adapter";
    c.header["adapter"] = adapter_json(adapter.arrangement_id(), adapter.embed_dim(), adapter.config());
    c.add_params("adapter.", adapter.params());
    return c;
}

Adapter load_adapter(const std::string& path, int arrangement_id, std::size_t embed_dim,
                     const AdapterConfig& expected) {
    Checkpoint c = open(path, "stage2");
    expect_kind(c, path, "adapter");
    expect_section(c, path, "adapter", adapter_json(arrangement_id, embed_dim, expected));
    Rng scratch(0);
    Adapter a(arrangement_id, embed_dim, expected, scratch);
    c.load_params("adapter.", a.params());
    return a;
}

Checkpoint model_checkpoint(const FinetuneModel& model) {
    Checkpoint c;
    c.header["kind"] = "model";
    c.header["arrangement"] = model.arrangement_id;
    c.header["backbone"] = backbone_json(model.backbone.config());
    c.add_params("phi.", model.backbone.params());
    if (model.fusion) {
        c.header["fusion"] = fusion_json(model.fusion->embed_dim(), model.fusion->config());
        c.add_params("fusion.", model.fusion->params());
    }
    if (model.adapter) {
        c.header["adapter"] = adapter_json(model.adapter->arrangement_id(), model.adapter->embed_dim(),
                                           model.adapter->config());
        c.add_params("adapter.", model.adapter->params());
    }
    return c;
}

FinetuneModel load_model(const std::string& path, const BackboneConfig& expected) {
    Checkpoint c = open(path, "stage3");
    expect_kind(c, path, "model");
    expect_section(c, path, "backbone", backbone_json(expected));
    Rng scratch(0);
    FinetuneModel m{c.header.at("arrangement").get<int>(), Backbone(backbone_from_json(c.header["backbone"]), scratch),
                    std::nullopt, std::nullopt};
    c.load_params("phi.", m.backbone.params());
    if (c.header.contains("fusion")) {
        const auto& j = c.header["fusion"];
        m.fusion.emplace(j.at("embed_dim").get<std::size_t>(), fusion_from_json(j), scratch);
        c.load_params("fusion.", m.fusion->params());
    }
    if (c.header.contains("adapter")) {
        const auto& j = c.header["adapter"];
        m.adapter.emplace(j.at("arrangement").get<int>(), j.at("embed_dim").get<std::size_t>(), adapter_from_json(j),
                          scratch);
        c.load_params("adapter.", m.adapter->params());
    }
    return m;
}

} // namespace vicl
