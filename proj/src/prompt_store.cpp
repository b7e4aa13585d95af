// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/prompt_store.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "vicl/image_io.hpp"
#include "vicl/metrics.hpp"

namespace vicl {

namespace fs = std::filesystem;

SupportPool::SupportPool(std::vector<PromptPair> pairs) : pairs_(std::move(pairs)) {
    if (pairs_.empty()) throw Error("support pool must contain at least one pair");
    std::set<PairId> seen;
    for (const auto& p : pairs_) {
        if (!seen.insert(p.id).second) throw Error("duplicate pair id " + std::to_string(p.id));
        if (!p.image.same_extent(p.label)) throw ShapeError("pair " + std::to_string(p.id) + ": image/label extents differ");
        if (!p.image.same_extent(pairs_.front().image)) {
            throw ShapeError("pair " + std::to_string(p.id) + ": extent differs from the rest of the pool");
        }
    }
    if (std::any_of(pairs_.begin(), pairs_.end(), [](const PromptPair& p) { return p.feature.has_value(); })) {
        for (auto& p : pairs_) p.feature.reset();
    }
}

std::optional<std::size_t> SupportPool::index_of(PairId id) const {
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
        if (pairs_[i].id == id) return i;
    }
    return std::nullopt;
}

PairId SupportPool::fresh_id() const {
    PairId m = -1;
    for (const auto& p : pairs_) m = std::max(m, p.id);
    return m + 1;
}

void SupportPool::compute_features(const Backbone& backbone) {
    for (auto& p : pairs_) p.feature = backbone.pooled_feature(p.image);
    bound_ = backbone.params().checksum();
}

void SupportPool::clear_features() {
    for (auto& p : pairs_) p.feature.reset();
    bound_.reset();
}

std::uint64_t SupportPool::bound_backbone() const {
    if (!bound_) throw PrerequisiteError("support pool features have not been computed");
    return *bound_;
}

const Array& SupportPool::feature(std::size_t i) const {
    const auto& p = pairs_.at(i);
    if (!p.feature) throw PrerequisiteError("feature of pair " + std::to_string(p.id) + " not computed");
    return *p.feature;
}

std::uint64_t SupportPool::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : pairs_) {
        const auto* b = reinterpret_cast<const unsigned char*>(&p.id);
        for (std::size_t i = 0; i < sizeof p.id; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
        h = vicl::fingerprint(p.image, h);
        h = vicl::fingerprint(p.label, h);
    }
    return h;
}

SupportPool SupportPool::select(const std::set<PairId>& ids, bool keep) const {
    std::vector<PromptPair> out;
    for (const auto& p : pairs_) {
        if ((ids.count(p.id) > 0) == keep) out.push_back(p);
    }
    SupportPool pool(std::move(out));
    if (bound_) {
        for (std::size_t i = 0, j = 0; i < pairs_.size(); ++i) {
            if ((ids.count(pairs_[i].id) > 0) == keep) pool.pairs_[j++].feature = pairs_[i].feature;
        }
        pool.bound_ = bound_;
    }
    return pool;
}

SupportPool ingest_synthetic(const TaskSpec& spec) {
    auto samples = generate(spec);
    std::vector<PromptPair> pairs;
    pairs.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        pairs.push_back({static_cast<PairId>(spec.offset + i), std::move(samples[i].image), std::move(samples[i].label),
                         samples[i].target_class, std::nullopt});
    }
    return SupportPool(std::move(pairs));
}

namespace {

std::vector<std::string> sorted_png_stems(const fs::path& dir) {
    std::vector<std::string> stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") stems.push_back(entry.path().stem().string());
    }
    std::sort(stems.begin(), stems.end());
    return stems;
}

std::optional<PairId> numeric_id(const std::string& s) {
    if (s.empty() || s.size() > 18 || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        return std::nullopt;
    }
    return static_cast<PairId>(std::stoll(s));
}

Panel load_panel(const fs::path& path, std::size_t extent) {
    Image im = read_png(path.string());
    if (im.height() != extent || im.width() != extent) im = resize_bilinear(im, extent, extent);
    if (im.height() != extent || im.width() != extent) throw ShapeError(path.string() + ": extent mismatch after resize");
    return im;
}

} // namespace

SupportPool ingest_directory(const std::string& root, std::size_t extent) {
    const fs::path images = fs::path(root) / "images";
    const fs::path labels = fs::path(root) / "labels";
    if (!fs::is_directory(images)) throw IoError("missing directory " + images.string());
    if (!fs::is_directory(labels)) throw IoError("missing directory " + labels.string());
    const auto stems = sorted_png_stems(images);
    if (stems.empty()) throw IoError("no .png images under " + images.string());

    bool all_numeric = std::all_of(stems.begin(), stems.end(), [](const std::string& s) { return numeric_id(s).has_value(); });
    std::vector<PromptPair> pairs;
    for (std::size_t i = 0; i < stems.size(); ++i) {
        const fs::path lab = labels / (stems[i] + ".png");
        if (!fs::exists(lab)) throw IoError("missing label for image " + (images / (stems[i] + ".png")).string());
        PromptPair p;
        p.id = all_numeric ? *numeric_id(stems[i]) : static_cast<PairId>(i);
        p.image = load_panel(images / (stems[i] + ".png"), extent);
        p.label = load_panel(lab, extent);
        pairs.push_back(std::move(p));
    }
    return SupportPool(std::move(pairs));
}

std::string pool_manifest(const SupportPool& pool, const std::string& root) {
    nlohmann::ordered_json j;
    std::ostringstream fp;
    fp << std::hex << std::setw(16) << std::setfill('0') << pool.fingerprint();
    j["fingerprint"] = fp.str();
    j["size"] = pool.size();
    j["extent"] = pool[0].image.height();
    auto& entries = j["pairs"] = nlohmann::ordered_json::array();
    for (const auto& p : pool.pairs()) {
        nlohmann::ordered_json e;
        e["id"] = p.id;
        if (!root.empty()) {
            e["image"] = (fs::path(root) / "images" / (std::to_string(p.id) + ".png")).string();
            e["label"] = (fs::path(root) / "labels" / (std::to_string(p.id) + ".png")).string();
        }
        if (p.target_class >= 0) e["class"] = p.target_class;
        entries.push_back(std::move(e));
    }
    return j.dump(2);
}

std::vector<Retrieved> retrieve_topk(const Array& query_feature, const SupportPool& pool, std::size_t k,
                                     const std::set<PairId>& exclude) {
    std::vector<Retrieved> cands;
    cands.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (exclude.count(pool[i].id)) continue;
        cands.push_back({i, pool[i].id, cosine_similarity(query_feature.values(), pool.feature(i).values())});
    }
    if (k < 1 || k > cands.size()) {
        throw Error("retrieve_topk: K=" + std::to_string(k) + " outside [1, " + std::to_string(cands.size()) + "]");
    }
    auto better = [](const Retrieved& a, const Retrieved& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    };
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(k), cands.end(), better);
    cands.resize(k);
    return cands;
}

} // namespace vicl
