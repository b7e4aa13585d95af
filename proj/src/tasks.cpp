// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "vicl/rng.hpp"

namespace vicl {

const char* task_name(TaskKind k) {
    switch (k) {
    case TaskKind::Segmentation: return "segmentation";
    case TaskKind::Detection: return "detection";
    case TaskKind::Colorization: return "colorization";
    }
    return "?";
}

TaskKind parse_task(const std::string& s) {
    if (s == "segmentation") return TaskKind::Segmentation;
    if (s == "detection") return TaskKind::Detection;
    if (s == "colorization") return TaskKind::Colorization;
    throw ConfigError("unknown task kind '" + s + "' (expected segmentation|detection|colorization)");
}

std::vector<int> fold_classes(int fold) {
    if (fold < 0 || fold >= kNumFolds) throw ConfigError("fold must be in [0, 3], got " + std::to_string(fold));
    return {3 * fold, 3 * fold + 1, 3 * fold + 2};
}

int fold_of_class(int cls) { return cls / 3; }

namespace {

std::array<double, 3> hsv(double h, double s, double v) {
    h = h - std::floor(h);
    const double hh = h * 6.0;
    const int i = static_cast<int>(hh) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
    }
}

std::array<double, 3> class_colour(int cls) { return hsv(static_cast<double>(cls) / kNumClasses, 0.85, 0.95); }
double scene_hue(int cls) { return static_cast<double>((cls * 5) % kNumClasses) / kNumClasses; }

struct Shape2D {
    int geometry; // 0 circle, 1 rectangle, 2 triangle
    double cx, cy, rx, ry;

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        switch (geometry) {
        case 0: return (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) <= 1.0;
        case 1: return std::abs(dx) <= rx && std::abs(dy) <= ry;
        default: {
            // Apex up, base at cy + ry.
            if (dy < -ry || dy > ry) return false;
            const double half = rx * (dy + ry) / (2.0 * ry);
            return std::abs(dx) <= half;
        }
        }
    }
};

Shape2D random_shape(int cls, std::size_t extent, Rng& rng) {
    const double e = static_cast<double>(extent);
    const double r = e * rng.uniform(0.16, 0.26);
    const double aspect = rng.uniform(0.75, 1.25);
    double rx = r * aspect, ry = r / aspect;
    if (cls % 3 == 0) rx = ry = r; // circles stay round
    const double cx = rng.uniform(rx + 0.5, e - rx - 0.5);
    const double cy = rng.uniform(ry + 0.5, e - ry - 0.5);
    return {cls % 3, cx, cy, rx, ry};
}

bool boxes_overlap(const Shape2D& a, const Shape2D& b) {
    return std::abs(a.cx - b.cx) < a.rx + b.rx + 1.0 && std::abs(a.cy - b.cy) < a.ry + b.ry + 1.0;
}

struct Scene {
    Image colour;
    std::vector<std::uint8_t> target;
};

Scene render_scene(int target_cls, int distractor_cls, double bg_hue, std::size_t extent, Rng& rng) {
    Shape2D target = random_shape(target_cls, extent, rng);
    Shape2D distractor = random_shape(distractor_cls, extent, rng);
    for (int attempt = 0; attempt < 64 && boxes_overlap(target, distractor); ++attempt) {
        distractor = random_shape(distractor_cls, extent, rng);
    }
    const auto bg = hsv(bg_hue, rng.uniform(0.35, 0.55), rng.uniform(0.4, 0.6));
    const double fx = rng.uniform(0.5, 3.0), fy = rng.uniform(0.5, 3.0), phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const auto tc = class_colour(target_cls);
    const auto dc = class_colour(distractor_cls);
    Scene s{Image(extent, extent), std::vector<std::uint8_t>(extent * extent, 0)};
    const double e = static_cast<double>(extent);
    for (std::size_t y = 0; y < extent; ++y) {
        for (std::size_t x = 0; x < extent; ++x) {
            const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
            std::array<double, 3> c;
            if (target.contains(px, py)) {
                c = tc;
                s.target[y * extent + x] = 1;
            } else if (distractor.contains(px, py)) {
                c = dc;
            } else {
                const double wave = 0.06 * std::sin(2.0 * std::numbers::pi * (fx * px + fy * py) / e + phase);
                c = {bg[0] + wave, bg[1] + wave, bg[2] + wave};
            }
            const double noise = rng.normal(0.0, 0.02);
            for (std::size_t ch = 0; ch < 3; ++ch) s.colour.at(y, x, ch) = std::clamp(c[ch] + noise, 0.0, 1.0);
        }
    }
    return s;
}

Image mask_panel(const std::vector<std::uint8_t>& mask, std::size_t extent) {
    Image out(extent, extent, 0.0);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            for (std::size_t ch = 0; ch < 3; ++ch) out.data()[i * 3 + ch] = 1.0;
        }
    }
    return out;
}

std::vector<std::uint8_t> bounding_box(const std::vector<std::uint8_t>& mask, std::size_t extent) {
    std::size_t y0 = extent, y1 = 0, x0 = extent, x1 = 0;
    for (std::size_t y = 0; y < extent; ++y) {
        for (std::size_t x = 0; x < extent; ++x) {
            if (!mask[y * extent + x]) continue;
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
        }
    }
    std::vector<std::uint8_t> box(extent * extent, 0);
    if (y0 > y1) return box;
    for (std::size_t y = y0; y <= y1; ++y) {
        for (std::size_t x = x0; x <= x1; ++x) box[y * extent + x] = 1;
    }
    return box;
}

Image grayscale(const Image& im) {
    Image out = im;
    for (std::size_t y = 0; y < im.height(); ++y) {
        for (std::size_t x = 0; x < im.width(); ++x) {
            const double l = 0.299 * im.at(y, x, 0) + 0.587 * im.at(y, x, 1) + 0.114 * im.at(y, x, 2);
            for (std::size_t ch = 0; ch < 3; ++ch) out.at(y, x, ch) = std::clamp(l, 0.0, 1.0);
        }
    }
    return out;
}

std::uint64_t example_seed(const TaskSpec& spec, std::size_t index) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix(spec.seed);
    mix(static_cast<std::uint64_t>(spec.kind));
    mix(spec.extent);
    mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(spec.fold)));
    mix(spec.context_coupled ? 1 : 0);
    mix(spec.offset + index);
    return h;
}

struct Drawn {
    Scene scene;
    int target_class;
    int fold;
};

Drawn draw_example(const TaskSpec& spec, std::size_t index) {
    Rng rng(example_seed(spec, index));
    const int fold = spec.fold >= 0 ? spec.fold : static_cast<int>((spec.offset + index) % kNumFolds);
    const auto classes = fold_classes(fold);
    const int target = classes[rng.index(classes.size())];
    int distractor = static_cast<int>(rng.index(kNumClasses - 1));
    if (distractor >= target) ++distractor;
    const double hue = spec.context_coupled ? scene_hue(target) + rng.uniform(-0.02, 0.02) : rng.uniform();
    return {render_scene(target, distractor, hue, spec.extent, rng), target, fold};
}

Sample to_sample(TaskKind kind, Drawn d, std::size_t extent) {
    switch (kind) {
    case TaskKind::Segmentation:
        return {std::move(d.scene.colour), mask_panel(d.scene.target, extent), d.target_class, d.fold};
    case TaskKind::Detection:
        return {std::move(d.scene.colour), mask_panel(bounding_box(d.scene.target, extent), extent), d.target_class,
                d.fold};
    case TaskKind::Colorization: {
        Image gray = grayscale(d.scene.colour);
        return {std::move(gray), std::move(d.scene.colour), d.target_class, d.fold};
    }
    }
    throw Error("unreachable task kind");
}

} // namespace

std::vector<Sample> generate(const TaskSpec& spec) {
    if (spec.count < 1) throw ConfigError("generate: count must be >= 1");
    if (spec.extent < 8) throw ConfigError("generate: extent must be >= 8");
    if (spec.fold >= kNumFolds || spec.fold < -1) throw ConfigError("generate: fold must be -1 or in [0, 3]");
    std::vector<Sample> out;
    out.reserve(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) out.push_back(to_sample(spec.kind, draw_example(spec, i), spec.extent));
    return out;
}

std::vector<std::uint8_t> target_mask(const TaskSpec& spec, std::size_t index) {
    return draw_example(spec, index).scene.target;
}

std::vector<PretrainTriple> generate_pretrain(TaskKind kind, std::uint64_t seed, std::size_t count, std::size_t extent) {
    std::vector<PretrainTriple> out;
    out.reserve(count);
    Rng rng(seed ^ 0x5eed5eed5eedULL);
    for (std::size_t i = 0; i < count; ++i) {
        const int target = static_cast<int>(rng.index(kNumClasses));
        std::array<Sample, 2> pair;
        for (auto& s : pair) {
            int distractor = static_cast<int>(rng.index(kNumClasses - 1));
            if (distractor >= target) ++distractor;
            Drawn d{render_scene(target, distractor, rng.uniform(), extent, rng), target, fold_of_class(target)};
            s = to_sample(kind, std::move(d), extent);
        }
        out.push_back({std::move(pair[0].image), std::move(pair[0].label), std::move(pair[1].image),
                       std::move(pair[1].label)});
    }
    return out;
}

} // namespace vicl
