// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vicl/error.hpp"

namespace vicl {

// H x W x 3 raster, interleaved channels, values in [0, 1].
class Image {
public:
    Image() = default;
    Image(std::size_t height, std::size_t width, double fill = 0.0);
    Image(std::size_t height, std::size_t width, std::vector<double> data);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    static constexpr std::size_t channels() { return 3; }
    std::size_t size() const { return data_.size(); }

    double& at(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * width_ + x) * 3 + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return data_[(y * width_ + x) * 3 + c]; }
    // Mean over the three channels.
    double intensity(std::size_t y, std::size_t x) const;

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_extent(const Image& other) const { return height_ == other.height_ && width_ == other.width_; }
    bool in_unit_range() const;
    void clamp01();

    Image crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const;
    void paste(const Image& src, std::size_t y0, std::size_t x0);

    bool operator==(const Image& other) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

// One quadrant of a canvas.
using Panel = Image;

enum class Role : std::uint8_t { SupportImage, SupportLabel, QueryImage, Mask };
enum class Quadrant : std::uint8_t { TopLeft, TopRight, BottomLeft, BottomRight };

const char* role_name(Role r);
const char* quadrant_name(Quadrant q);
constexpr std::array<Quadrant, 4> kQuadrants{Quadrant::TopLeft, Quadrant::TopRight, Quadrant::BottomLeft,
                                             Quadrant::BottomRight};
constexpr std::array<Role, 4> kRoles{Role::SupportImage, Role::SupportLabel, Role::QueryImage, Role::Mask};

// Assignment of the four roles to the four quadrants.
struct Arrangement {
    int id = 1; // 1..8
    std::array<Role, 4> role_of_quadrant{}; // indexed by Quadrant

    Role role_at(Quadrant q) const { return role_of_quadrant[static_cast<std::size_t>(q)]; }
    Quadrant quadrant_of(Role r) const;
    std::string name() const { return "a" + std::to_string(id); }
    // Bijection, single MASK, adjacency and matching image->label direction.
    bool valid() const;

    bool operator==(const Arrangement& other) const = default;
};

// a1 = [[S_img, S_lab], [Q_img, MASK]]; a2 column swap; a3 row swap; a4 both;
// a5..a8 are the transposes of a1..a4.
const std::vector<Arrangement>& arrangement_catalog();
const Arrangement& arrangement(int id);

inline constexpr double kDefaultMaskFill = 0.5;

struct Canvas {
    Image pixels; // 2*panel extents
    Arrangement arrangement;
    double mask_fill = kDefaultMaskFill;

    std::size_t panel_height() const { return pixels.height() / 2; }
    std::size_t panel_width() const { return pixels.width() / 2; }
};

// Top-left pixel of a quadrant for panels of the given extent.
std::pair<std::size_t, std::size_t> quadrant_origin(Quadrant q, std::size_t panel_h, std::size_t panel_w);

Canvas compose(const Panel& support_image, const Panel& support_label, const Panel& query,
               const Arrangement& arr, double mask_fill = kDefaultMaskFill);
Panel extract(const Canvas& canvas, Role role);
// Overwrites the quadrant holding `role`.
void place(Canvas& canvas, Role role, const Panel& panel);

} // namespace vicl
