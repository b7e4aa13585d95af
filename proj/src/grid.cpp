// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/grid.hpp"

#include <algorithm>

namespace vicl {

Image::Image(std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), data_(height * width * 3, fill) {
    if (height == 0 || width == 0) throw ShapeError("image extents must be positive");
}

Image::Image(std::size_t height, std::size_t width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
    if (height == 0 || width == 0) throw ShapeError("image extents must be positive");
    if (data_.size() != height * width * 3) throw ShapeError("image data length does not match extents");
}

double Image::intensity(std::size_t y, std::size_t x) const {
    const double* p = &data_[(y * width_ + x) * 3];
    return (p[0] + p[1] + p[2]) / 3.0;
}

bool Image::in_unit_range() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

void Image::clamp01() {
    for (auto& v : data_) v = std::clamp(v, 0.0, 1.0);
}

Image Image::crop(std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) const {
    if (y0 + h > height_ || x0 + w > width_) throw ShapeError("crop outside image");
    Image out(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        const double* src = &data_[((y0 + y) * width_ + x0) * 3];
        std::copy(src, src + w * 3, &out.data_[y * w * 3]);
    }
    return out;
}

void Image::paste(const Image& src, std::size_t y0, std::size_t x0) {
    if (y0 + src.height_ > height_ || x0 + src.width_ > width_) throw ShapeError("paste outside image");
    for (std::size_t y = 0; y < src.height_; ++y) {
        const double* s = &src.data_[y * src.width_ * 3];
        std::copy(s, s + src.width_ * 3, &data_[((y0 + y) * width_ + x0) * 3]);
    }
}

const char* role_name(Role r) {
    switch (r) {
    case Role::SupportImage: return "support_image";
    case Role::SupportLabel: return "support_label";
    case Role::QueryImage: return "query_image";
    case Role::Mask: return "mask";
    }
    return "?";
}

const char* quadrant_name(Quadrant q) {
    switch (q) {
    case Quadrant::TopLeft: return "TL";
    case Quadrant::TopRight: return "TR";
    case Quadrant::BottomLeft: return "BL";
    case Quadrant::BottomRight: return "BR";
    }
    return "?";
}

Quadrant Arrangement::quadrant_of(Role r) const {
    for (auto q : kQuadrants) {
        if (role_at(q) == r) return q;
    }
    throw Error(std::string("role ") + role_name(r) + " absent from arrangement " + name());
}

namespace {

int row_of(Quadrant q) { return (q == Quadrant::BottomLeft || q == Quadrant::BottomRight) ? 1 : 0; }
int col_of(Quadrant q) { return (q == Quadrant::TopRight || q == Quadrant::BottomRight) ? 1 : 0; }

Quadrant at(int row, int col) { return static_cast<Quadrant>(row * 2 + col); }

Arrangement from_grid(int id, Role tl, Role tr, Role bl, Role br) {
    return Arrangement{id, {tl, tr, bl, br}};
}

} // namespace

bool Arrangement::valid() const {
    std::array<int, 4> seen{};
    for (auto r : role_of_quadrant) ++seen[static_cast<std::size_t>(r)];
    for (int s : seen) {
        if (s != 1) return false;
    }
    auto si = quadrant_of(Role::SupportImage), sl = quadrant_of(Role::SupportLabel);
    auto qi = quadrant_of(Role::QueryImage), mk = quadrant_of(Role::Mask);
    const int dr1 = row_of(sl) - row_of(si), dc1 = col_of(sl) - col_of(si);
    const int dr2 = row_of(mk) - row_of(qi), dc2 = col_of(mk) - col_of(qi);
    const bool adjacent = (std::abs(dr1) + std::abs(dc1)) == 1;
    return adjacent && dr1 == dr2 && dc1 == dc2;
}

const std::vector<Arrangement>& arrangement_catalog() {
    static const std::vector<Arrangement> catalog = [] {
        using R = Role;
        const std::array<std::array<R, 2>, 2> base{{{R::SupportImage, R::SupportLabel}, {R::QueryImage, R::Mask}}};
        std::vector<Arrangement> out;
        int id = 1;
        for (int transpose = 0; transpose < 2; ++transpose) {
            for (int variant = 0; variant < 4; ++variant) {
                const bool col_swap = variant & 1;
                const bool row_swap = variant & 2;
                std::array<R, 4> roles{};
                for (int r = 0; r < 2; ++r) {
                    for (int c = 0; c < 2; ++c) {
                        int sr = row_swap ? 1 - r : r;
                        int sc = col_swap ? 1 - c : c;
                        R role = base[sr][sc];
                        int dr = transpose ? c : r;
                        int dc = transpose ? r : c;
                        roles[static_cast<std::size_t>(at(dr, dc))] = role;
                    }
                }
                out.push_back(from_grid(id++, roles[0], roles[1], roles[2], roles[3]));
            }
        }
        return out;
    }();
    return catalog;
}

const Arrangement& arrangement(int id) {
    const auto& cat = arrangement_catalog();
    if (id < 1 || id > static_cast<int>(cat.size())) throw Error("unknown arrangement a" + std::to_string(id));
    return cat[static_cast<std::size_t>(id - 1)];
}

std::pair<std::size_t, std::size_t> quadrant_origin(Quadrant q, std::size_t panel_h, std::size_t panel_w) {
    return {static_cast<std::size_t>(row_of(q)) * panel_h, static_cast<std::size_t>(col_of(q)) * panel_w};
}

Canvas compose(const Panel& support_image, const Panel& support_label, const Panel& query, const Arrangement& arr,
               double mask_fill) {
    if (!support_image.same_extent(support_label) || !support_image.same_extent(query)) {
        throw ShapeError("compose: panels must share extents");
    }
    const std::size_t ph = query.height(), pw = query.width();
    Canvas canvas{Image(ph * 2, pw * 2, mask_fill), arr, mask_fill};
    place(canvas, Role::SupportImage, support_image);
    place(canvas, Role::SupportLabel, support_label);
    place(canvas, Role::QueryImage, query);
    return canvas;
}

Panel extract(const Canvas& canvas, Role role) {
    auto [y0, x0] = quadrant_origin(canvas.arrangement.quadrant_of(role), canvas.panel_height(), canvas.panel_width());
    return canvas.pixels.crop(y0, x0, canvas.panel_height(), canvas.panel_width());
}

void place(Canvas& canvas, Role role, const Panel& panel) {
    if (panel.height() != canvas.panel_height() || panel.width() != canvas.panel_width()) {
        throw ShapeError("place: panel extent does not match canvas quadrant");
    }
    auto [y0, x0] = quadrant_origin(canvas.arrangement.quadrant_of(role), canvas.panel_height(), canvas.panel_width());
    canvas.pixels.paste(panel, y0, x0);
}

} // namespace vicl
