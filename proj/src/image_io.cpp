// Copyright 2026 The vicl Authors
// SPDX-License-Identifier: Apache-2.0

#include "vicl/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include <png.h>

namespace vicl {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

void write_png(const std::string& path, const Image& image) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    std::vector<png_byte> buf(image.height() * image.width() * 3);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        buf[i] = static_cast<png_byte>(std::lround(std::clamp(image.data()[i], 0.0, 1.0) * 255.0));
    }
    std::vector<png_bytep> rows(image.height());
    for (std::size_t y = 0; y < image.height(); ++y) rows[y] = &buf[y * image.width() * 3];
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing png: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open for reading: " + path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw IoError("not a PNG file: " + path);
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    std::vector<png_byte> buf;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("failed reading png: " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<std::size_t>(w) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG layout: " + path);
    }
    buf.resize(rowbytes * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = &buf[y * rowbytes];
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image out(h, w);
    for (std::size_t i = 0; i < buf.size(); ++i) out.data()[i] = buf[i] / 255.0;
    return out;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
    if (image.height() == height && image.width() == width) return image;
    Image out(height, width);
    const double sy = static_cast<double>(image.height()) / static_cast<double>(height);
    const double sx = static_cast<double>(image.width()) / static_cast<double>(width);
    for (std::size_t y = 0; y < height; ++y) {
        double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height() - 1));
        std::size_t y0 = static_cast<std::size_t>(fy);
        std::size_t y1 = std::min(y0 + 1, image.height() - 1);
        double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width() - 1));
            std::size_t x0 = static_cast<std::size_t>(fx);
            std::size_t x1 = std::min(x0 + 1, image.width() - 1);
            double wx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                double top = image.at(y0, x0, c) * (1 - wx) + image.at(y0, x1, c) * wx;
                double bot = image.at(y1, x0, c) * (1 - wx) + image.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1 - wy) + bot * wy;
            }
        }
    }
    out.clamp01();
    return out;
}

Image hstack(const std::vector<Image>& images) {
    if (images.empty()) throw ShapeError("hstack: no images");
    const std::size_t h = images[0].height();
    std::size_t w = 0;
    for (const auto& im : images) {
        if (im.height() != h) throw ShapeError("hstack: heights differ");
        w += im.width();
    }
    w += images.size() - 1;
    Image out(h, w, 1.0);
    std::size_t x = 0;
    for (const auto& im : images) {
        out.paste(im, 0, x);
        x += im.width() + 1;
    }
    return out;
}

Image vstack(const std::vector<Image>& images) {
    if (images.empty()) throw ShapeError("vstack: no images");
    const std::size_t w = images[0].width();
    std::size_t h = 0;
    for (const auto& im : images) {
        if (im.width() != w) throw ShapeError("vstack: widths differ");
        h += im.height();
    }
    h += images.size() - 1;
    Image out(h, w, 1.0);
    std::size_t y = 0;
    for (const auto& im : images) {
        out.paste(im, y, 0);
        y += im.height() + 1;
    }
    return out;
}

} // namespace vicl
