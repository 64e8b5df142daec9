// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/raster.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "oed/errors.hpp"

namespace oed {

std::size_t Mask::count() const {
    std::size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
}

Box Mask::bounds() const {
    std::size_t x0 = width, y0 = height, x1 = 0, y1 = 0;
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            if (get(x, y)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x + 1);
                y1 = std::max(y1, y + 1);
            }
    if (x1 == 0) return {};
    return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1), static_cast<double>(y1)};
}

std::size_t Mask::components() const {
    std::vector<std::uint8_t> seen(data.size(), 0);
    std::vector<std::size_t> stack;
    std::size_t n = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!data[i] || seen[i]) continue;
        ++n;
        stack.push_back(i);
        seen[i] = 1;
        while (!stack.empty()) {
            const auto p = stack.back();
            stack.pop_back();
            const auto x = p % width, y = p / width;
            auto visit = [&](std::size_t q) {
                if (data[q] && !seen[q]) {
                    seen[q] = 1;
                    stack.push_back(q);
                }
            };
            if (x > 0) visit(p - 1);
            if (x + 1 < width) visit(p + 1);
            if (y > 0) visit(p - width);
            if (y + 1 < height) visit(p + width);
        }
    }
    return n;
}

std::size_t overlap_count(const Mask& a, const Mask& b) {
    require(a.width == b.width && a.height == b.height, "overlap_count: mask size mismatch");
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) n += (a.data[i] && b.data[i]);
    return n;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_warn(png_structp, png_const_charp) {}

void write_rows(const std::filesystem::path& path, std::size_t w, std::size_t h, int color_type, int channels,
                const std::uint8_t* rows) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
    if (!png) throw IoError("png: cannot create write struct");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};
    // libpng reports errors by longjmp; no C++ object may be created below
    // this point in this frame.
    if (setjmp(png_jmpbuf(png))) throw IoError("png: encode failed for " + path.string());
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(rows + y * w * static_cast<std::size_t>(channels)));
    png_write_end(png, nullptr);
}

struct Decoded {
    std::size_t width = 0, height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

Decoded read_any(const std::filesystem::path& path, bool want_gray) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
    if (!png) throw IoError("png: cannot create read struct");
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p;
        png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};
    Decoded d;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) throw IoError("png: decode failed for " + path.string());
    png_init_io(png, f.get());
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (want_gray) {
        if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA) return d;
    } else if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);
    d.width = png_get_image_width(png, info);
    d.height = png_get_image_height(png, info);
    d.channels = png_get_channels(png, info);
    d.pixels.resize(d.width * d.height * static_cast<std::size_t>(d.channels));
    rows.resize(d.height);
    for (std::size_t y = 0; y < d.height; ++y) rows[y] = d.pixels.data() + y * d.width * static_cast<std::size_t>(d.channels);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    return d;
}

}  // namespace

void write_png(const RgbImage& image, const std::filesystem::path& path) {
    require(image.pixels.size() == image.width * image.height * 3 && image.width > 0 && image.height > 0,
            "write_png: malformed image");
    write_rows(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 3, image.pixels.data());
}

void write_png(const Mask& mask, const std::filesystem::path& path) {
    require(mask.data.size() == mask.width * mask.height && mask.width > 0 && mask.height > 0,
            "write_png: malformed mask");
    std::vector<std::uint8_t> gray(mask.data.size());
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.data[i] ? 255 : 0;
    write_rows(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 1, gray.data());
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
    auto d = read_any(path, false);
    if (d.channels != 3) throw IoError("png: unexpected channel count in " + path.string());
    RgbImage img;
    img.width = d.width;
    img.height = d.height;
    img.pixels = std::move(d.pixels);
    return img;
}

Mask read_png_mask(const std::filesystem::path& path) {
    auto d = read_any(path, true);
    if (d.channels != 1) throw IoError("png: unexpected channel count in " + path.string());
    Mask m(d.width, d.height);
    for (std::size_t i = 0; i < d.pixels.size(); ++i) {
        if (d.pixels[i] != 0 && d.pixels[i] != 255)
            throw IoError("png: mask " + path.string() + " is not binary (0/255)");
        m.data[i] = d.pixels[i] ? 1 : 0;
    }
    return m;
}

}  // namespace oed
