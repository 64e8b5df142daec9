// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "oed/boxes.hpp"

namespace oed {

/// 8-bit RGB raster, interleaved, row-major.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}

    std::uint8_t* at(std::size_t x, std::size_t y) { return pixels.data() + (y * width + x) * 3; }
    const std::uint8_t* at(std::size_t x, std::size_t y) const { return pixels.data() + (y * width + x) * 3; }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Binary raster; values are 0 or 1 in memory, 0/255 on disk.
struct Mask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(std::size_t w, std::size_t h) : width(w), height(h), data(w * h, 0) {}

    bool get(std::size_t x, std::size_t y) const { return data[y * width + x] != 0; }
    void set(std::size_t x, std::size_t y, bool v = true) { data[y * width + x] = v ? 1 : 0; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }
    /// Tight pixel-edge bounds [x_min, x_max + 1) etc.; zero box when empty.
    Box bounds() const;
    /// Number of 4-connected components.
    std::size_t components() const;

    friend bool operator==(const Mask&, const Mask&) = default;
};

/// |a & b| over a mask; sizes must agree.
std::size_t overlap_count(const Mask& a, const Mask& b);

void write_png(const RgbImage& image, const std::filesystem::path& path);
void write_png(const Mask& mask, const std::filesystem::path& path);
RgbImage read_png_rgb(const std::filesystem::path& path);
/// Reads a single-channel 0/255 PNG; any other gray value is an error.
Mask read_png_mask(const std::filesystem::path& path);

}  // namespace oed
