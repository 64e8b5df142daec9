// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

namespace oed {

/// Axis-aligned box (x_min, y_min, x_max, y_max).
struct Box {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
    bool well_ordered() const { return x_min <= x_max && y_min <= y_max; }
    std::array<double, 4> as_array() const { return {x_min, y_min, x_max, y_max}; }

    friend bool operator==(const Box&, const Box&) = default;
};

/// Intersection over union in [0, 1]; 0 whenever either box has zero area.
double iou(const Box& a, const Box& b);

/// Generalized IoU in [-1, 1].
double giou(const Box& a, const Box& b);

}  // namespace oed
