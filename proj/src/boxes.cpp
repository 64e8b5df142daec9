// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/boxes.hpp"

#include <algorithm>

namespace oed {

namespace {

double intersection(const Box& a, const Box& b) {
    const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    return (w > 0 && h > 0) ? w * h : 0.0;
}

}  // namespace

double iou(const Box& a, const Box& b) {
    const double aa = a.area(), ab = b.area();
    if (aa <= 0.0 || ab <= 0.0) return 0.0;
    const double inter = intersection(a, b);
    return std::clamp(inter / (aa + ab - inter), 0.0, 1.0);
}

double giou(const Box& a, const Box& b) {
    const double aa = a.area(), ab = b.area();
    const double inter = intersection(a, b);
    const double uni = aa + ab - inter;
    const double hull = (std::max(a.x_max, b.x_max) - std::min(a.x_min, b.x_min)) *
                        (std::max(a.y_max, b.y_max) - std::min(a.y_min, b.y_min));
    if (uni <= 0.0 || hull <= 0.0) return 0.0;
    return inter / uni - (hull - uni) / hull;
}

}  // namespace oed
