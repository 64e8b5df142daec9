// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/ops.hpp"

#include <algorithm>
#include <cmath>

#include "oed/errors.hpp"
#include "oed/kernels.hpp"

namespace oed {

void softmax_inplace(std::span<double> v) {
    if (v.empty()) throw ValidationError("softmax: empty input");
    double mx = v[0];
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericalError("softmax: non-finite input");
        mx = std::max(mx, x);
    }
    double total = 0.0;
    for (double& x : v) {
        x = std::exp(x - mx);
        total += x;
    }
    for (double& x : v) x /= total;
}

Tensor softmax(const Tensor& v) {
    require(v.rank() == 1, "softmax: expected a vector");
    Tensor out = v;
    softmax_inplace(out.data());
    return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "cosine_similarity: length mismatch");
    const double na = std::sqrt(kernels::dot(a.data(), a.data(), a.size()));
    const double nb = std::sqrt(kernels::dot(b.data(), b.data(), b.size()));
    if (na == 0.0 || nb == 0.0) return 0.0;
    const double c = kernels::dot(a.data(), b.data(), a.size()) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
    require(a.numel() == b.numel(), "cosine_similarity: length mismatch");
    return cosine_similarity(a.data(), b.data());
}

BilinearTap bilinear_tap(double x, double y) {
    const double fx0 = std::floor(x);
    const double fy0 = std::floor(y);
    return {static_cast<std::ptrdiff_t>(fx0), static_cast<std::ptrdiff_t>(fy0), x - fx0, y - fy0};
}

void bilinear_accumulate(const Tensor& grid, double x, double y, double scale, std::span<double> out) {
    const auto c_count = grid.dim(0);
    const auto h = static_cast<std::ptrdiff_t>(grid.dim(1));
    const auto w = static_cast<std::ptrdiff_t>(grid.dim(2));
    const auto tap = bilinear_tap(x, y);
    const double wts[4] = {(1 - tap.fx) * (1 - tap.fy), tap.fx * (1 - tap.fy), (1 - tap.fx) * tap.fy,
                           tap.fx * tap.fy};
    const std::ptrdiff_t xs[4] = {tap.x0, tap.x0 + 1, tap.x0, tap.x0 + 1};
    const std::ptrdiff_t ys[4] = {tap.y0, tap.y0, tap.y0 + 1, tap.y0 + 1};
    const auto plane = static_cast<std::size_t>(h * w);
    const double* base = grid.data().data();
    for (int t = 0; t < 4; ++t) {
        if (wts[t] == 0.0 || xs[t] < 0 || ys[t] < 0 || xs[t] >= w || ys[t] >= h) continue;
        const double s = scale * wts[t];
        const auto off = static_cast<std::size_t>(ys[t] * w + xs[t]);
        for (std::size_t c = 0; c < c_count; ++c) out[c] += s * base[c * plane + off];
    }
}

Tensor bilinear_sample(const Tensor& grid, double x, double y) {
    require(grid.rank() == 3 && !grid.empty(), "bilinear_sample: expected a non-empty C x H x W grid");
    require(std::isfinite(x) && std::isfinite(y), "bilinear_sample: non-finite sample point");
    Tensor out({grid.dim(0)});
    bilinear_accumulate(grid, x, y, 1.0, out.data());
    return out;
}

}  // namespace oed
