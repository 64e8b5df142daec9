// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Plain (non-recording) numeric ops. The graph ops in autograd.hpp reuse
// these for their forward values.

#include <cstddef>
#include <span>

#include "oed/tensor.hpp"

namespace oed {

/// Max-shifted softmax of a non-empty finite vector.
Tensor softmax(const Tensor& v);
void softmax_inplace(std::span<double> v);

/// a.b / (|a||b|); 0 when either vector is all zeros.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const Tensor& a, const Tensor& b);

/// Bilinear sample of a C x H x W grid at continuous (x, y), where x indexes
/// columns and y rows. Neighbors outside the grid read as zero.
Tensor bilinear_sample(const Tensor& grid, double x, double y);

/// Corner indices and weights of one bilinear sample; shared by the forward
/// and backward passes. Out-of-range corners carry valid = false.
struct BilinearTap {
    std::ptrdiff_t x0, y0;
    double fx, fy;  // fractional parts in [0, 1)
};
BilinearTap bilinear_tap(double x, double y);

/// Accumulates `scale * grid(:, y, x)` into out (length C) with zero padding.
void bilinear_accumulate(const Tensor& grid, double x, double y, double scale, std::span<double> out);

}  // namespace oed
