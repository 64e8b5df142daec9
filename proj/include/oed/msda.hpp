// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Multi-scale deformable attention aggregation.
//
//   out(q) = sum_l sum_k A[l,k] * W * x_l(rescale_l(ref_q) + offset[l,k])
//
// Reference points are normalized to [0,1]^2 and rescaled corner-aligned
// (1.0 -> extent - 1). Offsets are in pixels of the level they apply to.
// Sampling uses bilinear interpolation with zero padding.

#include <cstddef>
#include <span>
#include <vector>

#include "oed/autograd.hpp"
#include "oed/tensor.hpp"

namespace oed::msda {

/// Pyramid of C x H_l x W_l maps sharing C.
struct MultiScaleFeatureSet {
    std::vector<Tensor> levels;

    std::size_t num_levels() const { return levels.size(); }
    std::size_t channels() const { return levels.empty() ? 0 : levels.front().dim(0); }
    /// Throws ValidationError unless L >= 1, ranks are 3, C is shared and extents are >= 1.
    void validate() const;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct QuerySample {
    Point2 ref;                  // normalized
    std::size_t points = 0;      // K
    std::vector<Point2> offsets; // L*K, level-major
    std::vector<double> weights; // L*K, level-major, sums to 1
    Tensor projection;           // C x C

    const Point2& offset(std::size_t level, std::size_t k) const { return offsets[level * points + k]; }
    double weight(std::size_t level, std::size_t k) const { return weights[level * points + k]; }
};

inline constexpr double kWeightSumTolerance = 1e-9;

/// Normalized point -> continuous pixel coordinates of an H x W level.
Point2 rescale_point(Point2 ref, std::size_t height, std::size_t width);

/// One C-vector per query.
std::vector<Tensor> msda_forward(const MultiScaleFeatureSet& features, std::span<const QuerySample> queries);

/// Graph form over a batch of Q queries, used by the detector.
///   levels:     L Vars, each C x H_l x W_l
///   ref:        [Q x 2] normalized reference points
///   offsets:    [Q x (L*K*2)] as (x, y) pairs, level-major
///   weights:    [Q x (L*K)], rows summing to one
///   projection: [C x C]
/// Returns [Q x C].
ag::Var msda_forward(std::span<const ag::Var> levels, const ag::Var& ref, const ag::Var& offsets,
                     const ag::Var& weights, const ag::Var& projection, std::size_t points);

/// Pixel-space sampling locations of each (query, level, point), in the
/// graph. Each entry is a pair of [Q*K] Vars (xs, ys) for one level.
struct SampleLocations {
    std::vector<ag::Var> xs;
    std::vector<ag::Var> ys;
};
SampleLocations sample_locations(std::span<const ag::Var> levels, const ag::Var& ref, const ag::Var& offsets,
                                 std::size_t points);

}  // namespace oed::msda
