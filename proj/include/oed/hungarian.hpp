// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "oed/tensor.hpp"

namespace oed {

/// Result of a rectangular min-cost assignment between predictions (rows)
/// and ground truths (columns).
struct Assignment {
    /// (prediction, ground truth), sorted by prediction index.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::size_t> unmatched_predictions;
    std::vector<std::size_t> unmatched_ground_truths;

    double total_cost(const Tensor& cost) const;
};

/// Optimal assignment for an N x G cost matrix (O(n^2 m) shortest augmenting
/// paths with potentials). min(N, G) pairs are produced. When several
/// assignments reach the optimum the result is one of them, chosen
/// deterministically from the input; callers comparing against another solver
/// should compare total cost, not pairs.
Assignment hungarian_match(const Tensor& cost);

}  // namespace oed
