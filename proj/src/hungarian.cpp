// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oed/errors.hpp"

namespace oed {

double Assignment::total_cost(const Tensor& cost) const {
    double s = 0.0;
    for (auto [p, g] : pairs) s += cost.at(p, g);
    return s;
}

namespace {

// rows <= cols. Returns for each row the assigned column.
std::vector<std::size_t> solve(std::size_t rows, std::size_t cols, auto&& c) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials; column 0 is the virtual source.
    std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
    std::vector<std::size_t> match_col(cols + 1, 0), way(cols + 1, 0);
    for (std::size_t i = 1; i <= rows; ++i) {
        match_col[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(cols + 1, inf);
        std::vector<char> used(cols + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match_col[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= cols; ++j) {
                if (used[j]) continue;
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= cols; ++j) {
                if (used[j]) {
                    u[match_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match_col[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match_col[j0] = match_col[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(rows, 0);
    for (std::size_t j = 1; j <= cols; ++j)
        if (match_col[j] != 0) row_to_col[match_col[j] - 1] = j - 1;
    return row_to_col;
}

}  // namespace

Assignment hungarian_match(const Tensor& cost) {
    require(cost.rank() == 2, "hungarian_match: expected an N x G matrix");
    for (double x : cost.data())
        if (!std::isfinite(x)) throw ValidationError("hungarian_match: non-finite cost entry");
    const auto n = cost.dim(0), g = cost.dim(1);
    Assignment out;
    if (n == 0 || g == 0) {
        for (std::size_t i = 0; i < n; ++i) out.unmatched_predictions.push_back(i);
        for (std::size_t j = 0; j < g; ++j) out.unmatched_ground_truths.push_back(j);
        return out;
    }
    std::vector<char> pred_used(n, 0), gt_used(g, 0);
    if (n <= g) {
        const auto r2c = solve(n, g, [&](std::size_t i, std::size_t j) { return cost.at(i, j); });
        for (std::size_t i = 0; i < n; ++i) {
            out.pairs.emplace_back(i, r2c[i]);
            pred_used[i] = gt_used[r2c[i]] = 1;
        }
    } else {
        const auto r2c = solve(g, n, [&](std::size_t i, std::size_t j) { return cost.at(j, i); });
        for (std::size_t j = 0; j < g; ++j) {
            out.pairs.emplace_back(r2c[j], j);
            pred_used[r2c[j]] = gt_used[j] = 1;
        }
        std::sort(out.pairs.begin(), out.pairs.end());
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!pred_used[i]) out.unmatched_predictions.push_back(i);
    for (std::size_t j = 0; j < g; ++j)
        if (!gt_used[j]) out.unmatched_ground_truths.push_back(j);
    return out;
}

}  // namespace oed
