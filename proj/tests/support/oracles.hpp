// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Slow reference implementations used by the unit and acceptance tests.
// None of them call into the library code they are compared against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

#include "oed/boxes.hpp"
#include "oed/eval.hpp"
#include "oed/msda.hpp"
#include "oed/tensor.hpp"

namespace oed::oracle {

/// Zero-padded bilinear read of channel c at (x, y).
inline double bilinear(const Tensor& g, std::size_t c, double x, double y) {
    const long h = static_cast<long>(g.dim(1)), w = static_cast<long>(g.dim(2));
    const double fx = std::floor(x), fy = std::floor(y);
    const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
    const double ax = x - fx, ay = y - fy;
    double out = 0.0;
    for (int dy = 0; dy <= 1; ++dy) {
        for (int dx = 0; dx <= 1; ++dx) {
            const long xi = x0 + dx, yi = y0 + dy;
            if (xi < 0 || yi < 0 || xi >= w || yi >= h) continue;
            const double wgt = (dx ? ax : 1.0 - ax) * (dy ? ay : 1.0 - ay);
            out += wgt * g.at(c, static_cast<std::size_t>(yi), static_cast<std::size_t>(xi));
        }
    }
    return out;
}

/// F(q) = sum_l sum_k A_lqk W x_l(phi_l(ref) + offset_lqk), as nested loops.
inline std::vector<double> msda_query(const std::vector<Tensor>& levels, const msda::QuerySample& q) {
    const std::size_t c = levels.front().dim(0);
    std::vector<double> out(c, 0.0);
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const double px = q.ref.x * static_cast<double>(levels[l].dim(2) - 1);
        const double py = q.ref.y * static_cast<double>(levels[l].dim(1) - 1);
        for (std::size_t k = 0; k < q.points; ++k) {
            const std::size_t i = l * q.points + k;
            const double x = px + q.offsets[i].x, y = py + q.offsets[i].y;
            std::vector<double> sample(c);
            for (std::size_t ch = 0; ch < c; ++ch) sample[ch] = bilinear(levels[l], ch, x, y);
            for (std::size_t r = 0; r < c; ++r) {
                double proj = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch) proj += q.projection.at(r, ch) * sample[ch];
                out[r] += q.weights[i] * proj;
            }
        }
    }
    return out;
}

/// Minimum total cost over every injective assignment of the smaller side.
inline double brute_force_assignment_cost(const Tensor& cost) {
    const std::size_t n = cost.dim(0), g = cost.dim(1);
    if (n == 0 || g == 0) return 0.0;
    const bool rows_small = n <= g;
    const std::size_t small = rows_small ? n : g, large = rows_small ? g : n;
    std::vector<std::size_t> perm(large);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < small; ++i) s += rows_small ? cost.at(i, perm[i]) : cost.at(perm[i], i);
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

inline double box_iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    const double aa = std::max(0.0, a.x_max - a.x_min) * std::max(0.0, a.y_max - a.y_min);
    const double ab = std::max(0.0, b.x_max - b.x_min) * std::max(0.0, b.y_max - b.y_min);
    if (aa <= 0.0 || ab <= 0.0) return 0.0;
    const double inter = ix * iy;
    return inter / (aa + ab - inter);
}

/// Average precision by explicit enumeration: greedy per-image matching,
/// every cutoff of the ranked list, and for each recall point the maximum
/// precision over all cutoffs reaching it.
inline std::optional<double> brute_force_ap(const std::vector<eval::ImagePredictions>& preds,
                                            const std::vector<eval::ImageTruth>& gt, double thr) {
    std::size_t npos = 0;
    for (const auto& g : gt) npos += g.size();
    if (npos == 0) return std::nullopt;

    // (score, image, rank within image, true positive)
    std::vector<std::tuple<double, std::size_t, std::size_t, bool>> ranked;
    for (std::size_t img = 0; img < preds.size(); ++img) {
        const auto& p = preds[img];
        std::vector<std::size_t> order(p.size());
        std::iota(order.begin(), order.end(), 0);
        // insertion sort: descending score, stable
        for (std::size_t i = 1; i < order.size(); ++i)
            for (std::size_t j = i; j > 0 && p[order[j]].score > p[order[j - 1]].score; --j)
                std::swap(order[j], order[j - 1]);
        std::vector<bool> used(gt[img].size(), false);
        for (std::size_t r = 0; r < order.size(); ++r) {
            double best = -1.0;
            long pick = -1;
            for (std::size_t g = 0; g < gt[img].size(); ++g) {
                if (used[g]) continue;
                const double v = box_iou(p[order[r]].box, gt[img][g]);
                if (v >= thr && v > best) {
                    best = v;
                    pick = static_cast<long>(g);
                }
            }
            if (pick >= 0) used[static_cast<std::size_t>(pick)] = true;
            ranked.emplace_back(p[order[r]].score, img, r, pick >= 0);
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
        if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
        return std::get<2>(a) < std::get<2>(b);
    });
    std::vector<double> prec, rec;
    std::size_t tp = 0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
        if (std::get<3>(ranked[k])) ++tp;
        prec.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        rec.push_back(static_cast<double>(tp) / static_cast<double>(npos));
    }
    double sum = 0.0;
    for (int r = 0; r <= 100; ++r) {
        const double level = r / 100.0;
        double best = 0.0;
        for (std::size_t k = 0; k < prec.size(); ++k)
            if (rec[k] >= level) best = std::max(best, prec[k]);
        sum += best;
    }
    return sum / 101.0;
}

/// Lowest row holding the global maximum of a J x K matrix.
inline std::size_t scan_best_row(const Tensor& s) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t row = 0;
    for (std::size_t j = 0; j < s.dim(0); ++j)
        for (std::size_t k = 0; k < s.dim(1); ++k)
            if (s.at(j, k) > best) {
                best = s.at(j, k);
                row = j;
            }
    return row;
}

}  // namespace oed::oracle
