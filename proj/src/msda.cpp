// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/msda.hpp"

#include <cmath>
#include <string>

#include "oed/errors.hpp"

namespace oed::msda {

void MultiScaleFeatureSet::validate() const {
    require(!levels.empty(), "msda: feature set needs at least one level");
    const auto c = levels.front().rank() == 3 ? levels.front().dim(0) : 0;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto& t = levels[l];
        require(t.rank() == 3, "msda: level " + std::to_string(l) + " is not C x H x W");
        require(t.dim(0) == c && c > 0, "msda: channel count differs across levels");
        require(t.dim(1) >= 1 && t.dim(2) >= 1, "msda: empty level");
    }
}

Point2 rescale_point(Point2 ref, std::size_t height, std::size_t width) {
    require(ref.x >= 0.0 && ref.x <= 1.0 && ref.y >= 0.0 && ref.y <= 1.0,
            "rescale_point: reference point outside [0,1]^2");
    require(height >= 1 && width >= 1, "rescale_point: empty level");
    return {ref.x * static_cast<double>(width - 1), ref.y * static_cast<double>(height - 1)};
}

namespace {

void validate_query(const QuerySample& q, std::size_t levels, std::size_t channels) {
    require(q.points >= 1, "msda: query needs K >= 1 sampling points");
    require(q.offsets.size() == levels * q.points && q.weights.size() == levels * q.points,
            "msda: query offsets/weights do not match L x K");
    require(q.projection.rank() == 2 && q.projection.dim(0) == channels && q.projection.dim(1) == channels,
            "msda: projection must be C x C");
    double total = 0.0;
    for (double w : q.weights) {
        require(w >= 0.0, "msda: negative attention weight");
        total += w;
    }
    if (std::fabs(total - 1.0) > kWeightSumTolerance)
        throw ValidationError("msda: attention weights sum to " + std::to_string(total) + ", expected 1");
}

}  // namespace

std::vector<Tensor> msda_forward(const MultiScaleFeatureSet& features, std::span<const QuerySample> queries) {
    features.validate();
    const auto num_levels = features.num_levels();
    const auto c = features.channels();
    std::vector<ag::Var> levels;
    for (const auto& t : features.levels) levels.push_back(ag::constant(t));

    std::vector<Tensor> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
        validate_query(q, num_levels, c);
        const auto k = q.points;
        // reject out-of-range reference points early
        (void)rescale_point(q.ref, 1, 1);
        Tensor ref({1, 2}, {q.ref.x, q.ref.y});
        Tensor off({1, num_levels * k * 2});
        for (std::size_t i = 0; i < num_levels * k; ++i) {
            off[2 * i] = q.offsets[i].x;
            off[2 * i + 1] = q.offsets[i].y;
        }
        Tensor wts({1, num_levels * k}, q.weights);
        auto v = msda_forward(levels, ag::constant(ref), ag::constant(off), ag::constant(wts),
                              ag::constant(q.projection), k);
        out.push_back(v.value().reshaped({c}));
    }
    return out;
}

SampleLocations sample_locations(std::span<const ag::Var> levels, const ag::Var& ref, const ag::Var& offsets,
                                 std::size_t points) {
    const auto q = ref.shape().at(0);
    const auto num_levels = levels.size();
    require(ref.shape().size() == 2 && ref.shape()[1] == 2, "msda: ref must be [Q x 2]");
    require(offsets.shape() == Shape({q, num_levels * points * 2}), "msda: offsets must be [Q x L*K*2]");
    for (std::size_t i = 0; i < ref.numel(); ++i)
        require(ref.value()[i] >= 0.0 && ref.value()[i] <= 1.0, "msda: reference point outside [0,1]^2");

    // offsets columns are (l, k, xy); split into x and y planes of [Q x L*K].
    const auto pairs = ag::reshape(offsets, {q * num_levels * points, 2});
    const auto off_x = ag::reshape(ag::slice_cols(pairs, 0, 1), {q, num_levels * points});
    const auto off_y = ag::reshape(ag::slice_cols(pairs, 1, 2), {q, num_levels * points});
    const auto ones = ag::constant(Tensor({1, points}, 1.0));
    const auto ref_x = ag::slice_cols(ref, 0, 1);
    const auto ref_y = ag::slice_cols(ref, 1, 2);

    SampleLocations loc;
    for (std::size_t l = 0; l < num_levels; ++l) {
        const auto h = levels[l].shape()[1], w = levels[l].shape()[2];
        const auto base_x = ag::matmul(ag::scale(ref_x, static_cast<double>(w - 1)), ones);
        const auto base_y = ag::matmul(ag::scale(ref_y, static_cast<double>(h - 1)), ones);
        const auto c0 = l * points, c1 = (l + 1) * points;
        loc.xs.push_back(ag::reshape(ag::add(base_x, ag::slice_cols(off_x, c0, c1)), {q * points}));
        loc.ys.push_back(ag::reshape(ag::add(base_y, ag::slice_cols(off_y, c0, c1)), {q * points}));
    }
    return loc;
}

ag::Var msda_forward(std::span<const ag::Var> levels, const ag::Var& ref, const ag::Var& offsets,
                     const ag::Var& weights, const ag::Var& projection, std::size_t points) {
    require(!levels.empty() && points >= 1, "msda: need L >= 1 and K >= 1");
    const auto q = ref.shape().at(0);
    const auto num_levels = levels.size();
    const auto c = levels[0].shape().at(0);
    require(weights.shape() == Shape({q, num_levels * points}), "msda: weights must be [Q x L*K]");
    require(projection.shape() == Shape({c, c}), "msda: projection must be C x C");
    for (std::size_t i = 0; i < q; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < num_levels * points; ++j) total += weights.value().at(i, j);
        if (std::fabs(total - 1.0) > kWeightSumTolerance)
            throw ValidationError("msda: attention weights of query " + std::to_string(i) + " sum to " +
                                  std::to_string(total));
    }

    const auto loc = sample_locations(levels, ref, offsets, points);
    ag::Var acc;
    for (std::size_t l = 0; l < num_levels; ++l) {
        require(levels[l].shape().size() == 3 && levels[l].shape()[0] == c, "msda: channel count differs across levels");
        // out[q] += sum_k A[q,k] * s[q*K + k], with s the [Q*K x C] samples
        const auto samples = ag::bilinear_sample(levels[l], loc.xs[l], loc.ys[l]);
        const auto a = ag::reshape(ag::slice_cols(weights, l * points, (l + 1) * points), {q * points, 1});
        const auto scaled = ag::mul(samples, ag::matmul(a, ag::constant(Tensor({1, c}, 1.0))));
        // Sum groups of K rows: selector [Q x Q*K].
        Tensor sel({q, q * points});
        for (std::size_t i = 0; i < q; ++i)
            for (std::size_t k = 0; k < points; ++k) sel.at(i, i * points + k) = 1.0;
        const auto level_sum = ag::matmul(ag::constant(std::move(sel)), scaled);
        acc = acc.defined() ? ag::add(acc, level_sum) : level_sum;
    }
    // Row-vector convention: out[q] = W * v[q]  <=>  out = V * W^T.
    return ag::matmul(acc, ag::transpose(projection));
}

}  // namespace oed::msda
