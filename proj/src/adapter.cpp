// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/adapter.hpp"

#include <algorithm>
#include <cmath>

#include "oed/errors.hpp"

namespace oed::adapter {

void AdapterParams::validate() const {
    const auto d = dim();
    require(d > 0, "adapter: empty parameters");
    for (const auto& l : layers) {
        require(l.wq.shape() == Shape({d, d}) && l.wk.shape() == Shape({d, d}) && l.wv.shape() == Shape({d, d}),
                "adapter: attention projections must be d x d");
        require(l.w1.shape() == Shape({d, 2 * d}) && l.w2.shape() == Shape({2 * d, d}),
                "adapter: MLP weights must be d x 2d and 2d x d");
        for (const auto* t : {&l.wq, &l.wk, &l.wv, &l.w1, &l.w2})
            require(t->all_finite(), "adapter: non-finite parameter");
    }
}

AdapterParams AdapterParams::zeros(std::size_t d) {
    AdapterParams p;
    for (auto& l : p.layers) {
        l.wq = Tensor({d, d});
        l.wk = Tensor({d, d});
        l.wv = Tensor({d, d});
        l.w1 = Tensor({d, 2 * d});
        l.w2 = Tensor({2 * d, d});
    }
    return p;
}

AdapterParams AdapterParams::identity_init(std::size_t d, Rng& rng) {
    auto p = zeros(d);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& l : p.layers)
        for (auto* t : {&l.wq, &l.wk, &l.w1})
            for (auto& v : t->data()) v = rng.normal(0.0, s);
    return p;
}

std::vector<Tensor> AdapterParams::flatten() const {
    std::vector<Tensor> out;
    for (const auto& l : layers) {
        out.push_back(l.wq);
        out.push_back(l.wk);
        out.push_back(l.wv);
        out.push_back(l.w1);
        out.push_back(l.w2);
    }
    return out;
}

AdapterParams AdapterParams::unflatten(std::span<const Tensor> tensors) {
    require(tensors.size() == kLayers * kTensorsPerLayer, "adapter: wrong parameter count");
    AdapterParams p;
    for (std::size_t i = 0; i < kLayers; ++i) {
        const auto* t = tensors.data() + i * kTensorsPerLayer;
        p.layers[i] = {t[0], t[1], t[2], t[3], t[4]};
    }
    p.validate();
    return p;
}

ag::Var adapter_forward(const ag::Var& patches, std::span<const ag::Var> params) {
    require(params.size() == kLayers * kTensorsPerLayer, "adapter: wrong parameter count");
    require(patches.shape().size() == 2 && patches.shape()[0] >= 1, "adapter: patches must be P x d with P >= 1");
    const auto d = patches.shape()[1];
    require(params[0].shape() == Shape({d, d}), "adapter: patch width does not match parameters");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    ag::Var x = patches;
    for (std::size_t i = 0; i < kLayers; ++i) {
        const auto* p = params.data() + i * kTensorsPerLayer;
        const auto q = ag::matmul(x, p[0]);
        const auto k = ag::matmul(x, p[1]);
        const auto v = ag::matmul(x, p[2]);
        const auto attn = ag::softmax(ag::scale(ag::matmul(q, ag::transpose(k)), inv_sqrt_d));
        x = ag::add(x, ag::matmul(attn, v));
        x = ag::add(x, ag::matmul(ag::gelu(ag::matmul(x, p[3])), p[4]));
    }
    return x;
}

Tensor adapter_forward(const MaskFeature& mask_feature, const AdapterParams& params) {
    params.validate();
    const auto& patches = mask_feature.patches;
    require(patches.rank() == 2 && patches.dim(0) >= 1, "adapter: patches must be P x d with P >= 1");
    require(patches.dim(1) == params.dim(), "adapter: patch width does not match parameters");
    std::vector<ag::Var> vars;
    for (auto& t : params.flatten()) vars.push_back(ag::constant(std::move(t)));
    return adapter_forward(ag::constant(patches), vars).value();
}

IndexRect project_box_to_level(const Box& box, std::size_t image_width, std::size_t image_height,
                               const LevelGeometry& level) {
    require(box.x_min < box.x_max && box.y_min < box.y_max, "project_box_to_level: degenerate box");
    require(box.x_min >= 0 && box.y_min >= 0 && box.x_max <= static_cast<double>(image_width) &&
                box.y_max <= static_cast<double>(image_height),
            "project_box_to_level: box outside the image");
    require(level.stride >= 1 && level.width >= 1 && level.height >= 1, "project_box_to_level: bad level geometry");
    const double s = static_cast<double>(level.stride);
    const double pad = static_cast<double>(level.pad);
    auto lo = [&](double v, std::size_t extent) {
        const double f = std::floor((v + pad) / s);
        return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(extent - 1)));
    };
    auto hi = [&](double v, std::size_t extent) {
        const double c = std::ceil((v + pad) / s);
        return static_cast<std::size_t>(std::clamp(c, 0.0, static_cast<double>(extent)));
    };
    IndexRect r{lo(box.x_min, level.width), hi(box.x_max, level.width), lo(box.y_min, level.height),
                hi(box.y_max, level.height)};
    if (r.x1 <= r.x0) r.x1 = r.x0 + 1;
    if (r.y1 <= r.y0) r.y1 = r.y0 + 1;
    return r;
}

}  // namespace oed::adapter
