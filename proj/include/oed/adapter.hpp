// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Patch-sequence adapter: two single-head self-attention blocks with plain
// residuals and a ratio-2 GELU MLP. No positional encoding, so the adapter is
// equivariant to patch order.
//
//   X1 = X  + softmax(X Wq (X Wk)^T / sqrt(d)) X Wv
//   Y  = X1 + gelu(X1 W1) W2

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "oed/autograd.hpp"
#include "oed/boxes.hpp"
#include "oed/rng.hpp"
#include "oed/tensor.hpp"

namespace oed::adapter {

/// Region features of one box: P patches of width d.
struct MaskFeature {
    Tensor patches;  // P x d
    int box_id = 0;
};

struct AdapterLayer {
    Tensor wq, wk, wv;  // d x d
    Tensor w1;          // d x 2d
    Tensor w2;          // 2d x d
};

inline constexpr std::size_t kLayers = 2;
inline constexpr std::size_t kTensorsPerLayer = 5;

struct AdapterParams {
    std::array<AdapterLayer, kLayers> layers;

    std::size_t dim() const { return layers[0].wq.rank() == 2 ? layers[0].wq.dim(0) : 0; }
    void validate() const;

    static AdapterParams zeros(std::size_t d);
    /// Random Wq, Wk, W1; zero Wv and W2, so the map starts as the identity.
    static AdapterParams identity_init(std::size_t d, Rng& rng);

    /// Flattened in layer-major order wq, wk, wv, w1, w2.
    std::vector<Tensor> flatten() const;
    static AdapterParams unflatten(std::span<const Tensor> tensors);
};

Tensor adapter_forward(const MaskFeature& mask_feature, const AdapterParams& params);

/// Graph form; `params` holds kLayers * kTensorsPerLayer Vars in flatten() order.
ag::Var adapter_forward(const ag::Var& patches, std::span<const ag::Var> params);

/// Half-open index rectangle on a feature level.
struct IndexRect {
    std::size_t x0 = 0, x1 = 0, y0 = 0, y1 = 0;
    std::size_t cells() const { return (x1 - x0) * (y1 - y0); }
    friend bool operator==(const IndexRect&, const IndexRect&) = default;
};

struct LevelGeometry {
    std::size_t height = 0;  // level extent
    std::size_t width = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;
};

/// Maps an image-space box onto a level: floor((min + pad) / stride),
/// ceil((max + pad) / stride), clamped to the level and never empty.
IndexRect project_box_to_level(const Box& box, std::size_t image_width, std::size_t image_height,
                               const LevelGeometry& level);

}  // namespace oed::adapter
