// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Toy query-based detector over a three-level convolutional pyramid.
//
//   image -> conv(3->16, s2) -> conv(->d, s2) = level 0 (stride 4)
//                            -> conv(d->d, s2) = level 1 (stride 8)
//                            -> conv(d->d, s2) = level 2 (stride 16)
//
// Each query q has a learned embedding e_q and reference logits r_q. Its
// content vector is c_q = e_q + level2(sigmoid(r_q)); offsets and attention
// weights are linear in c_q, and F_q is the deformable aggregation over the
// pyramid. The head reads h = silu((F_q + c_q) W1 + b1):
//
//   class logits = h Wc + bc        (fruit, background)
//   box (cx, cy, w, h) = sigmoid(h Wb + bb + [r_q, 0, 0])
//
// All parameters live in one ParamSet, including the adapter used by the
// occlusion-aware distillation, so the EMA teacher covers the whole model.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oed/adapter.hpp"
#include "oed/autograd.hpp"
#include "oed/boxes.hpp"
#include "oed/hungarian.hpp"
#include "oed/msda.hpp"
#include "oed/params.hpp"
#include "oed/raster.hpp"

namespace oed::detector {

struct DetectorConfig {
    std::size_t image_min = 16;
    std::size_t image_max = 256;
    std::size_t stem_channels = 16;
    std::size_t channels = 32;  // d
    std::size_t num_queries = 16;
    std::size_t num_points = 4;  // K
    std::size_t num_classes = 1;
    double init_scale = 1.0;     // multiplies the He-style init std
    void validate() const;
};

inline constexpr std::size_t kNumLevels = 3;
inline constexpr std::size_t kLevelStrides[kNumLevels] = {4, 8, 16};

/// Parameter names in the order the ParamSet stores them.
std::vector<std::string> parameter_names();

/// All-zero parameters with the configured shapes.
ParamSet zero_params(const DetectorConfig& config);
/// Random init: He-style convolutions and linears, reference points on a
/// grid, radial offset biases, identity adapter.
ParamSet init_params(const DetectorConfig& config, std::uint64_t seed);

/// Index of a named tensor; throws ValidationError if absent.
std::size_t param_index(const ParamSet& params, const std::string& name);

/// Image to a 3 x H x W tensor, (v / 255 - 0.5) / 0.25 per channel.
Tensor image_tensor(const RgbImage& image);

struct ForwardGraph {
    std::vector<ag::Var> levels;  // kNumLevels maps, d x H_l x W_l
    ag::Var logits;               // [Nq x (classes + 1)], background last
    ag::Var boxes;                // [Nq x 4] normalized cx, cy, w, h
    ag::Var ref;                  // [Nq x 2]
    ag::Var offsets;              // [Nq x L*K*2]
    ag::Var weights;              // [Nq x L*K]
    ag::Var projection;           // [d x d]
};

/// `params` are Vars aligned with the ParamSet (parameters or constants).
ForwardGraph forward_graph(const Tensor& image, std::span<const ag::Var> params, const DetectorConfig& config);

struct Detection {
    double score = 0.0;  // foreground probability
    Box box;             // image pixels, clipped to the image
    std::size_t query_index = 0;
};

struct ForwardResult {
    msda::MultiScaleFeatureSet features;
    std::vector<Detection> detections;  // one per query
    std::vector<msda::QuerySample> queries;
};

/// Value-only forward pass (no gradient bookkeeping kept).
ForwardResult forward(const RgbImage& image, const ParamSet& params, const DetectorConfig& config);

/// Extracts values from a graph built for an image of the given extent.
ForwardResult read_out(const ForwardGraph& g, std::size_t image_width, std::size_t image_height,
                       const DetectorConfig& config);

/// Wraps tensors as constants, or as parameters when trainable is set.
std::vector<ag::Var> as_vars(const ParamSet& params, bool trainable);

/// Adapter Vars within a detector parameter vector.
std::vector<ag::Var> adapter_vars(std::span<const ag::Var> params);
adapter::AdapterParams adapter_params(const ParamSet& params);

// ---- set-prediction loss

struct LossWeights {
    double l1 = 5.0;
    double giou = 2.0;
    double background = 0.1;  // class weight of the no-object label
};

/// Ground truth in normalized cx, cy, w, h.
struct NormalizedBox {
    double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
};
NormalizedBox normalize_box(const Box& box, std::size_t image_width, std::size_t image_height);
Box to_pixel_box(const NormalizedBox& b, std::size_t image_width, std::size_t image_height);

/// Matching cost: -p(class) + l1 * L1 + giou * -GIoU; Nq x G.
Tensor matching_cost(const Tensor& logits, const Tensor& boxes, std::span<const NormalizedBox> gt,
                     std::span<const int> gt_classes, const LossWeights& w = {});

struct DetectionLossTerms {
    ag::Var total;
    double classification = 0.0;
    double l1 = 0.0;    // weighted
    double giou = 0.0;  // weighted
};

/// Weighted-mean cross-entropy over all queries (matched to their class,
/// unmatched to background) plus (l1 * L1 + giou * (1 - GIoU)) summed over
/// matched pairs and divided by max(G, 1). Class ids are 1-based.
DetectionLossTerms detection_loss(const ag::Var& logits, const ag::Var& boxes, std::span<const NormalizedBox> gt,
                                  std::span<const int> gt_classes, const Assignment& assignment,
                                  const LossWeights& w = {});

}  // namespace oed::detector
