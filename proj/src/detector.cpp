// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "oed/errors.hpp"
#include "oed/ops.hpp"
#include "oed/rng.hpp"

namespace oed::detector {

namespace {

enum Slot : std::size_t {
    kConv0W,
    kConv0B,
    kConv1W,
    kConv1B,
    kConv2W,
    kConv2B,
    kConv3W,
    kConv3B,
    kQueryEmbed,
    kQueryRef,
    kOffsetW,
    kOffsetB,
    kAttnW,
    kAttnB,
    kProj,
    kHeadW1,
    kHeadB1,
    kClsW,
    kClsB,
    kBoxW,
    kBoxB,
    kAdapter,  // first of kLayers * kTensorsPerLayer
};

constexpr std::size_t kParamCount = kAdapter + adapter::kLayers * adapter::kTensorsPerLayer;

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

void DetectorConfig::validate() const {
    require(image_min >= 16 && image_min <= image_max, "detector: image bounds must satisfy 16 <= min <= max");
    require(stem_channels >= 1 && channels >= 1, "detector: channel widths must be >= 1");
    require(num_queries >= 1 && num_points >= 1 && num_classes >= 1, "detector: queries, points and classes must be >= 1");
    require(std::isfinite(init_scale) && init_scale >= 0.0, "detector: init_scale must be >= 0");
}

std::vector<std::string> parameter_names() {
    std::vector<std::string> names = {"conv0.weight", "conv0.bias",   "conv1.weight", "conv1.bias",  "conv2.weight",
                                      "conv2.bias",   "conv3.weight", "conv3.bias",   "query.embed", "query.ref",
                                      "offset.weight", "offset.bias", "attn.weight",  "attn.bias",   "msda.proj",
                                      "head.w1",      "head.b1",      "cls.weight",   "cls.bias",    "box.weight",
                                      "box.bias"};
    const char* parts[adapter::kTensorsPerLayer] = {"wq", "wk", "wv", "w1", "w2"};
    for (std::size_t l = 0; l < adapter::kLayers; ++l)
        for (const char* p : parts) names.push_back("adapter.l" + std::to_string(l) + "." + p);
    return names;
}

ParamSet zero_params(const DetectorConfig& c) {
    c.validate();
    const std::size_t d = c.channels, s = c.stem_channels, q = c.num_queries;
    const std::size_t lk = kNumLevels * c.num_points;
    const std::vector<Shape> shapes = {
        {s, 3, 3, 3}, {s}, {d, s, 3, 3}, {d}, {d, d, 3, 3}, {d}, {d, d, 3, 3}, {d},
        {q, d},       {q, 2},
        {d, lk * 2},  {lk * 2},
        {d, lk},      {lk},
        {d, d},
        {d, d},       {d},
        {d, c.num_classes + 1}, {c.num_classes + 1},
        {d, 4},       {4},
    };
    const auto names = parameter_names();
    ParamSet p;
    for (std::size_t i = 0; i < shapes.size(); ++i) p.add(names[i], Tensor(shapes[i]));
    const auto ad = adapter::AdapterParams::zeros(d).flatten();
    for (std::size_t i = 0; i < ad.size(); ++i) p.add(names[kAdapter + i], ad[i]);
    return p;
}

ParamSet init_params(const DetectorConfig& c, std::uint64_t seed) {
    ParamSet p = zero_params(c);
    Rng rng(seed);
    auto fill_normal = [&](std::size_t slot, double stddev) {
        for (double& v : p.tensors[slot].storage()) v = rng.normal(0.0, stddev);
    };
    const double g = c.init_scale;
    const std::size_t d = c.channels;
    fill_normal(kConv0W, g * std::sqrt(2.0 / 27.0));
    fill_normal(kConv1W, g * std::sqrt(2.0 / (9.0 * static_cast<double>(c.stem_channels))));
    fill_normal(kConv2W, g * std::sqrt(2.0 / (9.0 * static_cast<double>(d))));
    fill_normal(kConv3W, g * std::sqrt(2.0 / (9.0 * static_cast<double>(d))));
    fill_normal(kQueryEmbed, 0.1);

    // reference points on a regular grid
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(c.num_queries))));
    Tensor& ref = p.tensors[kQueryRef];
    for (std::size_t q = 0; q < c.num_queries; ++q) {
        ref.at(q, 0) = logit((static_cast<double>(q % side) + 0.5) / static_cast<double>(side));
        ref.at(q, 1) = logit((static_cast<double>(q / side) + 0.5) / static_cast<double>(side));
    }

    fill_normal(kOffsetW, 0.01);
    Tensor& ob = p.tensors[kOffsetB];
    for (std::size_t l = 0; l < kNumLevels; ++l) {
        for (std::size_t k = 0; k < c.num_points; ++k) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(c.num_points);
            const std::size_t i = (l * c.num_points + k) * 2;
            ob[i] = std::cos(a);
            ob[i + 1] = std::sin(a);
        }
    }
    fill_normal(kAttnW, 0.01);
    fill_normal(kProj, 1.0 / std::sqrt(static_cast<double>(d)));
    fill_normal(kHeadW1, std::sqrt(2.0 / static_cast<double>(d)));
    fill_normal(kClsW, 0.01);
    fill_normal(kBoxW, 0.01);
    p.tensors[kBoxB][2] = logit(0.2);
    p.tensors[kBoxB][3] = logit(0.2);

    const auto ad = adapter::AdapterParams::identity_init(d, rng).flatten();
    for (std::size_t i = 0; i < ad.size(); ++i) p.tensors[kAdapter + i] = ad[i];
    return p;
}

std::size_t param_index(const ParamSet& params, const std::string& name) {
    const auto it = std::find(params.names.begin(), params.names.end(), name);
    if (it == params.names.end()) throw ValidationError("no parameter named '" + name + "'");
    return static_cast<std::size_t>(it - params.names.begin());
}

Tensor image_tensor(const RgbImage& image) {
    const std::size_t h = image.height, w = image.width;
    require(image.pixels.size() == w * h * 3, "image_tensor: pixel buffer size mismatch");
    Tensor t({3, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch)
                t.at(ch, y, x) = (static_cast<double>(image.at(x, y)[ch]) / 255.0 - 0.5) / 0.25;
    return t;
}

std::vector<ag::Var> as_vars(const ParamSet& params, bool trainable) {
    std::vector<ag::Var> out;
    out.reserve(params.size());
    for (const auto& t : params.tensors) out.push_back(trainable ? ag::parameter(t) : ag::constant(t));
    return out;
}

std::vector<ag::Var> adapter_vars(std::span<const ag::Var> params) {
    require(params.size() == kParamCount, "adapter_vars: unexpected parameter count");
    return {params.begin() + kAdapter, params.end()};
}

adapter::AdapterParams adapter_params(const ParamSet& params) {
    require(params.size() == kParamCount, "adapter_params: unexpected parameter count");
    return adapter::AdapterParams::unflatten(std::span<const Tensor>(params.tensors).subspan(kAdapter));
}

ForwardGraph forward_graph(const Tensor& image, std::span<const ag::Var> p, const DetectorConfig& c) {
    c.validate();
    require(p.size() == kParamCount, "forward: expected " + std::to_string(kParamCount) + " parameter tensors");
    require(image.rank() == 3 && image.dim(0) == 3, "forward: expected a 3 x H x W image");
    const std::size_t h = image.dim(1), w = image.dim(2);
    if (h < c.image_min || w < c.image_min || h > c.image_max || w > c.image_max)
        throw ValidationError("forward: image extent " + std::to_string(w) + "x" + std::to_string(h) +
                              " outside [" + std::to_string(c.image_min) + ", " + std::to_string(c.image_max) + "]");

    ForwardGraph g;
    const auto x = ag::constant(image);
    const auto stem = ag::silu(ag::conv2d(x, p[kConv0W], p[kConv0B], 2, 1));
    g.levels.push_back(ag::silu(ag::conv2d(stem, p[kConv1W], p[kConv1B], 2, 1)));
    g.levels.push_back(ag::silu(ag::conv2d(g.levels[0], p[kConv2W], p[kConv2B], 2, 1)));
    g.levels.push_back(ag::silu(ag::conv2d(g.levels[1], p[kConv3W], p[kConv3B], 2, 1)));

    const std::size_t nq = c.num_queries;
    g.ref = ag::sigmoid(p[kQueryRef]);
    const auto& top = g.levels.back();
    const double top_h = static_cast<double>(top.shape()[1]), top_w = static_cast<double>(top.shape()[2]);
    const auto rx = ag::scale(ag::reshape(ag::slice_cols(g.ref, 0, 1), {nq}), top_w - 1.0);
    const auto ry = ag::scale(ag::reshape(ag::slice_cols(g.ref, 1, 2), {nq}), top_h - 1.0);
    const auto content = ag::add(p[kQueryEmbed], ag::bilinear_sample(top, rx, ry));

    g.offsets = ag::add_row(ag::matmul(content, p[kOffsetW]), p[kOffsetB]);
    g.weights = ag::softmax(ag::add_row(ag::matmul(content, p[kAttnW]), p[kAttnB]));
    g.projection = p[kProj];
    const auto agg = msda::msda_forward(g.levels, g.ref, g.offsets, g.weights, g.projection, c.num_points);

    const auto hidden = ag::silu(ag::add_row(ag::matmul(ag::add(agg, content), p[kHeadW1]), p[kHeadB1]));
    g.logits = ag::add_row(ag::matmul(hidden, p[kClsW]), p[kClsB]);
    // route the reference logits into the centre coordinates
    const auto lift = ag::constant(Tensor::matrix(2, 4, {1, 0, 0, 0, 0, 1, 0, 0}));
    g.boxes = ag::sigmoid(ag::add(ag::add_row(ag::matmul(hidden, p[kBoxW]), p[kBoxB]), ag::matmul(p[kQueryRef], lift)));
    return g;
}

NormalizedBox normalize_box(const Box& b, std::size_t iw, std::size_t ih) {
    const double w = static_cast<double>(iw), h = static_cast<double>(ih);
    return {0.5 * (b.x_min + b.x_max) / w, 0.5 * (b.y_min + b.y_max) / h, b.width() / w, b.height() / h};
}

Box to_pixel_box(const NormalizedBox& b, std::size_t iw, std::size_t ih) {
    const double w = static_cast<double>(iw), h = static_cast<double>(ih);
    return {std::clamp((b.cx - 0.5 * b.w) * w, 0.0, w), std::clamp((b.cy - 0.5 * b.h) * h, 0.0, h),
            std::clamp((b.cx + 0.5 * b.w) * w, 0.0, w), std::clamp((b.cy + 0.5 * b.h) * h, 0.0, h)};
}

ForwardResult read_out(const ForwardGraph& g, std::size_t iw, std::size_t ih, const DetectorConfig& c) {
    ForwardResult r;
    for (const auto& l : g.levels) r.features.levels.push_back(l.value());
    const Tensor& logits = g.logits.value();
    const Tensor& boxes = g.boxes.value();
    const Tensor& ref = g.ref.value();
    const Tensor& off = g.offsets.value();
    const Tensor& wts = g.weights.value();
    const std::size_t nc = logits.dim(1), lk = kNumLevels * c.num_points;
    for (std::size_t q = 0; q < c.num_queries; ++q) {
        std::vector<double> row(logits.data().begin() + static_cast<std::ptrdiff_t>(q * nc),
                                logits.data().begin() + static_cast<std::ptrdiff_t>((q + 1) * nc));
        softmax_inplace(row);
        Detection d;
        d.score = *std::max_element(row.begin(), row.end() - 1);
        d.box = to_pixel_box({boxes.at(q, 0), boxes.at(q, 1), boxes.at(q, 2), boxes.at(q, 3)}, iw, ih);
        d.query_index = q;
        r.detections.push_back(d);

        msda::QuerySample s;
        s.ref = {ref.at(q, 0), ref.at(q, 1)};
        s.points = c.num_points;
        for (std::size_t i = 0; i < lk; ++i) {
            s.offsets.push_back({off.at(q, 2 * i), off.at(q, 2 * i + 1)});
            s.weights.push_back(wts.at(q, i));
        }
        s.projection = g.projection.value();
        r.queries.push_back(std::move(s));
    }
    return r;
}

ForwardResult forward(const RgbImage& image, const ParamSet& params, const DetectorConfig& config) {
    const auto vars = as_vars(params, false);
    const auto g = forward_graph(image_tensor(image), vars, config);
    return read_out(g, image.width, image.height, config);
}

// ---- loss

namespace {

Box cxcywh_to_xyxy(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

void check_assignment(const Assignment& a, std::size_t nq, std::size_t g) {
    std::set<std::size_t> ps, gs;
    for (auto [pi, gi] : a.pairs) {
        if (pi >= nq || gi >= g) throw ValidationError("detection_loss: assignment index out of range");
        if (!ps.insert(pi).second || !gs.insert(gi).second)
            throw ValidationError("detection_loss: assignment is not one-to-one");
    }
    if (a.pairs.size() != std::min(nq, g))
        throw ValidationError("detection_loss: assignment must pair min(N, G) entries");
}

}  // namespace

Tensor matching_cost(const Tensor& logits, const Tensor& boxes, std::span<const NormalizedBox> gt,
                     std::span<const int> gt_classes, const LossWeights& w) {
    require(logits.rank() == 2 && boxes.rank() == 2 && boxes.dim(1) == 4 && logits.dim(0) == boxes.dim(0),
            "matching_cost: expected [N x C] logits and [N x 4] boxes");
    require(gt.size() == gt_classes.size(), "matching_cost: one class per ground truth");
    const std::size_t n = logits.dim(0), nc = logits.dim(1);
    Tensor cost({n, gt.size()});
    for (std::size_t q = 0; q < n; ++q) {
        std::vector<double> prob(logits.data().begin() + static_cast<std::ptrdiff_t>(q * nc),
                                 logits.data().begin() + static_cast<std::ptrdiff_t>((q + 1) * nc));
        softmax_inplace(prob);
        const Box pb = cxcywh_to_xyxy(boxes.at(q, 0), boxes.at(q, 1), boxes.at(q, 2), boxes.at(q, 3));
        for (std::size_t j = 0; j < gt.size(); ++j) {
            const int cls = gt_classes[j];
            require(cls >= 1 && static_cast<std::size_t>(cls) < nc, "matching_cost: class id out of range");
            const auto& b = gt[j];
            const double l1 = std::abs(boxes.at(q, 0) - b.cx) + std::abs(boxes.at(q, 1) - b.cy) +
                              std::abs(boxes.at(q, 2) - b.w) + std::abs(boxes.at(q, 3) - b.h);
            const double gi = giou(pb, cxcywh_to_xyxy(b.cx, b.cy, b.w, b.h));
            cost.at(q, j) = -prob[static_cast<std::size_t>(cls - 1)] + w.l1 * l1 - w.giou * gi;
        }
    }
    return cost;
}

DetectionLossTerms detection_loss(const ag::Var& logits, const ag::Var& boxes, std::span<const NormalizedBox> gt,
                                  std::span<const int> gt_classes, const Assignment& assignment,
                                  const LossWeights& w) {
    require(logits.shape().size() == 2 && boxes.shape().size() == 2 && boxes.shape()[1] == 4 &&
                logits.shape()[0] == boxes.shape()[0],
            "detection_loss: expected [N x C] logits and [N x 4] boxes");
    require(gt.size() == gt_classes.size(), "detection_loss: one class per ground truth");
    const std::size_t n = logits.shape()[0], nc = logits.shape()[1];
    check_assignment(assignment, n, gt.size());

    // classification: weighted mean cross-entropy
    Tensor target({n, nc});
    std::vector<bool> matched(n, false);
    double weight_sum = 0.0;
    for (auto [q, j] : assignment.pairs) {
        const int cls = gt_classes[j];
        require(cls >= 1 && static_cast<std::size_t>(cls) < nc, "detection_loss: class id out of range");
        target.at(q, static_cast<std::size_t>(cls - 1)) = 1.0;
        matched[q] = true;
        weight_sum += 1.0;
    }
    for (std::size_t q = 0; q < n; ++q) {
        if (matched[q]) continue;
        target.at(q, nc - 1) = w.background;
        weight_sum += w.background;
    }
    DetectionLossTerms out;
    ag::Var total = ag::constant(Tensor::scalar(0.0));
    if (weight_sum > 0.0) {
        const auto ce = ag::scale(ag::sum(ag::mul(ag::log_softmax(logits), ag::constant(target))), -1.0 / weight_sum);
        out.classification = ce.item();
        total = ce;
    }

    const std::size_t m = assignment.pairs.size();
    if (m > 0) {
        Tensor select({m, n});
        std::vector<double> g0, g1, g2, g3;
        for (std::size_t i = 0; i < m; ++i) {
            const auto [q, j] = assignment.pairs[i];
            select.at(i, q) = 1.0;
            const auto& b = gt[j];
            g0.push_back(b.cx - 0.5 * b.w);
            g1.push_back(b.cy - 0.5 * b.h);
            g2.push_back(b.cx + 0.5 * b.w);
            g3.push_back(b.cy + 0.5 * b.h);
        }
        std::vector<double> gflat;
        for (std::size_t i = 0; i < m; ++i) {
            const auto& b = gt[assignment.pairs[i].second];
            gflat.insert(gflat.end(), {b.cx, b.cy, b.w, b.h});
        }
        const auto pb = ag::matmul(ag::constant(select), boxes);  // m x 4
        const auto l1 = ag::sum(ag::abs(ag::sub(pb, ag::constant(Tensor::matrix(m, 4, gflat)))));

        auto col = [&](std::size_t i) { return ag::reshape(ag::slice_cols(pb, i, i + 1), {m}); };
        const auto cx = col(0), cy = col(1), bw = col(2), bh = col(3);
        const auto px0 = ag::sub(cx, ag::scale(bw, 0.5)), px1 = ag::add(cx, ag::scale(bw, 0.5));
        const auto py0 = ag::sub(cy, ag::scale(bh, 0.5)), py1 = ag::add(cy, ag::scale(bh, 0.5));
        const auto gx0 = ag::constant(Tensor::vector(g0)), gy0 = ag::constant(Tensor::vector(g1));
        const auto gx1 = ag::constant(Tensor::vector(g2)), gy1 = ag::constant(Tensor::vector(g3));
        const auto iw = ag::relu(ag::sub(ag::minimum(px1, gx1), ag::maximum(px0, gx0)));
        const auto ih = ag::relu(ag::sub(ag::minimum(py1, gy1), ag::maximum(py0, gy0)));
        const auto inter = ag::mul(iw, ih);
        const auto garea = ag::mul(ag::sub(gx1, gx0), ag::sub(gy1, gy0));
        const auto uni = ag::sub(ag::add(ag::mul(bw, bh), garea), inter);
        const auto ew = ag::sub(ag::maximum(px1, gx1), ag::minimum(px0, gx0));
        const auto eh = ag::sub(ag::maximum(py1, gy1), ag::minimum(py0, gy0));
        const auto encl = ag::mul(ew, eh);
        const auto giou_v = ag::sub(ag::div(inter, uni), ag::div(ag::sub(encl, uni), encl));
        const auto giou_loss = ag::add_scalar(ag::neg(ag::sum(giou_v)), static_cast<double>(m));

        const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(gt.size(), 1));
        const auto l1_term = ag::scale(l1, w.l1 * norm);
        const auto giou_term = ag::scale(giou_loss, w.giou * norm);
        out.l1 = l1_term.item();
        out.giou = giou_term.item();
        total = ag::add(total, ag::add(l1_term, giou_term));
    }
    out.total = total;
    return out;
}

}  // namespace oed::detector
