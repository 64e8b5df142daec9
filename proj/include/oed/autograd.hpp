// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode differentiation over a recorded op graph. A Var is a cheap
// handle to a node; building an expression records the graph, and
// `gradients` walks it once in reverse topological order.
//
// Every op checks its forward output for NaN/Inf and throws NumericalError.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "oed/tensor.hpp"

namespace oed::ag {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;

    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t numel() const { return node_->value.numel(); }
    double item() const { return node_->value.item(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool defined() const { return node_ != nullptr; }
    const char* op() const { return node_->op; }

    /// Gradient left by the last `gradients` call; zeros if unreached.
    const Tensor& grad() const;

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);
/// Same value, cut from the graph.
Var detach(const Var& v);

/// Differentiates a scalar loss. Returns one gradient per input, shaped like
/// the input; inputs that do not require grad get zeros.
std::vector<Tensor> gradients(const Var& loss, std::span<const Var> inputs);
/// Populates grad() on every reachable node that requires grad.
void backward(const Var& loss);

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);
Var maximum(const Var& a, const Var& b);

Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var abs(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var silu(const Var& a);
Var gelu(const Var& a);

/// a * s with s a one-element Var.
Var mul_scalar(const Var& a, const Var& s);
/// [m x n] + [n] broadcast over rows.
Var add_row(const Var& a, const Var& bias);

Var sum(const Var& a);
Var mean(const Var& a);
/// [m x n] -> [m]
Var sum_rows(const Var& a);
Var dot(const Var& a, const Var& b);
/// Sum of squared differences; scalar.
Var sq_diff_sum(const Var& a, const Var& b);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var reshape(const Var& a, Shape shape);
/// Element i as a scalar.
Var element(const Var& a, std::size_t i);
/// Stack scalars into a vector.
Var stack(std::span<const Var> scalars);
/// Row i of a matrix as a vector.
Var row(const Var& a, std::size_t i);
/// [m x n] -> [m x (c1 - c0)]
Var slice_cols(const Var& a, std::size_t c0, std::size_t c1);
/// Concatenate matrices with equal column counts.
Var concat_rows(std::span<const Var> parts);
/// C x H x W region [y0,y1) x [x0,x1) flattened to [(y1-y0)(x1-x0) x C].
Var region_patches(const Var& map, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1);
/// C x H x W -> C, spatial mean / max.
Var spatial_mean(const Var& map);
Var spatial_max(const Var& map);

/// Softmax / log-softmax of a vector or of each row of a matrix.
Var softmax(const Var& a);
Var log_softmax(const Var& a);

/// Cosine similarity of two vectors (0 for a zero vector, with zero gradient).
Var cosine_similarity(const Var& a, const Var& b);
/// [J x d], [K x d] -> [J x K]
Var cosine_matrix(const Var& a, const Var& b);

/// input C x H x W, weight Co x C x kh x kw, bias Co.
Var conv2d(const Var& input, const Var& weight, const Var& bias, std::size_t stride,
           std::size_t pad);

/// Samples a C x H x W grid at P points (xs, ys each of length P) with zero
/// padding; returns [P x C]. Differentiable w.r.t. grid and coordinates.
Var bilinear_sample(const Var& grid, const Var& xs, const Var& ys);

}  // namespace oed::ag
