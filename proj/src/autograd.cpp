// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

#include "oed/errors.hpp"
#include "oed/kernels.hpp"
#include "oed/ops.hpp"

namespace oed::ag {

using NodePtr = std::shared_ptr<Node>;

Tensor& Node::grad_buffer() {
    if (grad.shape() != value.shape() || grad.numel() != value.numel()) grad = Tensor(value.shape());
    return grad;
}

const Tensor& Var::grad() const { return node_->grad_buffer(); }

namespace {

Var make(Tensor value, const char* op, std::vector<NodePtr> parents, std::function<void(Node&)> bw) {
    check_finite(value, op);
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    const bool rg = std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
    if (rg) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward = std::move(bw);
    }
    return Var(std::move(n));
}

void same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape())
        throw ValidationError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                              shape_to_string(b.shape()));
}

// Accumulation target for parent i, or nullptr if it does not need a gradient.
double* gbuf(Node& self, std::size_t i) {
    Node& p = *self.parents[i];
    return p.requires_grad ? p.grad_buffer().data().data() : nullptr;
}

template <class F>
Var unary(const Var& a, const char* op, F&& fwd_and_deriv) {
    const auto& av = a.value();
    Tensor out(av.shape());
    Tensor deriv(av.shape());
    for (std::size_t i = 0; i < av.numel(); ++i) {
        auto [y, dy] = fwd_and_deriv(av[i]);
        out[i] = y;
        deriv[i] = dy;
    }
    return make(std::move(out), op, {a.node()}, [deriv = std::move(deriv)](Node& self) {
        double* ga = gbuf(self, 0);
        const auto& g = self.grad;
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * deriv[i];
    });
}

}  // namespace

Var constant(Tensor value) {
    check_finite(value, "constant");
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = "constant";
    return Var(std::move(n));
}

Var parameter(Tensor value) {
    check_finite(value, "parameter");
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = "parameter";
    n->requires_grad = true;
    return Var(std::move(n));
}

Var detach(const Var& v) { return constant(v.value()); }

namespace {

std::vector<Node*> topo_order(const Var& loss) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    Node* root = loss.node().get();
    if (!root->requires_grad) return order;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // parents before children
}

}  // namespace

void backward(const Var& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ValidationError("backward: loss must be a scalar, got " +
                              (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
    auto order = topo_order(loss);
    for (Node* n : order) n->grad_buffer().fill(0.0);
    if (order.empty()) return;
    loss.node()->grad_buffer()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward) (*it)->backward(**it);
}

std::vector<Tensor> gradients(const Var& loss, std::span<const Var> inputs) {
    for (const auto& in : inputs)
        if (in.requires_grad()) in.node()->grad_buffer().fill(0.0);
    backward(loss);
    std::vector<Tensor> out;
    out.reserve(inputs.size());
    for (const auto& in : inputs) out.push_back(in.requires_grad() ? in.node()->grad : Tensor(in.shape()));
    return out;
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    same_shape(a, b, "add");
    Tensor out = a.value();
    kernels::axpy(out.data().data(), 1.0, b.value().data().data(), out.numel());
    return make(std::move(out), "add", {a.node(), b.node()}, [](Node& self) {
        const auto n = self.grad.numel();
        if (double* ga = gbuf(self, 0)) kernels::axpy(ga, 1.0, self.grad.data().data(), n);
        if (double* gb = gbuf(self, 1)) kernels::axpy(gb, 1.0, self.grad.data().data(), n);
    });
}

Var sub(const Var& a, const Var& b) {
    same_shape(a, b, "sub");
    Tensor out = a.value();
    kernels::axpy(out.data().data(), -1.0, b.value().data().data(), out.numel());
    return make(std::move(out), "sub", {a.node(), b.node()}, [](Node& self) {
        const auto n = self.grad.numel();
        if (double* ga = gbuf(self, 0)) kernels::axpy(ga, 1.0, self.grad.data().data(), n);
        if (double* gb = gbuf(self, 1)) kernels::axpy(gb, -1.0, self.grad.data().data(), n);
    });
}

Var mul(const Var& a, const Var& b) {
    same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make(std::move(out), "mul", {a.node(), b.node()}, [](Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        const auto& g = self.grad;
        if (double* ga = gbuf(self, 0))
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
        if (double* gb = gbuf(self, 1))
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    });
}

Var div(const Var& a, const Var& b) {
    same_shape(a, b, "div");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] / b.value()[i];
    return make(std::move(out), "div", {a.node(), b.node()}, [](Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        const auto& g = self.grad;
        if (double* ga = gbuf(self, 0))
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] / bv[i];
        if (double* gb = gbuf(self, 1))
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    });
}

namespace {

Var select_binary(const Var& a, const Var& b, const char* op, bool take_min) {
    same_shape(a, b, op);
    const auto n = a.numel();
    Tensor out(a.shape());
    std::vector<char> from_a(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.value()[i], y = b.value()[i];
        from_a[i] = take_min ? (x <= y) : (x >= y);
        out[i] = from_a[i] ? x : y;
    }
    return make(std::move(out), op, {a.node(), b.node()}, [from_a = std::move(from_a)](Node& self) {
        const auto& g = self.grad;
        double* ga = gbuf(self, 0);
        double* gb = gbuf(self, 1);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            if (from_a[i]) {
                if (ga) ga[i] += g[i];
            } else if (gb) {
                gb[i] += g[i];
            }
        }
    });
}

}  // namespace

Var minimum(const Var& a, const Var& b) { return select_binary(a, b, "minimum", true); }
Var maximum(const Var& a, const Var& b) { return select_binary(a, b, "maximum", false); }

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double s) {
    Tensor out(a.shape());
    kernels::axpy(out.data().data(), s, a.value().data().data(), out.numel());
    return make(std::move(out), "scale", {a.node()}, [s](Node& self) {
        if (double* ga = gbuf(self, 0)) kernels::axpy(ga, s, self.grad.data().data(), self.grad.numel());
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a.value();
    for (auto& v : out.data()) v += s;
    return make(std::move(out), "add_scalar", {a.node()}, [](Node& self) {
        if (double* ga = gbuf(self, 0)) kernels::axpy(ga, 1.0, self.grad.data().data(), self.grad.numel());
    });
}

Var square(const Var& a) {
    return unary(a, "square", [](double x) { return std::pair{x * x, 2.0 * x}; });
}

Var exp(const Var& a) {
    return unary(a, "exp", [](double x) {
        const double y = std::exp(x);
        return std::pair{y, y};
    });
}

Var log(const Var& a) {
    return unary(a, "log", [](double x) { return std::pair{std::log(x), 1.0 / x}; });
}

Var abs(const Var& a) {
    return unary(a, "abs", [](double x) { return std::pair{std::fabs(x), x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0)}; });
}

Var sigmoid(const Var& a) {
    return unary(a, "sigmoid", [](double x) {
        const double y = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        return std::pair{y, y * (1.0 - y)};
    });
}

Var relu(const Var& a) {
    return unary(a, "relu", [](double x) { return std::pair{x > 0 ? x : 0.0, x > 0 ? 1.0 : 0.0}; });
}

Var silu(const Var& a) {
    return unary(a, "silu", [](double x) {
        const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        return std::pair{x * s, s + x * s * (1.0 - s)};
    });
}

Var gelu(const Var& a) {
    // tanh approximation
    return unary(a, "gelu", [](double x) {
        constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
        constexpr double c = 0.044715;
        const double u = k * (x + c * x * x * x);
        const double t = std::tanh(u);
        const double y = 0.5 * x * (1.0 + t);
        const double dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * c * x * x);
        return std::pair{y, dy};
    });
}

Var mul_scalar(const Var& a, const Var& s) {
    require(s.numel() == 1, "mul_scalar: expected a one-element scale");
    const double sv = s.value()[0];
    Tensor out(a.shape());
    kernels::axpy(out.data().data(), sv, a.value().data().data(), out.numel());
    return make(std::move(out), "mul_scalar", {a.node(), s.node()}, [](Node& self) {
        const auto& g = self.grad;
        const auto& av = self.parents[0]->value;
        const double sv = self.parents[1]->value[0];
        if (double* ga = gbuf(self, 0)) kernels::axpy(ga, sv, g.data().data(), g.numel());
        if (double* gs = gbuf(self, 1)) gs[0] += kernels::dot(g.data().data(), av.data().data(), g.numel());
    });
}

Var add_row(const Var& a, const Var& bias) {
    require(a.value().rank() == 2 && bias.numel() == a.shape()[1], "add_row: expected [m x n] and [n]");
    const auto m = a.shape()[0], n = a.shape()[1];
    Tensor out = a.value();
    for (std::size_t i = 0; i < m; ++i) kernels::axpy(out.data().data() + i * n, 1.0, bias.value().data().data(), n);
    return make(std::move(out), "add_row", {a.node(), bias.node()}, [m, n](Node& self) {
        const double* g = self.grad.data().data();
        if (double* ga = gbuf(self, 0)) kernels::axpy(ga, 1.0, g, m * n);
        if (double* gb = gbuf(self, 1))
            for (std::size_t i = 0; i < m; ++i) kernels::axpy(gb, 1.0, g + i * n, n);
    });
}

// ----------------------------------------------------------------- reductions

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return make(Tensor::scalar(s), "sum", {a.node()}, [](Node& self) {
        const double g = self.grad[0];
        if (double* ga = gbuf(self, 0)) {
            const auto n = self.parents[0]->value.numel();
            for (std::size_t i = 0; i < n; ++i) ga[i] += g;
        }
    });
}

Var mean(const Var& a) {
    require(a.numel() > 0, "mean: empty input");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Var sum_rows(const Var& a) {
    require(a.value().rank() == 2, "sum_rows: expected a matrix");
    const auto m = a.shape()[0], n = a.shape()[1];
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += a.value().at(i, j);
    return make(std::move(out), "sum_rows", {a.node()}, [m, n](Node& self) {
        if (double* ga = gbuf(self, 0))
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[i];
    });
}

Var dot(const Var& a, const Var& b) {
    require(a.numel() == b.numel(), "dot: length mismatch");
    const double v = kernels::dot(a.value().data().data(), b.value().data().data(), a.numel());
    return make(Tensor::scalar(v), "dot", {a.node(), b.node()}, [](Node& self) {
        const double g = self.grad[0];
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (double* ga = gbuf(self, 0)) kernels::axpy(ga, g, bv.data().data(), bv.numel());
        if (double* gb = gbuf(self, 1)) kernels::axpy(gb, g, av.data().data(), av.numel());
    });
}

Var sq_diff_sum(const Var& a, const Var& b) {
    same_shape(a, b, "sq_diff_sum");
    const double v = kernels::sq_diff_sum(a.value().data().data(), b.value().data().data(), a.numel());
    return make(Tensor::scalar(v), "sq_diff_sum", {a.node(), b.node()}, [](Node& self) {
        const double g = self.grad[0];
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        const auto n = av.numel();
        if (double* ga = gbuf(self, 0)) {
            kernels::axpy(ga, 2.0 * g, av.data().data(), n);
            kernels::axpy(ga, -2.0 * g, bv.data().data(), n);
        }
        if (double* gb = gbuf(self, 1)) {
            kernels::axpy(gb, 2.0 * g, bv.data().data(), n);
            kernels::axpy(gb, -2.0 * g, av.data().data(), n);
        }
    });
}

// -------------------------------------------------------------- linear algebra

Var matmul(const Var& a, const Var& b) {
    require(a.value().rank() == 2 && b.value().rank() == 2 && a.shape()[1] == b.shape()[0],
            "matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
    const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out({m, n});
    kernels::gemm_nn(m, n, k, a.value().data().data(), b.value().data().data(), out.data().data());
    return make(std::move(out), "matmul", {a.node(), b.node()}, [m, k, n](Node& self) {
        const double* g = self.grad.data().data();
        if (double* ga = gbuf(self, 0)) kernels::gemm_nt(m, k, n, g, self.parents[1]->value.data().data(), ga);
        if (double* gb = gbuf(self, 1)) kernels::gemm_tn(k, n, m, self.parents[0]->value.data().data(), g, gb);
    });
}

Var transpose(const Var& a) {
    require(a.value().rank() == 2, "transpose: expected a matrix");
    const auto m = a.shape()[0], n = a.shape()[1];
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.value().at(i, j);
    return make(std::move(out), "transpose", {a.node()}, [m, n](Node& self) {
        if (double* ga = gbuf(self, 0))
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad.at(j, i);
    });
}

// ---------------------------------------------------------------------- shape

Var reshape(const Var& a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return make(std::move(out), "reshape", {a.node()}, [](Node& self) {
        if (double* ga = gbuf(self, 0)) kernels::axpy(ga, 1.0, self.grad.data().data(), self.grad.numel());
    });
}

Var element(const Var& a, std::size_t i) {
    require(i < a.numel(), "element: index out of range");
    return make(Tensor::scalar(a.value()[i]), "element", {a.node()}, [i](Node& self) {
        if (double* ga = gbuf(self, 0)) ga[i] += self.grad[0];
    });
}

Var stack(std::span<const Var> scalars) {
    std::vector<NodePtr> parents;
    std::vector<double> vals;
    for (const auto& s : scalars) {
        require(s.numel() == 1, "stack: expected scalars");
        parents.push_back(s.node());
        vals.push_back(s.value()[0]);
    }
    return make(Tensor::vector(std::move(vals)), "stack", std::move(parents), [](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i)
            if (double* g = gbuf(self, i)) g[0] += self.grad[i];
    });
}

Var row(const Var& a, std::size_t i) {
    require(a.value().rank() == 2 && i < a.shape()[0], "row: index out of range");
    const auto n = a.shape()[1];
    std::vector<double> vals(a.value().data().begin() + static_cast<std::ptrdiff_t>(i * n),
                             a.value().data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    return make(Tensor::vector(std::move(vals)), "row", {a.node()}, [i, n](Node& self) {
        if (double* ga = gbuf(self, 0)) kernels::axpy(ga + i * n, 1.0, self.grad.data().data(), n);
    });
}

Var slice_cols(const Var& a, std::size_t c0, std::size_t c1) {
    require(a.value().rank() == 2 && c0 < c1 && c1 <= a.shape()[1], "slice_cols: bad column range");
    const auto m = a.shape()[0], n = a.shape()[1], w = c1 - c0;
    Tensor out({m, w});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out.at(i, j) = a.value().at(i, c0 + j);
    return make(std::move(out), "slice_cols", {a.node()}, [m, n, w, c0](Node& self) {
        if (double* ga = gbuf(self, 0))
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j) ga[i * n + c0 + j] += self.grad.at(i, j);
    });
}

Var concat_rows(std::span<const Var> parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    const auto n = parts[0].shape().at(1);
    std::size_t m = 0;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        require(p.value().rank() == 2 && p.shape()[1] == n, "concat_rows: column mismatch");
        m += p.shape()[0];
        parents.push_back(p.node());
    }
    Tensor out({m, n});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
        off += p.numel();
    }
    return make(std::move(out), "concat_rows", std::move(parents), [](Node& self) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            const auto cnt = self.parents[i]->value.numel();
            if (double* g = gbuf(self, i)) kernels::axpy(g, 1.0, self.grad.data().data() + off, cnt);
            off += cnt;
        }
    });
}

Var region_patches(const Var& map, std::size_t y0, std::size_t y1, std::size_t x0, std::size_t x1) {
    require(map.value().rank() == 3, "region_patches: expected C x H x W");
    const auto c = map.shape()[0], h = map.shape()[1], w = map.shape()[2];
    require(y0 < y1 && y1 <= h && x0 < x1 && x1 <= w, "region_patches: empty or out-of-range region");
    const auto rw = x1 - x0, p = (y1 - y0) * rw;
    Tensor out({p, c});
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) out.at((y - y0) * rw + (x - x0), ch) = map.value().at(ch, y, x);
    return make(std::move(out), "region_patches", {map.node()}, [=](Node& self) {
        if (double* g = gbuf(self, 0))
            for (std::size_t y = y0; y < y1; ++y)
                for (std::size_t x = x0; x < x1; ++x)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        g[(ch * h + y) * w + x] += self.grad.at((y - y0) * rw + (x - x0), ch);
    });
}

Var spatial_mean(const Var& map) {
    require(map.value().rank() == 3 && map.numel() > 0, "spatial_mean: expected non-empty C x H x W");
    const auto c = map.shape()[0], hw = map.shape()[1] * map.shape()[2];
    Tensor out({c});
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i) s += map.value()[ch * hw + i];
        out[ch] = s / static_cast<double>(hw);
    }
    return make(std::move(out), "spatial_mean", {map.node()}, [c, hw](Node& self) {
        if (double* g = gbuf(self, 0))
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double v = self.grad[ch] / static_cast<double>(hw);
                for (std::size_t i = 0; i < hw; ++i) g[ch * hw + i] += v;
            }
    });
}

Var spatial_max(const Var& map) {
    require(map.value().rank() == 3 && map.numel() > 0, "spatial_max: expected non-empty C x H x W");
    const auto c = map.shape()[0], hw = map.shape()[1] * map.shape()[2];
    Tensor out({c});
    std::vector<std::size_t> arg(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < hw; ++i)
            if (map.value()[ch * hw + i] > map.value()[ch * hw + best]) best = i;
        arg[ch] = best;
        out[ch] = map.value()[ch * hw + best];
    }
    return make(std::move(out), "spatial_max", {map.node()}, [c, hw, arg = std::move(arg)](Node& self) {
        if (double* g = gbuf(self, 0))
            for (std::size_t ch = 0; ch < c; ++ch) g[ch * hw + arg[ch]] += self.grad[ch];
    });
}

// ------------------------------------------------------------------- softmax

namespace {

std::pair<std::size_t, std::size_t> rows_cols(const Var& a, const char* op) {
    const auto& s = a.shape();
    if (s.size() == 1) return {1, s[0]};
    if (s.size() == 2) return {s[0], s[1]};
    throw ValidationError(std::string(op) + ": expected a vector or matrix");
}

}  // namespace

Var softmax(const Var& a) {
    const auto [m, n] = rows_cols(a, "softmax");
    Tensor out = a.value();
    for (std::size_t i = 0; i < m; ++i) softmax_inplace(out.data().subspan(i * n, n));
    Tensor y = out;
    return make(std::move(out), "softmax", {a.node()}, [m, n, y = std::move(y)](Node& self) {
        double* ga = gbuf(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < m; ++i) {
            const double* g = self.grad.data().data() + i * n;
            const double* yr = y.data().data() + i * n;
            const double s = kernels::dot(g, yr, n);
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += yr[j] * (g[j] - s);
        }
    });
}

Var log_softmax(const Var& a) {
    const auto [m, n] = rows_cols(a, "log_softmax");
    Tensor out = a.value();
    Tensor probs = a.value();
    for (std::size_t i = 0; i < m; ++i) {
        auto row_in = a.value().data().subspan(i * n, n);
        double mx = row_in[0];
        for (double v : row_in) mx = std::max(mx, v);
        double s = 0.0;
        for (double v : row_in) s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = row_in[j] - lse;
            probs[i * n + j] = std::exp(out[i * n + j]);
        }
    }
    return make(std::move(out), "log_softmax", {a.node()}, [m, n, probs = std::move(probs)](Node& self) {
        double* ga = gbuf(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += self.grad[i * n + j];
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[i * n + j] - probs[i * n + j] * s;
        }
    });
}

// -------------------------------------------------------------------- cosine

namespace {

struct CosParts {
    double cos, na, nb;
};

CosParts cos_parts(const double* a, const double* b, std::size_t d) {
    const double na = std::sqrt(kernels::dot(a, a, d));
    const double nb = std::sqrt(kernels::dot(b, b, d));
    if (na == 0.0 || nb == 0.0) return {0.0, na, nb};
    return {kernels::dot(a, b, d) / (na * nb), na, nb};
}

// d cos / d a accumulated with weight g.
void cos_grad(const double* a, const double* b, std::size_t d, const CosParts& p, double g, double* ga) {
    if (p.na == 0.0 || p.nb == 0.0) return;
    kernels::axpy(ga, g / (p.na * p.nb), b, d);
    kernels::axpy(ga, -g * p.cos / (p.na * p.na), a, d);
}

}  // namespace

Var cosine_similarity(const Var& a, const Var& b) {
    require(a.numel() == b.numel(), "cosine_similarity: length mismatch");
    const auto d = a.numel();
    const auto p = cos_parts(a.value().data().data(), b.value().data().data(), d);
    return make(Tensor::scalar(p.cos), "cosine_similarity", {a.node(), b.node()}, [d, p](Node& self) {
        const double* av = self.parents[0]->value.data().data();
        const double* bv = self.parents[1]->value.data().data();
        const double g = self.grad[0];
        if (double* ga = gbuf(self, 0)) cos_grad(av, bv, d, p, g, ga);
        if (double* gb = gbuf(self, 1)) cos_grad(bv, av, d, {p.cos, p.nb, p.na}, g, gb);
    });
}

Var cosine_matrix(const Var& a, const Var& b) {
    require(a.value().rank() == 2 && b.value().rank() == 2 && a.shape()[1] == b.shape()[1],
            "cosine_matrix: expected [J x d] and [K x d] with shared d");
    const auto jn = a.shape()[0], kn = b.shape()[0], d = a.shape()[1];
    Tensor out({jn, kn});
    std::vector<CosParts> parts(jn * kn);
    for (std::size_t j = 0; j < jn; ++j)
        for (std::size_t k = 0; k < kn; ++k) {
            parts[j * kn + k] = cos_parts(a.value().data().data() + j * d, b.value().data().data() + k * d, d);
            out.at(j, k) = parts[j * kn + k].cos;
        }
    return make(std::move(out), "cosine_matrix", {a.node(), b.node()},
                [jn, kn, d, parts = std::move(parts)](Node& self) {
                    const double* av = self.parents[0]->value.data().data();
                    const double* bv = self.parents[1]->value.data().data();
                    double* ga = gbuf(self, 0);
                    double* gb = gbuf(self, 1);
                    for (std::size_t j = 0; j < jn; ++j)
                        for (std::size_t k = 0; k < kn; ++k) {
                            const auto& p = parts[j * kn + k];
                            const double g = self.grad.at(j, k);
                            if (ga) cos_grad(av + j * d, bv + k * d, d, p, g, ga + j * d);
                            if (gb) cos_grad(bv + k * d, av + j * d, d, {p.cos, p.nb, p.na}, g, gb + k * d);
                        }
                });
}

// ---------------------------------------------------------------------- conv

Var conv2d(const Var& input, const Var& weight, const Var& bias, std::size_t stride, std::size_t pad) {
    require(input.value().rank() == 3 && weight.value().rank() == 4, "conv2d: expected C x H x W input and 4-d weight");
    const auto ci = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
    const auto co = weight.shape()[0], kh = weight.shape()[2], kw = weight.shape()[3];
    require(weight.shape()[1] == ci, "conv2d: channel mismatch");
    require(bias.numel() == co, "conv2d: bias length mismatch");
    require(stride >= 1 && h + 2 * pad >= kh && w + 2 * pad >= kw, "conv2d: kernel larger than padded input");
    const auto ho = (h + 2 * pad - kh) / stride + 1;
    const auto wo = (w + 2 * pad - kw) / stride + 1;
    const auto kk = ci * kh * kw, hw = ho * wo;

    // im2col: [kk x hw]
    Tensor cols({kk, hw});
    const double* in = input.value().data().data();
    for (std::size_t c = 0; c < ci; ++c)
        for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
                double* dst = cols.data().data() + ((c * kh + ky) * kw + kx) * hw;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                        dst[oy * wo + ox] = (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                                             ix >= static_cast<std::ptrdiff_t>(w))
                                                ? 0.0
                                                : in[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
                    }
                }
            }
    Tensor out({co, ho, wo});
    for (std::size_t o = 0; o < co; ++o) std::fill_n(out.data().data() + o * hw, hw, bias.value()[o]);
    kernels::gemm_nn(co, hw, kk, weight.value().data().data(), cols.data().data(), out.data().data());

    return make(std::move(out), "conv2d", {input.node(), weight.node(), bias.node()},
                [=, cols = std::move(cols)](Node& self) {
                    const double* g = self.grad.data().data();
                    if (double* gw = gbuf(self, 1)) kernels::gemm_nt(co, kk, hw, g, cols.data().data(), gw);
                    if (double* gbias = gbuf(self, 2))
                        for (std::size_t o = 0; o < co; ++o)
                            for (std::size_t i = 0; i < hw; ++i) gbias[o] += g[o * hw + i];
                    if (double* gin = gbuf(self, 0)) {
                        Tensor dcols({kk, hw});
                        kernels::gemm_tn(kk, hw, co, self.parents[1]->value.data().data(), g, dcols.data().data());
                        for (std::size_t c = 0; c < ci; ++c)
                            for (std::size_t ky = 0; ky < kh; ++ky)
                                for (std::size_t kx = 0; kx < kw; ++kx) {
                                    const double* src = dcols.data().data() + ((c * kh + ky) * kw + kx) * hw;
                                    for (std::size_t oy = 0; oy < ho; ++oy) {
                                        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                                        static_cast<std::ptrdiff_t>(pad);
                                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                        for (std::size_t ox = 0; ox < wo; ++ox) {
                                            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                            static_cast<std::ptrdiff_t>(pad);
                                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                            gin[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                                                src[oy * wo + ox];
                                        }
                                    }
                                }
                    }
                });
}

// ------------------------------------------------------------------ bilinear

Var bilinear_sample(const Var& grid, const Var& xs, const Var& ys) {
    require(grid.value().rank() == 3 && grid.numel() > 0, "bilinear_sample: expected a non-empty C x H x W grid");
    require(xs.numel() == ys.numel(), "bilinear_sample: coordinate length mismatch");
    const auto c = grid.shape()[0];
    const auto p = xs.numel();
    Tensor out({p, c});
    for (std::size_t i = 0; i < p; ++i)
        bilinear_accumulate(grid.value(), xs.value()[i], ys.value()[i], 1.0, out.data().subspan(i * c, c));
    return make(std::move(out), "bilinear_sample", {grid.node(), xs.node(), ys.node()}, [c, p](Node& self) {
        const auto& gv = self.parents[0]->value;
        const auto h = static_cast<std::ptrdiff_t>(gv.dim(1));
        const auto w = static_cast<std::ptrdiff_t>(gv.dim(2));
        const auto plane = static_cast<std::size_t>(h * w);
        const auto& xv = self.parents[1]->value;
        const auto& yv = self.parents[2]->value;
        double* gg = gbuf(self, 0);
        double* gx = gbuf(self, 1);
        double* gy = gbuf(self, 2);
        for (std::size_t i = 0; i < p; ++i) {
            const auto tap = bilinear_tap(xv[i], yv[i]);
            const double fx = tap.fx, fy = tap.fy;
            const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
            const double dwx[4] = {-(1 - fy), 1 - fy, -fy, fy};
            const double dwy[4] = {-(1 - fx), -fx, 1 - fx, fx};
            const std::ptrdiff_t cx[4] = {tap.x0, tap.x0 + 1, tap.x0, tap.x0 + 1};
            const std::ptrdiff_t cy[4] = {tap.y0, tap.y0, tap.y0 + 1, tap.y0 + 1};
            const double* g = self.grad.data().data() + i * c;
            for (int t = 0; t < 4; ++t) {
                if (cx[t] < 0 || cy[t] < 0 || cx[t] >= w || cy[t] >= h) continue;
                const auto off = static_cast<std::size_t>(cy[t] * w + cx[t]);
                if (gg && wts[t] != 0.0)
                    for (std::size_t ch = 0; ch < c; ++ch) gg[ch * plane + off] += g[ch] * wts[t];
                if (gx || gy) {
                    double gv_dot = 0.0;
                    for (std::size_t ch = 0; ch < c; ++ch) gv_dot += g[ch] * gv.data()[ch * plane + off];
                    if (gx) gx[i] += gv_dot * dwx[t];
                    if (gy) gy[i] += gv_dot * dwy[t];
                }
            }
        }
    });
}

}  // namespace oed::ag
