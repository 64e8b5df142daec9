// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>

#include "oed/adapter.hpp"
#include "oed/autograd.hpp"
#include "oed/detector.hpp"
#include "oed/distill.hpp"
#include "oed/harness.hpp"
#include "oed/hungarian.hpp"
#include "oed/msda.hpp"
#include "oed/occlusion.hpp"
#include "oed/ops.hpp"
#include "oed/rng.hpp"

namespace oed::gradcheck {

namespace {

using Fn = std::function<ag::Var(std::span<const ag::Var>)>;

struct Instance {
    std::vector<Tensor> inputs;
    std::vector<bool> frozen;  // must receive exactly zero gradient
    Fn fn;
};

using Maker = std::function<Instance(Rng&)>;

struct Check {
    std::string name;
    Maker make;
};

// ---- random tensors

Tensor randn(Rng& rng, Shape shape, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = rng.normal(0.0, scale);
    return t;
}

Tensor uniform(Rng& rng, Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = rng.uniform(lo, hi);
    return t;
}

/// Normal entries pushed at least `gap` away from zero.
Tensor away_from_zero(Rng& rng, Shape shape, double gap = 0.05) {
    Tensor t = randn(rng, std::move(shape));
    for (double& v : t.storage())
        if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
    return t;
}

/// Coordinates in [lo, hi] kept off the integer lattice.
Tensor off_lattice(Rng& rng, std::size_t n, double lo, double hi) {
    Tensor t({n});
    for (double& v : t.storage()) {
        const double base = std::floor(rng.uniform(lo, hi));
        v = base + rng.uniform(0.05, 0.95);
    }
    return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

std::vector<ag::Var> constants(const std::vector<Tensor>& ts) {
    std::vector<ag::Var> out;
    for (const auto& t : ts) out.push_back(ag::constant(t));
    return out;
}

/// Reduces a tensor-valued op to a scalar with a fixed random projection.
Instance projected(Rng& rng, std::vector<Tensor> inputs, std::function<ag::Var(std::span<const ag::Var>)> op) {
    const auto out = op(constants(inputs));
    const auto w = ag::constant(randn(rng, out.shape()));
    Instance inst;
    inst.frozen.assign(inputs.size(), false);
    inst.inputs = std::move(inputs);
    inst.fn = [op, w](std::span<const ag::Var> v) { return ag::sum(ag::mul(op(v), w)); };
    return inst;
}

double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kRelativeFloor}); }

// ---- generic runner

CheckResult run_check(const Check& check, const SuiteOptions& opt, Rng& rng) {
    CheckResult r;
    r.name = check.name;
    for (std::size_t it = 0; it < opt.instances; ++it) {
        Instance inst = check.make(rng);
        if (inst.frozen.size() != inst.inputs.size()) inst.frozen.assign(inst.inputs.size(), false);
        std::vector<ag::Var> vars;
        for (const auto& t : inst.inputs) vars.push_back(ag::parameter(t));
        const auto loss = inst.fn(vars);
        require(loss.numel() == 1, "gradcheck: loss of '" + check.name + "' is not scalar");
        auto grads = ag::gradients(loss, vars);
        if (opt.corrupt == check.name) {
            for (std::size_t i = 0; i < grads.size(); ++i) {
                if (inst.frozen[i] || grads[i].numel() == 0) continue;
                grads[i][0] += 1e-2 * (1.0 + std::abs(grads[i][0]));
                break;
            }
        }
        for (std::size_t i = 0; i < inst.inputs.size(); ++i) {
            if (inst.frozen[i]) {
                for (double g : grads[i].data())
                    if (g != 0.0) r.teacher_grad_zero = false;
                continue;
            }
            for (std::size_t j = 0; j < inst.inputs[i].numel(); ++j) {
                auto probe = inst.inputs;
                const double x = probe[i][j];
                probe[i][j] = x + kStep;
                const double fp = inst.fn(constants(probe)).item();
                probe[i][j] = x - kStep;
                const double fm = inst.fn(constants(probe)).item();
                const double num = (fp - fm) / (2.0 * kStep);
                const double e = rel_err(grads[i][j], num);
                ++r.entries;
                if (e > r.max_relative_error) {
                    r.max_relative_error = e;
                    std::ostringstream os;
                    os.precision(10);
                    os << "instance " << it << " input " << i << " entry " << j << ": analytic " << grads[i][j]
                       << " numeric " << num;
                    r.detail = os.str();
                }
            }
        }
        ++r.instances;
    }
    r.passed = r.max_relative_error <= opt.tolerance && r.teacher_grad_zero && r.instances >= 1;
    return r;
}

// ---- op checks

using ag::Var;

Check unary(const std::string& name, Var (*op)(const Var&), std::function<Tensor(Rng&, Shape)> gen) {
    return {name, [op, gen](Rng& rng) {
                const Shape s{pick(rng, 1, 3), pick(rng, 1, 4)};
                return projected(rng, {gen(rng, s)}, [op](std::span<const Var> v) { return op(v[0]); });
            }};
}

Check binary(const std::string& name, Var (*op)(const Var&, const Var&),
             std::function<std::pair<Tensor, Tensor>(Rng&, Shape)> gen) {
    return {name, [op, gen](Rng& rng) {
                const Shape s{pick(rng, 1, 3), pick(rng, 1, 4)};
                auto [a, b] = gen(rng, s);
                return projected(rng, {a, b}, [op](std::span<const Var> v) { return op(v[0], v[1]); });
            }};
}

std::vector<Check> op_checks() {
    auto normal = [](Rng& rng, Shape s) { return randn(rng, std::move(s)); };
    auto two_normal = [](Rng& rng, Shape s) { return std::pair{randn(rng, s), randn(rng, s)}; };
    std::vector<Check> c;
    c.push_back(binary("op.add", ag::add, two_normal));
    c.push_back(binary("op.sub", ag::sub, two_normal));
    c.push_back(binary("op.mul", ag::mul, two_normal));
    c.push_back(binary("op.div", ag::div, [](Rng& rng, Shape s) {
        Tensor b = uniform(rng, s, 0.5, 2.0);
        for (double& v : b.storage())
            if (rng.uniform() < 0.5) v = -v;
        return std::pair{randn(rng, s), b};
    }));
    auto separated = [](Rng& rng, Shape s) {
        Tensor a = randn(rng, s), b = randn(rng, s);
        for (std::size_t i = 0; i < a.numel(); ++i)
            if (std::abs(a[i] - b[i]) < 0.05) b[i] = a[i] + 0.1;
        return std::pair{a, b};
    };
    c.push_back(binary("op.minimum", ag::minimum, separated));
    c.push_back(binary("op.maximum", ag::maximum, separated));
    c.push_back(unary("op.neg", ag::neg, normal));
    c.push_back(unary("op.square", ag::square, normal));
    c.push_back(unary("op.exp", ag::exp, normal));
    c.push_back(unary("op.log", ag::log, [](Rng& rng, Shape s) { return uniform(rng, std::move(s), 0.3, 3.0); }));
    c.push_back(unary("op.abs", ag::abs, [](Rng& rng, Shape s) { return away_from_zero(rng, std::move(s)); }));
    c.push_back(unary("op.sigmoid", ag::sigmoid, normal));
    c.push_back(unary("op.relu", ag::relu, [](Rng& rng, Shape s) { return away_from_zero(rng, std::move(s)); }));
    c.push_back(unary("op.silu", ag::silu, normal));
    c.push_back(unary("op.gelu", ag::gelu, normal));
    c.push_back(unary("op.transpose", ag::transpose, normal));
    c.push_back(unary("op.sum", ag::sum, normal));
    c.push_back(unary("op.mean", ag::mean, normal));
    c.push_back(unary("op.sum_rows", ag::sum_rows, normal));
    c.push_back(unary("op.softmax_rows", ag::softmax, normal));
    c.push_back(unary("op.log_softmax_rows", ag::log_softmax, normal));
    c.push_back({"op.softmax_vector", [](Rng& rng) {
                     return projected(rng, {randn(rng, {pick(rng, 1, 6)}, 2.0)},
                                      [](std::span<const Var> v) { return ag::softmax(v[0]); });
                 }});
    c.push_back({"op.scale", [](Rng& rng) {
                     const double s = rng.uniform(-2, 2);
                     return projected(rng, {randn(rng, {3, 2})}, [s](std::span<const Var> v) { return ag::scale(v[0], s); });
                 }});
    c.push_back({"op.add_scalar", [](Rng& rng) {
                     const double s = rng.uniform(-2, 2);
                     return projected(rng, {randn(rng, {2, 3})},
                                      [s](std::span<const Var> v) { return ag::add_scalar(v[0], s); });
                 }});
    c.push_back({"op.mul_scalar", [](Rng& rng) {
                     return projected(rng, {randn(rng, {2, 3}), randn(rng, {1})},
                                      [](std::span<const Var> v) { return ag::mul_scalar(v[0], v[1]); });
                 }});
    c.push_back({"op.add_row", [](Rng& rng) {
                     const std::size_t m = pick(rng, 1, 3), n = pick(rng, 1, 4);
                     return projected(rng, {randn(rng, {m, n}), randn(rng, {n})},
                                      [](std::span<const Var> v) { return ag::add_row(v[0], v[1]); });
                 }});
    c.push_back({"op.dot", [](Rng& rng) {
                     const std::size_t n = pick(rng, 1, 6);
                     return projected(rng, {randn(rng, {n}), randn(rng, {n})},
                                      [](std::span<const Var> v) { return ag::dot(v[0], v[1]); });
                 }});
    c.push_back({"op.sq_diff_sum", [](Rng& rng) {
                     const Shape s{pick(rng, 1, 3), pick(rng, 1, 3)};
                     return projected(rng, {randn(rng, s), randn(rng, s)},
                                      [](std::span<const Var> v) { return ag::sq_diff_sum(v[0], v[1]); });
                 }});
    c.push_back({"op.matmul", [](Rng& rng) {
                     const std::size_t m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
                     return projected(rng, {randn(rng, {m, k}), randn(rng, {k, n})},
                                      [](std::span<const Var> v) { return ag::matmul(v[0], v[1]); });
                 }});
    c.push_back({"op.reshape", [](Rng& rng) {
                     return projected(rng, {randn(rng, {2, 6})},
                                      [](std::span<const Var> v) { return ag::reshape(v[0], {3, 4}); });
                 }});
    c.push_back({"op.element", [](Rng& rng) {
                     const std::size_t n = pick(rng, 1, 6), i = pick(rng, 0, n - 1);
                     return projected(rng, {randn(rng, {n})}, [i](std::span<const Var> v) { return ag::element(v[0], i); });
                 }});
    c.push_back({"op.stack", [](Rng& rng) {
                     return projected(rng, {randn(rng, {}), randn(rng, {}), randn(rng, {})}, [](std::span<const Var> v) {
                         return ag::stack(v);
                     });
                 }});
    c.push_back({"op.row", [](Rng& rng) {
                     const std::size_t m = pick(rng, 1, 4), i = pick(rng, 0, m - 1);
                     return projected(rng, {randn(rng, {m, 3})}, [i](std::span<const Var> v) { return ag::row(v[0], i); });
                 }});
    c.push_back({"op.slice_cols", [](Rng& rng) {
                     const std::size_t n = pick(rng, 2, 5), c0 = pick(rng, 0, n - 1), c1 = pick(rng, c0 + 1, n);
                     return projected(rng, {randn(rng, {3, n})},
                                      [c0, c1](std::span<const Var> v) { return ag::slice_cols(v[0], c0, c1); });
                 }});
    c.push_back({"op.concat_rows", [](Rng& rng) {
                     const std::size_t n = pick(rng, 1, 3);
                     return projected(rng, {randn(rng, {pick(rng, 1, 3), n}), randn(rng, {pick(rng, 1, 3), n})},
                                      [](std::span<const Var> v) { return ag::concat_rows(v); });
                 }});
    c.push_back({"op.region_patches", [](Rng& rng) {
                     const std::size_t h = pick(rng, 2, 5), w = pick(rng, 2, 5);
                     const std::size_t y0 = pick(rng, 0, h - 1), y1 = pick(rng, y0 + 1, h);
                     const std::size_t x0 = pick(rng, 0, w - 1), x1 = pick(rng, x0 + 1, w);
                     return projected(rng, {randn(rng, {pick(rng, 1, 3), h, w})}, [=](std::span<const Var> v) {
                         return ag::region_patches(v[0], y0, y1, x0, x1);
                     });
                 }});
    c.push_back({"op.spatial_mean", [](Rng& rng) {
                     return projected(rng, {randn(rng, {pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)})},
                                      [](std::span<const Var> v) { return ag::spatial_mean(v[0]); });
                 }});
    c.push_back({"op.spatial_max", [](Rng& rng) {
                     return projected(rng, {randn(rng, {pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4)})},
                                      [](std::span<const Var> v) { return ag::spatial_max(v[0]); });
                 }});
    c.push_back({"op.cosine_similarity", [](Rng& rng) {
                     const std::size_t n = pick(rng, 2, 6);
                     return projected(rng, {randn(rng, {n}), randn(rng, {n})},
                                      [](std::span<const Var> v) { return ag::cosine_similarity(v[0], v[1]); });
                 }});
    c.push_back({"op.cosine_matrix", [](Rng& rng) {
                     const std::size_t d = pick(rng, 2, 5);
                     return projected(rng, {randn(rng, {pick(rng, 1, 4), d}), randn(rng, {pick(rng, 1, 4), d})},
                                      [](std::span<const Var> v) { return ag::cosine_matrix(v[0], v[1]); });
                 }});
    c.push_back({"op.conv2d", [](Rng& rng) {
                     const std::size_t ci = pick(rng, 1, 3), co = pick(rng, 1, 3), k = pick(rng, 1, 3);
                     const std::size_t stride = pick(rng, 1, 2), pad = pick(rng, 0, 1);
                     const std::size_t h = pick(rng, k, 6), w = pick(rng, k, 6);
                     return projected(rng, {randn(rng, {ci, h, w}), randn(rng, {co, ci, k, k}), randn(rng, {co})},
                                      [=](std::span<const Var> v) { return ag::conv2d(v[0], v[1], v[2], stride, pad); });
                 }});
    c.push_back({"op.bilinear_sample", [](Rng& rng) {
                     const std::size_t h = pick(rng, 2, 5), w = pick(rng, 2, 5), p = pick(rng, 1, 4);
                     return projected(rng,
                                      {randn(rng, {pick(rng, 1, 3), h, w}),
                                       off_lattice(rng, p, -1.0, static_cast<double>(w)),
                                       off_lattice(rng, p, -1.0, static_cast<double>(h))},
                                      [](std::span<const Var> v) { return ag::bilinear_sample(v[0], v[1], v[2]); });
                 }});
    return c;
}

// ---- module checks

bool near_lattice(const msda::SampleLocations& s, double margin) {
    for (const auto* group : {&s.xs, &s.ys})
        for (const auto& v : *group)
            for (double x : v.value().data()) {
                const double f = x - std::floor(x);
                if (f < margin || f > 1.0 - margin) return true;
            }
    return false;
}

Check msda_check() {
    return {"msda.forward", [](Rng& rng) {
                for (;;) {
                    const std::size_t levels = pick(rng, 1, 3), k = pick(rng, 1, 4), c = pick(rng, 1, 3),
                                      q = pick(rng, 1, 2);
                    std::vector<Tensor> in;
                    for (std::size_t l = 0; l < levels; ++l) in.push_back(randn(rng, {c, pick(rng, 2, 5), pick(rng, 2, 5)}));
                    in.push_back(uniform(rng, {q, 2}, 0.05, 0.95));
                    in.push_back(uniform(rng, {q, levels * k * 2}, -1.5, 1.5));
                    in.push_back(randn(rng, {q, levels * k}));
                    in.push_back(randn(rng, {c, c}));
                    const auto cv = constants(in);
                    const std::span<const Var> lv(cv.data(), levels);
                    if (near_lattice(msda::sample_locations(lv, cv[levels], cv[levels + 1], k), 1e-3)) continue;
                    return projected(rng, in, [levels, k](std::span<const Var> v) {
                        return msda::msda_forward(v.first(levels), v[levels], v[levels + 1], ag::softmax(v[levels + 2]),
                                                  v[levels + 3], k);
                    });
                }
            }};
}

Check adapter_check() {
    return {"adapter.forward", [](Rng& rng) {
                const std::size_t d = pick(rng, 2, 4), p = pick(rng, 1, 4);
                std::vector<Tensor> in{randn(rng, {p, d})};
                for (std::size_t l = 0; l < adapter::kLayers; ++l) {
                    in.push_back(randn(rng, {d, d}, 0.5));
                    in.push_back(randn(rng, {d, d}, 0.5));
                    in.push_back(randn(rng, {d, d}, 0.5));
                    in.push_back(randn(rng, {d, 2 * d}, 0.5));
                    in.push_back(randn(rng, {2 * d, d}, 0.5));
                }
                return projected(rng, in, [](std::span<const Var> v) { return adapter::adapter_forward(v[0], v.subspan(1)); });
            }};
}

/// Pyramid pair (teacher, student) with matching shapes.
std::pair<std::vector<Tensor>, std::vector<Tensor>> pyramid_pair(Rng& rng, std::size_t levels, std::size_t c) {
    std::vector<Tensor> t, s;
    for (std::size_t l = 0; l < levels; ++l) {
        const Shape shape{c, pick(rng, 2, 5), pick(rng, 2, 5)};
        t.push_back(randn(rng, shape));
        s.push_back(randn(rng, shape));
    }
    return {t, s};
}

/// Inputs are teacher levels (frozen) followed by student levels.
Instance teacher_student(std::vector<Tensor> t, std::vector<Tensor> s,
                         std::function<Var(std::span<const Var>, std::span<const Var>)> loss) {
    const std::size_t levels = t.size();
    Instance inst;
    inst.inputs = std::move(t);
    inst.inputs.insert(inst.inputs.end(), s.begin(), s.end());
    inst.frozen.assign(2 * levels, false);
    std::fill(inst.frozen.begin(), inst.frozen.begin() + static_cast<std::ptrdiff_t>(levels), true);
    inst.fn = [levels, loss](std::span<const Var> v) { return loss(v.first(levels), v.subspan(levels)); };
    return inst;
}

Check plain_loss_check() {
    return {"loss.plain_feature", [](Rng& rng) {
                auto [t, s] = pyramid_pair(rng, pick(rng, 1, 3), pick(rng, 1, 3));
                return teacher_student(t, s, [](std::span<const Var> tv, std::span<const Var> sv) {
                    return distill::plain_feature_loss(tv, sv);
                });
            }};
}

Check candidate_loss_check() {
    return {"loss.candidate", [](Rng& rng) {
                const std::size_t levels = pick(rng, 1, 3), k = pick(rng, 1, 3), n = pick(rng, 1, 4);
                auto [t, s] = pyramid_pair(rng, levels, pick(rng, 1, 3));
                std::vector<msda::QuerySample> queries;
                std::vector<distill::Prediction> preds;
                for (std::size_t i = 0; i < n; ++i) {
                    msda::QuerySample q;
                    q.ref = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
                    q.points = k;
                    std::vector<double> w;
                    for (std::size_t j = 0; j < levels * k; ++j) {
                        q.offsets.push_back({rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)});
                        w.push_back(rng.normal());
                    }
                    q.weights = softmax(Tensor::vector(w)).storage();
                    queries.push_back(std::move(q));
                    distill::Prediction p;
                    p.score = rng.uniform();
                    p.iou_with_matched_gt = rng.uniform();
                    p.query_index = i;
                    preds.push_back(p);
                }
                const auto gamma = distill::candidate_weights(preds).gamma;
                return teacher_student(t, s, [=](std::span<const Var> tv, std::span<const Var> sv) {
                    return distill::candidate_loss(tv, sv, preds, gamma, queries);
                });
            }};
}

Check oa_loss_check() {
    return {"loss.occlusion_aware", [](Rng& rng) {
                auto [t, s] = pyramid_pair(rng, pick(rng, 1, 3), pick(rng, 1, 3));
                std::vector<double> betas(pick(rng, 0, 4));
                for (double& b : betas) b = rng.uniform(-0.5, 1.0);
                return teacher_student(t, s, [betas](std::span<const Var> tv, std::span<const Var> sv) {
                    return distill::occlusion_aware_loss(tv, sv, betas);
                });
            }};
}

Check oa_per_box_check() {
    return {"loss.occlusion_aware_per_box", [](Rng& rng) {
                const std::size_t levels = pick(rng, 1, 3), m = pick(rng, 0, 3);
                auto [t, s] = pyramid_pair(rng, levels, pick(rng, 1, 3));
                std::vector<double> betas(m);
                std::vector<std::vector<adapter::IndexRect>> regions(m);
                for (std::size_t i = 0; i < m; ++i) {
                    betas[i] = rng.uniform(-0.5, 1.0);
                    for (std::size_t l = 0; l < levels; ++l) {
                        const std::size_t h = t[l].dim(1), w = t[l].dim(2);
                        adapter::IndexRect r;
                        r.y0 = pick(rng, 0, h - 1);
                        r.y1 = pick(rng, r.y0 + 1, h);
                        r.x0 = pick(rng, 0, w - 1);
                        r.x1 = pick(rng, r.x0 + 1, w);
                        regions[i].push_back(r);
                    }
                }
                return teacher_student(t, s, [=](std::span<const Var> tv, std::span<const Var> sv) {
                    return distill::occlusion_aware_loss_per_box(tv, sv, betas, regions);
                });
            }};
}

Check detection_loss_check() {
    return {"loss.detection", [](Rng& rng) {
                const std::size_t n = pick(rng, 1, 5), g = pick(rng, 0, 3);
                std::vector<detector::NormalizedBox> gt;
                std::vector<int> cls;
                for (std::size_t j = 0; j < g; ++j) {
                    gt.push_back({rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4)});
                    cls.push_back(1);
                }
                Tensor logits = randn(rng, {n, 2});
                Tensor raw = randn(rng, {n, 4}, 0.7);
                Tensor boxes = ag::sigmoid(ag::constant(raw)).value();
                const auto assignment = hungarian_match(detector::matching_cost(logits, boxes, gt, cls));
                Instance inst;
                inst.inputs = {logits, raw};
                inst.fn = [=](std::span<const Var> v) {
                    return detector::detection_loss(v[0], ag::sigmoid(v[1]), gt, cls, assignment).total;
                };
                return inst;
            }};
}

// ---- total objective through a tiny detector

CheckResult total_loss_check(const SuiteOptions& opt, Rng& rng) {
    CheckResult r;
    r.name = "loss.total";
    harness::TrainConfig cfg;
    cfg.seed = 1;
    cfg.detector.image_min = 16;
    cfg.detector.stem_channels = 3;
    cfg.detector.channels = 4;
    cfg.detector.num_queries = 4;
    cfg.detector.num_points = 2;

    occlusion::SceneConfig scene_cfg;
    scene_cfg.width = scene_cfg.height = 32;
    scene_cfg.min_radius = 3.0;
    scene_cfg.max_radius = 6.0;
    scene_cfg.max_targets = 2;
    scene_cfg.distractors = 1;
    occlusion::SynthesisConfig syn;
    syn.min_size = 2.0;
    syn.max_size = 5.0;
    const auto occluders = occlusion::synthesize_occluders(opt.seed, 6, syn);

    constexpr std::size_t kCoords = 6;
    for (std::size_t it = 0; it < opt.instances; ++it) {
        harness::TrainScene scene;
        for (std::uint64_t attempt = 0;; ++attempt) {
            const auto clean = occlusion::render_clean_scene(rng.next_u64(), scene_cfg);
            try {
                scene = harness::scene_from_composite(
                    occlusion::composite_scene(clean, occluders, occlusion::CoveragePolicy{}, rng.next_u64()));
                break;
            } catch (const occlusion::CoverageError&) {
                require(attempt < 50, "gradcheck: could not composite a test scene");
            }
        }
        cfg.seed = rng.next_u64();
        cfg.gamma1 = rng.uniform(0.5, 2.0);
        cfg.gamma2 = rng.uniform(5.0, 20.0);
        harness::TrainState state = harness::init_state(cfg, 10);
        for (auto& t : state.ema.teacher.tensors)
            for (double& v : t.storage()) v += rng.normal(0.0, 0.05);

        auto grads = harness::compute_step(state, scene).gradients;
        if (opt.corrupt == r.name) grads[0][0] += 1e-2 * (1.0 + std::abs(grads[0][0]));
        for (std::size_t c = 0; c < kCoords; ++c) {
            const std::size_t ti = pick(rng, 0, state.student.size() - 1);
            const std::size_t j = pick(rng, 0, state.student.tensors[ti].numel() - 1);
            const std::size_t probe_tensor = (opt.corrupt == r.name && c == 0) ? 0 : ti;
            const std::size_t probe_index = (opt.corrupt == r.name && c == 0) ? 0 : j;
            harness::TrainState probe = state;
            const double x = probe.student.tensors[probe_tensor][probe_index];
            probe.student.tensors[probe_tensor][probe_index] = x + kStep;
            const double fp = harness::compute_step(probe, scene).breakdown.total;
            probe.student.tensors[probe_tensor][probe_index] = x - kStep;
            const double fm = harness::compute_step(probe, scene).breakdown.total;
            const double num = (fp - fm) / (2.0 * kStep);
            const double a = grads[probe_tensor][probe_index];
            const double e = rel_err(a, num);
            ++r.entries;
            if (e > r.max_relative_error) {
                r.max_relative_error = e;
                std::ostringstream os;
                os.precision(10);
                os << "instance " << it << " " << state.student.names[probe_tensor] << "[" << probe_index
                   << "]: analytic " << a << " numeric " << num;
                r.detail = os.str();
            }
        }
        ++r.instances;
    }
    r.passed = r.max_relative_error <= opt.tolerance;
    return r;
}

std::vector<Check> all_checks() {
    auto c = op_checks();
    c.push_back(msda_check());
    c.push_back(adapter_check());
    c.push_back(plain_loss_check());
    c.push_back(candidate_loss_check());
    c.push_back(oa_loss_check());
    c.push_back(oa_per_box_check());
    c.push_back(detection_loss_check());
    return c;
}

}  // namespace

bool SuiteReport::all_passed() const {
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::vector<std::string> check_names() {
    std::vector<std::string> names;
    for (const auto& c : all_checks()) names.push_back(c.name);
    names.push_back("loss.total");
    return names;
}

SuiteReport run_suite(const SuiteOptions& opt) {
    require(opt.instances >= 1, "gradcheck: instances must be >= 1");
    require(opt.tolerance > 0.0, "gradcheck: tolerance must be > 0");
    const auto t0 = std::chrono::steady_clock::now();
    SuiteReport report;
    std::uint64_t stream = 0;
    for (const auto& check : all_checks()) {
        ++stream;
        if (!opt.only.empty() && check.name.find(opt.only) == std::string::npos) continue;
        Rng rng(Rng::mix(opt.seed, stream));
        report.checks.push_back(run_check(check, opt, rng));
    }
    if (opt.only.empty() || std::string("loss.total").find(opt.only) != std::string::npos) {
        Rng rng(Rng::mix(opt.seed, ++stream));
        report.checks.push_back(total_loss_check(opt, rng));
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace oed::gradcheck
