// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "oed/adapter.hpp"
#include "oed/autograd.hpp"
#include "oed/errors.hpp"
#include "oed/rng.hpp"

using namespace oed;
using namespace oed::adapter;

namespace {

Tensor randn(Rng& rng, std::size_t r, std::size_t c, double s = 0.5) {
    Tensor t({r, c});
    for (double& v : t.storage()) v = rng.normal(0.0, s);
    return t;
}

AdapterParams random_params(Rng& rng, std::size_t d) {
    AdapterParams p;
    for (auto& l : p.layers) {
        l.wq = randn(rng, d, d);
        l.wk = randn(rng, d, d);
        l.wv = randn(rng, d, d);
        l.w1 = randn(rng, d, 2 * d);
        l.w2 = randn(rng, 2 * d, d);
    }
    return p;
}

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
    Mat m(t.dim(0), std::vector<double>(t.dim(1)));
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
    return m;
}

Mat mm(const Mat& a, const Mat& b) {
    Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < b.size(); ++k)
            for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
    return c;
}

// tanh form
double gelu(double x) {
    const double k = std::sqrt(2.0 / M_PI);
    return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

// straight-line re-implementation of the two adapter blocks
Mat reference(const Tensor& x0, const AdapterParams& p) {
    Mat x = to_mat(x0);
    const std::size_t n = x.size(), d = x[0].size();
    for (const auto& l : p.layers) {
        const Mat q = mm(x, to_mat(l.wq)), k = mm(x, to_mat(l.wk)), v = mm(x, to_mat(l.wv));
        Mat x1 = x;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> s(n);
            double mx = -1e300;
            for (std::size_t j = 0; j < n; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < d; ++c) dot += q[i][c] * k[j][c];
                s[j] = dot / std::sqrt(double(d));
                mx = std::max(mx, s[j]);
            }
            double z = 0.0;
            for (double& e : s) z += (e = std::exp(e - mx));
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < d; ++c) x1[i][c] += s[j] / z * v[j][c];
        }
        Mat h = mm(x1, to_mat(l.w1));
        for (auto& r : h)
            for (double& e : r) e = gelu(e);
        const Mat m = mm(h, to_mat(l.w2));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < d; ++c) x1[i][c] += m[i][c];
        x = x1;
    }
    return x;
}

}  // namespace

TEST_CASE("zero parameters give the identity") {
    Rng rng(1);
    MaskFeature mf{randn(rng, 5, 4, 1.0), 0};
    const auto out = adapter_forward(mf, AdapterParams::zeros(4));
    CHECK(out == mf.patches);
}

TEST_CASE("identity init leaves patches unchanged") {
    Rng rng(2);
    const auto p = AdapterParams::identity_init(6, rng);
    MaskFeature mf{randn(rng, 3, 6, 1.0), 1};
    CHECK(adapter_forward(mf, p) == mf.patches);
}

TEST_CASE("single token closed form") {
    Rng rng(3);
    const std::size_t d = 3;
    const auto p = random_params(rng, d);
    MaskFeature mf{randn(rng, 1, d, 1.0), 0};
    // attention over one token is 1, so each block adds v then the MLP
    Mat x = to_mat(mf.patches);
    for (const auto& l : p.layers) {
        const Mat v = mm(x, to_mat(l.wv));
        for (std::size_t c = 0; c < d; ++c) x[0][c] += v[0][c];
        Mat h = mm(x, to_mat(l.w1));
        for (double& e : h[0]) e = gelu(e);
        const Mat m = mm(h, to_mat(l.w2));
        for (std::size_t c = 0; c < d; ++c) x[0][c] += m[0][c];
    }
    const auto out = adapter_forward(mf, p);
    for (std::size_t c = 0; c < d; ++c) CHECK(out.at(0, c) == doctest::Approx(x[0][c]).epsilon(1e-12));
}

TEST_CASE("adapter matches straight-line oracle") {
    Rng rng(4);
    for (int inst = 0; inst < 10; ++inst) {
        const auto p = random_params(rng, 8);
        MaskFeature mf{randn(rng, 4, 8, 1.0), inst};
        const auto out = adapter_forward(mf, p);
        const auto want = reference(mf.patches, p);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(out.at(i, c) - want[i][c]) < 1e-11);
        // graph form agrees
        std::vector<ag::Var> vars;
        for (const auto& t : p.flatten()) vars.push_back(ag::constant(t));
        const auto g = adapter_forward(ag::constant(mf.patches), vars).value();
        for (std::size_t i = 0; i < g.numel(); ++i) CHECK(std::abs(g[i] - out[i]) < 1e-12);
    }
}

TEST_CASE("adapter is equivariant to patch order") {
    Rng rng(5);
    const auto p = random_params(rng, 4);
    MaskFeature mf{randn(rng, 3, 4, 1.0), 0};
    MaskFeature sw = mf;
    for (std::size_t c = 0; c < 4; ++c) std::swap(sw.patches.at(0, c), sw.patches.at(2, c));
    const auto a = adapter_forward(mf, p), b = adapter_forward(sw, p);
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(a.at(0, c) == doctest::Approx(b.at(2, c)).epsilon(1e-12));
        CHECK(a.at(1, c) == doctest::Approx(b.at(1, c)).epsilon(1e-12));
    }
}

TEST_CASE("flatten round trip and validation") {
    Rng rng(6);
    const auto p = random_params(rng, 3);
    const auto flat = p.flatten();
    CHECK(flat.size() == kLayers * kTensorsPerLayer);
    const auto q = AdapterParams::unflatten(flat);
    CHECK(q.flatten() == flat);
    auto bad = p;
    bad.layers[1].w1 = Tensor({3, 3});
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    CHECK_THROWS_AS(adapter_forward(MaskFeature{Tensor({2, 4}), 0}, p), ValidationError);
}

TEST_CASE("box projection onto levels") {
    const Box b{3.2, 5.0, 17.9, 40.1};
    const auto id = project_box_to_level(b, 64, 64, {64, 64, 1, 0});
    CHECK(id == IndexRect{3, 18, 5, 41});

    const auto r = project_box_to_level({8, 8, 24, 24}, 64, 64, {8, 8, 8, 0});
    CHECK(r.x0 == 1);
    CHECK(r.x1 == 3);
    CHECK(r.y0 == 1);
    CHECK(r.y1 == 3);

    const auto tiny = project_box_to_level({9, 9, 10, 10}, 64, 64, {4, 4, 16, 0});
    CHECK(tiny.cells() == 1);

    const auto edge = project_box_to_level({60, 60, 64, 64}, 64, 64, {4, 4, 16, 0});
    CHECK(edge == IndexRect{3, 4, 3, 4});

    CHECK_THROWS_AS(project_box_to_level({64, 64, 64, 64}, 64, 64, {4, 4, 16, 0}), ValidationError);
    CHECK_THROWS_AS(project_box_to_level({0, 0, 70, 10}, 64, 64, {4, 4, 16, 0}), ValidationError);
}
