// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oed/autograd.hpp"
#include "oed/errors.hpp"
#include "oed/rng.hpp"

using namespace oed;
using ag::Var;

TEST_CASE("polynomial gradient") {
    auto x = ag::parameter(Tensor::vector({1.0, 2.0}));
    auto loss = ag::sum(ag::square(x));
    const Var xs[] = {x};
    const auto g = ag::gradients(loss, xs);
    CHECK(g[0][0] == 2.0);
    CHECK(g[0][1] == 4.0);
}

TEST_CASE("constant loss has zero gradient") {
    auto x = ag::parameter(Tensor::vector({1.0, 2.0, 3.0}));
    auto c = ag::constant(Tensor::vector({4.0}));
    auto loss = ag::add(ag::sum(c), ag::scale(ag::sum(x), 0.0));
    const Var xs[] = {x};
    const auto g = ag::gradients(loss, xs);
    for (double v : g[0].data()) CHECK(v == 0.0);

    // input unreachable from the loss
    auto y = ag::parameter(Tensor::vector({1.0}));
    const Var ys[] = {y};
    const auto gy = ag::gradients(ag::sum(c), ys);
    CHECK(gy[0].numel() == 1);
    CHECK(gy[0][0] == 0.0);
}

TEST_CASE("softmax then dot against central differences") {
    Rng rng(11);
    Tensor x0({5}), w0({5});
    for (double& v : x0.storage()) v = rng.normal();
    for (double& v : w0.storage()) v = rng.normal();
    auto f = [&](const Tensor& x) {
        return ag::dot(ag::softmax(ag::constant(x)), ag::constant(w0)).item();
    };
    auto x = ag::parameter(x0);
    const Var xs[] = {x};
    const auto g = ag::gradients(ag::dot(ag::softmax(x), ag::constant(w0)), xs);
    for (std::size_t i = 0; i < 5; ++i) {
        Tensor p = x0, m = x0;
        p[i] += 1e-5;
        m[i] -= 1e-5;
        const double num = (f(p) - f(m)) / 2e-5;
        CHECK(std::abs(g[0][i] - num) <= 1e-4 * std::max({std::abs(num), std::abs(g[0][i]), 1e-3}));
    }
}

TEST_CASE("shared subexpressions accumulate") {
    auto x = ag::parameter(Tensor::vector({3.0}));
    auto y = ag::mul(x, x);  // x used twice
    auto loss = ag::sum(ag::add(y, x));
    const Var xs[] = {x};
    CHECK(ag::gradients(loss, xs)[0][0] == 7.0);
}

TEST_CASE("detach blocks the gradient") {
    auto x = ag::parameter(Tensor::vector({2.0}));
    auto loss = ag::sum(ag::mul(ag::detach(x), x));
    const Var xs[] = {x};
    CHECK(ag::gradients(loss, xs)[0][0] == 2.0);
}

TEST_CASE("shape errors are validation errors") {
    auto a = ag::constant(Tensor({2, 3}));
    auto b = ag::constant(Tensor({3, 2}));
    CHECK_THROWS_AS(ag::add(a, b), ValidationError);
    CHECK_THROWS_AS(ag::matmul(a, a), ValidationError);
    CHECK_NOTHROW(ag::matmul(a, b));
    CHECK_THROWS_AS(ag::gradients(a, std::span<const Var>{}), ValidationError);
}

TEST_CASE("log of a non-positive value is a numerical error") {
    CHECK_THROWS_AS(ag::log(ag::constant(Tensor::vector({-1.0}))), NumericalError);
}

TEST_CASE("conv2d agrees with a direct loop") {
    Rng rng(4);
    Tensor in({2, 5, 6}), w({3, 2, 3, 3}), b({3});
    for (auto* t : {&in, &w, &b})
        for (double& v : t->storage()) v = rng.normal();
    const std::size_t stride = 2, pad = 1;
    const auto out = ag::conv2d(ag::constant(in), ag::constant(w), ag::constant(b), stride, pad).value();
    const std::size_t oh = (5 + 2 * pad - 3) / stride + 1, ow = (6 + 2 * pad - 3) / stride + 1;
    REQUIRE(out.shape() == Shape{3, oh, ow});
    for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double s = b[o];
                for (std::size_t c = 0; c < 2; ++c)
                    for (std::size_t ky = 0; ky < 3; ++ky)
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                            const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(pad);
                            if (iy < 0 || ix < 0 || iy >= 5 || ix >= 6) continue;
                            s += w[((o * 2 + c) * 3 + ky) * 3 + kx] *
                                 in.at(c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                        }
                CHECK(std::abs(out.at(o, y, x) - s) < 1e-12);
            }
}
