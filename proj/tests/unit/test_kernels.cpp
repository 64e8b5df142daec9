// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oed/kernels.hpp"
#include "oed/rng.hpp"

using namespace oed;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

double close(double a, double b) { return std::abs(a - b) <= 1e-12 * (1.0 + std::abs(a) + std::abs(b)); }

struct GemmCase {
    std::size_t m, n, k;
};

// naive C += op(A) op(B)
std::vector<double> naive(const GemmCase& g, const std::vector<double>& a, const std::vector<double>& b, char mode) {
    std::vector<double> c(g.m * g.n, 0.0);
    for (std::size_t i = 0; i < g.m; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < g.k; ++p) {
                const double av = mode == 't' ? a[p * g.m + i] : a[i * g.k + p];
                const double bv = mode == 'n' || mode == 't' ? b[p * g.n + j] : b[j * g.k + p];
                s += av * bv;
            }
            c[i * g.n + j] = s;
        }
    return c;
}

void check_table(const kernels::KernelTable& t) {
    Rng rng(77);
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 9u, 16u, 31u, 64u, 129u}) {
        auto a = random_vec(rng, n), b = random_vec(rng, n);
        double dot = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dot += a[i] * b[i];
            sq += (a[i] - b[i]) * (a[i] - b[i]);
        }
        CHECK(close(t.dot(a.data(), b.data(), n), dot));
        CHECK(close(t.sq_diff_sum(a.data(), b.data(), n), sq));
        auto y = a;
        t.axpy(y.data(), 0.7, b.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(close(y[i], a[i] + 0.7 * b[i]));
    }
    for (GemmCase g : {GemmCase{1, 1, 1}, GemmCase{3, 5, 7}, GemmCase{4, 4, 4}, GemmCase{9, 13, 6}, GemmCase{17, 3, 33},
                       GemmCase{2, 19, 1}}) {
        const auto a = random_vec(rng, g.m * g.k), b = random_vec(rng, g.k * g.n);
        for (char mode : {'n', 'x', 't'}) {
            const auto want = naive(g, a, b, mode);
            std::vector<double> c(g.m * g.n, 0.0);
            if (mode == 'n') t.gemm_nn(g.m, g.n, g.k, a.data(), b.data(), c.data());
            if (mode == 'x') t.gemm_nt(g.m, g.n, g.k, a.data(), b.data(), c.data());
            if (mode == 't') t.gemm_tn(g.m, g.n, g.k, a.data(), b.data(), c.data());
            for (std::size_t i = 0; i < c.size(); ++i) CHECK(close(c[i], want[i]));
            // accumulation into a non-zero C
            std::vector<double> c2(g.m * g.n, 1.0);
            if (mode == 'n') t.gemm_nn(g.m, g.n, g.k, a.data(), b.data(), c2.data());
            if (mode == 'x') t.gemm_nt(g.m, g.n, g.k, a.data(), b.data(), c2.data());
            if (mode == 't') t.gemm_tn(g.m, g.n, g.k, a.data(), b.data(), c2.data());
            for (std::size_t i = 0; i < c2.size(); ++i) CHECK(close(c2[i], want[i] + 1.0));
        }
    }
}

}  // namespace

TEST_CASE("scalar kernels match naive loops") { check_table(kernels::scalar_table()); }

TEST_CASE("avx2 kernels match naive loops") {
    const auto* t = kernels::avx2_table();
    if (!t) {
        MESSAGE("AVX2 unavailable; skipped");
        return;
    }
    check_table(*t);
}

TEST_CASE("avx2 and scalar agree") {
    const auto* v = kernels::avx2_table();
    if (!v) return;
    const auto& s = kernels::scalar_table();
    Rng rng(3);
    for (std::size_t n = 0; n < 70; ++n) {
        auto a = random_vec(rng, n), b = random_vec(rng, n);
        CHECK(close(v->dot(a.data(), b.data(), n), s.dot(a.data(), b.data(), n)));
        CHECK(close(v->sq_diff_sum(a.data(), b.data(), n), s.sq_diff_sum(a.data(), b.data(), n)));
    }
}

TEST_CASE("dispatch selection") {
    const auto before = kernels::active_isa();
    const auto prev = kernels::select(kernels::Isa::Scalar);
    CHECK(prev == before);
    CHECK(kernels::active_isa() == kernels::Isa::Scalar);
    CHECK(kernels::isa_name(kernels::Isa::Scalar) == "scalar");
    kernels::select(before);
    CHECK(kernels::active_isa() == before);
}
