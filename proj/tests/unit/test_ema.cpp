// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "oed/ema.hpp"
#include "oed/errors.hpp"
#include "oed/rng.hpp"

using namespace oed;
using namespace oed::ema;

namespace {

ParamSet filled(double v, std::size_t n = 4) {
    ParamSet p;
    p.add("a", Tensor({n}, v));
    p.add("b", Tensor({2, 2}, v));
    return p;
}

EmaState fixed(ParamSet teacher, double tau) {
    EmaState s;
    s.teacher = std::move(teacher);
    s.fixed_tau = true;
    s.tau = tau;
    return s;
}

}  // namespace

TEST_CASE("schedule endpoints") {
    CHECK(tau_at(0, 100) == 0.996);
    CHECK(tau_at(100, 100) == 1.0);
    CHECK(tau_at(50, 100) == doctest::Approx(0.998).epsilon(1e-15));
    for (std::size_t s = 1; s <= 100; ++s) CHECK(tau_at(s, 100) >= tau_at(s - 1, 100));
    CHECK_THROWS_AS(tau_at(101, 100), ValidationError);
    CHECK_THROWS_AS(tau_at(0, 0), ValidationError);
}

TEST_CASE("tau of one is a fixed point") {
    Rng rng(1);
    ParamSet t = filled(0.0), s = filled(0.0);
    for (auto& x : t.tensors)
        for (double& v : x.storage()) v = rng.normal();
    for (auto& x : s.tensors)
        for (double& v : x.storage()) v = rng.normal();
    const auto out = ema_update(fixed(t, 1.0), s);
    CHECK(out.teacher == t);
    CHECK(out.step == 1);
}

TEST_CASE("direct substitution") {
    const auto out = ema_update(fixed(filled(0.0), 0.996), filled(1.0));
    for (const auto& x : out.teacher.tensors)
        for (double v : x.data()) CHECK(v == doctest::Approx(0.004).epsilon(1e-13));
    const auto copy = ema_update(fixed(filled(0.0), 0.0), filled(2.5));
    CHECK(copy.teacher == filled(2.5));
}

TEST_CASE("convex containment and geometric convergence") {
    Rng rng(2);
    for (double tau : {0.5, 0.9, 0.996}) {
        EmaState st = fixed(filled(0.0), tau);
        for (auto& x : st.teacher.tensors)
            for (double& v : x.storage()) v = rng.uniform(-3, 3);
        const ParamSet t0 = st.teacher;
        const ParamSet s = filled(0.7);
        for (std::size_t n = 1; n <= 1000; ++n) {
            ema_update_inplace(st, s);
            for (std::size_t i = 0; i < s.size(); ++i)
                for (std::size_t j = 0; j < s.tensors[i].numel(); ++j) {
                    const double a = t0.tensors[i][j], b = s.tensors[i][j], v = st.teacher.tensors[i][j];
                    CHECK(v >= std::min(a, b));
                    CHECK(v <= std::max(a, b));
                    CHECK(std::abs((v - b) - std::pow(tau, double(n)) * (a - b)) <= 1e-12);
                }
        }
    }
}

TEST_CASE("scheduled update advances the step") {
    EmaState st;
    st.teacher = filled(0.0);
    st.total_steps = 10;
    CHECK(st.current_tau() == 0.996);
    for (int i = 0; i < 10; ++i) ema_update_inplace(st, filled(1.0));
    CHECK(st.step == 10);
    CHECK(st.current_tau() == 1.0);
    const auto frozen = st.teacher;
    ema_update_inplace(st, filled(5.0));
    CHECK(st.teacher == frozen);
}

TEST_CASE("layout mismatch is rejected") {
    ParamSet other;
    other.add("a", Tensor({3}));
    CHECK_THROWS_AS(ema_update(fixed(filled(0.0), 0.5), other), ValidationError);
}
