// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "oed/autograd.hpp"
#include "oed/distill.hpp"
#include "oed/errors.hpp"
#include "oed/ops.hpp"
#include "oed/rng.hpp"
#include "oracles.hpp"

using namespace oed;
using namespace oed::distill;

namespace {

Tensor randn(Rng& rng, Shape s) {
    Tensor t(std::move(s));
    for (double& v : t.storage()) v = rng.normal();
    return t;
}

msda::MultiScaleFeatureSet pyramid(Rng& rng, std::size_t c, std::vector<std::pair<std::size_t, std::size_t>> hw) {
    msda::MultiScaleFeatureSet fs;
    for (auto [h, w] : hw) fs.levels.push_back(randn(rng, {c, h, w}));
    return fs;
}

std::vector<Prediction> preds_from(std::vector<double> c, std::vector<double> iou) {
    std::vector<Prediction> p(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        p[i].score = c[i];
        p[i].iou_with_matched_gt = iou[i];
        p[i].query_index = i;
    }
    return p;
}

}  // namespace

TEST_CASE("plain feature loss") {
    Tensor t({2, 2, 3}, 1.0), s({2, 2, 3}, 0.0);
    CHECK(plain_feature_loss(t, t) == 0.0);
    CHECK(plain_feature_loss(t, s) == 12.0);
    Rng rng(1);
    const auto a = randn(rng, {3, 4, 2}), b = randn(rng, {3, 4, 2});
    double want = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) want += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(plain_feature_loss(a, b) == doctest::Approx(want).epsilon(1e-14));
    CHECK_THROWS_AS(plain_feature_loss(a, Tensor({3, 4, 3})), ValidationError);
}

TEST_CASE("candidate weights") {
    const auto one = candidate_weights(preds_from({0.3}, {0.2}));
    CHECK(one.gamma == std::vector<double>{1.0});

    const auto eq = candidate_weights(preds_from({0.5, 0.5, 0.5, 0.5}, {0.7, 0.7, 0.7, 0.7}));
    for (double g : eq.gamma) CHECK(g == doctest::Approx(1.0 / 16.0).epsilon(1e-15));

    // 40-digit reference values
    const auto w = candidate_weights(preds_from({2.0, 0.0}, {0.9, 0.3}));
    CHECK(std::abs(w.gamma[0] - 0.56869218790167350368) < 1e-15);
    CHECK(std::abs(w.gamma[1] - 0.042238803697995606708) < 1e-15);

    CHECK_THROWS_AS(candidate_weights(std::vector<Prediction>{}), ValidationError);
}

TEST_CASE("candidate weights are shift invariant") {
    Rng rng(2);
    for (int inst = 0; inst < 50; ++inst) {
        const std::size_t n = std::size_t(rng.integer(1, 8));
        std::vector<double> c(n), u(n);
        for (std::size_t i = 0; i < n; ++i) {
            c[i] = rng.uniform();
            u[i] = rng.uniform();
        }
        const auto base = candidate_weights(preds_from(c, u));
        const double shift = rng.uniform(-5, 5);
        auto cs = c;
        for (double& v : cs) v += shift;
        const auto moved = candidate_weights(preds_from(cs, u));
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(base.gamma[i] - moved.gamma[i]) < 1e-12);
    }
}

TEST_CASE("candidate loss") {
    Rng rng(3);
    SUBCASE("identical features give zero") {
        const auto fs = pyramid(rng, 2, {{4, 4}, {2, 2}});
        msda::QuerySample q{{0.3, 0.6}, 1, {{0.2, 0.1}, {0, 0}}, {0.4, 0.6}, Tensor({2, 2})};
        CHECK(candidate_loss(fs, fs, preds_from({0.5}, {0.5}), std::span(&q, 1)) == 0.0);
    }
    SUBCASE("degenerate sum is the squared difference at the reference") {
        const auto t = pyramid(rng, 3, {{5, 5}}), s = pyramid(rng, 3, {{5, 5}});
        msda::QuerySample q{{0.5, 0.25}, 1, {{0, 0}}, {1.0}, Tensor({3, 3})};
        double want = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            const double d = t.levels[0].at(c, 1, 2) - s.levels[0].at(c, 1, 2);
            want += d * d;
        }
        CHECK(candidate_loss(t, s, preds_from({0.9}, {0.4}), std::span(&q, 1)) ==
              doctest::Approx(want).epsilon(1e-13));
    }
    SUBCASE("nested loop oracle") {
        for (int inst = 0; inst < 20; ++inst) {
            const auto t = pyramid(rng, 2, {{6, 5}, {3, 3}}), s = pyramid(rng, 2, {{6, 5}, {3, 3}});
            std::vector<msda::QuerySample> qs;
            std::vector<Prediction> ps;
            for (std::size_t i = 0; i < 3; ++i) {
                msda::QuerySample q;
                q.ref = {rng.uniform(), rng.uniform()};
                q.points = 2;
                std::vector<double> logits;
                for (int j = 0; j < 4; ++j) {
                    q.offsets.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
                    logits.push_back(rng.normal());
                }
                q.weights = softmax(Tensor::vector(logits)).storage();
                qs.push_back(q);
                Prediction p;
                p.score = rng.uniform();
                p.iou_with_matched_gt = rng.uniform();
                p.query_index = 2 - i;  // predictions need not follow query order
                ps.push_back(p);
            }
            const auto gamma = candidate_weights(ps).gamma;
            double want = 0.0;
            for (std::size_t i = 0; i < 3; ++i) {
                const auto& q = qs[ps[i].query_index];
                for (std::size_t l = 0; l < 2; ++l) {
                    const auto& tl = t.levels[l];
                    const double px = q.ref.x * double(tl.dim(2) - 1), py = q.ref.y * double(tl.dim(1) - 1);
                    for (std::size_t k = 0; k < 2; ++k) {
                        const auto o = q.offsets[l * 2 + k];
                        double d2 = 0.0;
                        for (std::size_t c = 0; c < 2; ++c) {
                            const double d = oracle::bilinear(tl, c, px + o.x, py + o.y) -
                                             oracle::bilinear(s.levels[l], c, px + o.x, py + o.y);
                            d2 += d * d;
                        }
                        want += gamma[i] * q.weights[l * 2 + k] * d2;
                    }
                }
            }
            CHECK(candidate_loss(t, s, ps, qs) == doctest::Approx(want).epsilon(1e-12));

            // graph form with the same gamma
            std::vector<ag::Var> tv, sv;
            for (const auto& x : t.levels) tv.push_back(ag::constant(x));
            for (const auto& x : s.levels) sv.push_back(ag::constant(x));
            CHECK(candidate_loss(tv, sv, ps, gamma, qs).item() == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("patch similarity") {
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    CHECK(patch_similarity(eye, eye) == eye);
    const auto v = Tensor::matrix(1, 3, {0.2, -1.0, 3.0});
    CHECK(patch_similarity(v, v).at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    Rng rng(4);
    const auto a = randn(rng, {3, 4}), b = randn(rng, {2, 4});
    const auto s = patch_similarity(a, b);
    REQUIRE(s.shape() == Shape{3, 2});
    for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < 2; ++k) {
            double dot = 0, na = 0, nb = 0;
            for (std::size_t c = 0; c < 4; ++c) {
                dot += a.at(j, c) * b.at(k, c);
                na += a.at(j, c) * a.at(j, c);
                nb += b.at(k, c) * b.at(k, c);
            }
            CHECK(s.at(j, k) == doctest::Approx(dot / std::sqrt(na * nb)).epsilon(1e-14));
        }
}

TEST_CASE("best patch") {
    CHECK(best_patch(Tensor::matrix(2, 2, {0.1, 0.9, 0.5, 0.2})) == 0);
    Tensor eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
    CHECK(best_patch(eye) == 0);
    CHECK(best_patch(Tensor::matrix(1, 3, {0.1, 0.2, 0.3})) == 0);
    CHECK(best_patch(Tensor::matrix(3, 1, {0.1, 0.3, 0.3})) == 1);
    CHECK_THROWS_AS(best_patch(Tensor({0, 3})), ValidationError);
    Rng rng(5);
    for (int inst = 0; inst < 500; ++inst) {
        const std::size_t j = std::size_t(rng.integer(1, 10)), k = std::size_t(rng.integer(1, 10));
        Tensor s({j, k});
        for (double& v : s.storage()) v = inst % 2 ? rng.uniform(-1, 1) : double(rng.integer(-2, 2)) / 2.0;
        CHECK(best_patch(s) == oracle::scan_best_row(s));
    }
}

TEST_CASE("occlusion beta") {
    Tensor map({2, 2, 2});
    for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x) {
            map.at(0, y, x) = 1.0 + double(x);
            map.at(1, y, x) = double(y);
        }
    // mean pool = (1.5, 0.5)
    const std::vector<double> same{1.5, 0.5}, orth{-0.5, 1.5};
    CHECK(occlusion_beta(same, map) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(occlusion_beta(orth, map)) < 1e-15);
    // max pool = (2, 1)
    const std::vector<double> p{2.0, 1.0};
    CHECK(occlusion_beta(p, map, PoolPolicy::Max) == doctest::Approx(1.0).epsilon(1e-15));

    Rng rng(6);
    const auto m = randn(rng, {3, 3, 4});
    const std::vector<double> patch{rng.normal(), rng.normal(), rng.normal()};
    double pooled[3] = {0, 0, 0};
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < 12; ++i) pooled[c] += m[c * 12 + i];
        pooled[c] /= 12.0;
    }
    double dot = 0, na = 0, nb = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        dot += patch[c] * pooled[c];
        na += patch[c] * patch[c];
        nb += pooled[c] * pooled[c];
    }
    CHECK(occlusion_beta(patch, m) == doctest::Approx(dot / std::sqrt(na * nb)).epsilon(1e-14));
}

TEST_CASE("match patches composes similarity, argmax and beta") {
    Rng rng(7);
    const auto tp = randn(rng, {4, 3}), sp = randn(rng, {5, 3}), map = randn(rng, {3, 2, 2});
    const auto m = match_patches(tp, sp, map);
    CHECK(m.best_teacher_patch == oracle::scan_best_row(patch_similarity(tp, sp)));
    const std::vector<double> row(tp.data().begin() + long(3 * m.best_teacher_patch),
                                  tp.data().begin() + long(3 * m.best_teacher_patch + 3));
    CHECK(m.beta == occlusion_beta(row, map));
}

TEST_CASE("occlusion-aware loss") {
    Rng rng(8);
    const auto t = pyramid(rng, 1, {{2, 2}});
    msda::MultiScaleFeatureSet s = t;
    for (double& v : s.levels[0].storage()) v -= 1.0;
    CHECK(occlusion_aware_loss(t, s, std::vector<double>{}) == 0.0);
    CHECK(occlusion_aware_loss(t, s, std::vector<double>{1.0}) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(occlusion_aware_loss(t, s, std::vector<double>{-0.3, 1.0}) == doctest::Approx(4.0).epsilon(1e-14));
    const auto a = pyramid(rng, 2, {{3, 3}, {2, 1}}), b = pyramid(rng, 2, {{3, 3}, {2, 1}});
    CHECK(occlusion_aware_loss(a, b, std::vector<double>{0.5, 0.25}) ==
          doctest::Approx(0.75 * plain_feature_loss(a, b)).epsilon(1e-14));
    CHECK(clamp_beta(-0.2) == 0.0);
    CHECK(clamp_beta(0.4) == 0.4);
}

TEST_CASE("per-box occlusion-aware loss restricts to the box") {
    Rng rng(9);
    const auto t = randn(rng, {2, 4, 4}), s = randn(rng, {2, 4, 4});
    const ag::Var tv[] = {ag::constant(t)}, sv[] = {ag::constant(s)};
    const std::vector<double> betas{0.5};
    const std::vector<std::vector<adapter::IndexRect>> regions{{adapter::IndexRect{1, 3, 0, 2}}};
    double want = 0.0;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < 2; ++y)
            for (std::size_t x = 1; x < 3; ++x) {
                const double d = t.at(c, y, x) - s.at(c, y, x);
                want += d * d;
            }
    CHECK(occlusion_aware_loss_per_box(tv, sv, betas, regions).item() == doctest::Approx(0.5 * want).epsilon(1e-14));
}
