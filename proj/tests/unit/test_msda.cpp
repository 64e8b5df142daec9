// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "oed/errors.hpp"
#include "oed/msda.hpp"
#include "oed/ops.hpp"
#include "oed/rng.hpp"
#include "oracles.hpp"

using namespace oed;
using msda::Point2;
using msda::QuerySample;

namespace {

Tensor identity(std::size_t c) {
    Tensor t({c, c});
    for (std::size_t i = 0; i < c; ++i) t.at(i, i) = 1.0;
    return t;
}

QuerySample random_query(Rng& rng, std::size_t levels, std::size_t k, std::size_t c) {
    QuerySample q;
    q.ref = {rng.uniform(), rng.uniform()};
    q.points = k;
    std::vector<double> logits;
    for (std::size_t i = 0; i < levels * k; ++i) {
        q.offsets.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2)});
        logits.push_back(rng.normal());
    }
    q.weights = softmax(Tensor::vector(logits)).storage();
    q.projection = Tensor({c, c});
    for (double& v : q.projection.storage()) v = rng.normal();
    return q;
}

}  // namespace

TEST_CASE("rescale_point uses corner alignment") {
    auto a = msda::rescale_point({0, 0}, 7, 3);
    CHECK(a.x == 0.0);
    CHECK(a.y == 0.0);
    auto b = msda::rescale_point({1, 1}, 8, 16);
    CHECK(b.x == 15.0);
    CHECK(b.y == 7.0);
    auto c = msda::rescale_point({0.5, 0.5}, 5, 5);
    CHECK(c.x == 2.0);
    CHECK(c.y == 2.0);
    CHECK_THROWS_AS(msda::rescale_point({1.5, 0}, 4, 4), ValidationError);
}

TEST_CASE("degenerate single sample reads the reference feature") {
    Rng rng(1);
    msda::MultiScaleFeatureSet fs;
    fs.levels.push_back(Tensor({3, 5, 9}));
    for (double& v : fs.levels[0].storage()) v = rng.normal();
    QuerySample q;
    q.ref = {0.25, 0.5};  // (2, 2) on a 5 x 9 level
    q.points = 1;
    q.offsets = {{0, 0}};
    q.weights = {1.0};
    q.projection = identity(3);
    const auto out = msda::msda_forward(fs, std::span(&q, 1));
    for (std::size_t c = 0; c < 3; ++c) CHECK(out[0][c] == doctest::Approx(fs.levels[0].at(c, 2, 2)).epsilon(1e-14));
}

TEST_CASE("constant pyramid is preserved") {
    Rng rng(2);
    msda::MultiScaleFeatureSet fs;
    for (auto [h, w] : {std::pair{6, 6}, std::pair{3, 3}}) fs.levels.push_back(Tensor({2, std::size_t(h), std::size_t(w)}, 0.7));
    auto q = random_query(rng, 2, 3, 2);
    q.projection = identity(2);
    for (auto& o : q.offsets) o = {rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)};
    q.ref = {0.5, 0.5};
    const auto out = msda::msda_forward(fs, std::span(&q, 1));
    CHECK(out[0][0] == doctest::Approx(0.7).epsilon(1e-13));
    CHECK(out[0][1] == doctest::Approx(0.7).epsilon(1e-13));
}

TEST_CASE("msda matches nested-loop evaluation") {
    Rng rng(3);
    for (int inst = 0; inst < 60; ++inst) {
        const std::size_t levels = 1 + inst % 3, k = 1 + (inst / 3) % 4, c = 1 + inst % 4;
        msda::MultiScaleFeatureSet fs;
        for (std::size_t l = 0; l < levels; ++l) {
            fs.levels.push_back(Tensor({c, std::size_t(rng.integer(1, 7)), std::size_t(rng.integer(1, 7))}));
            for (double& v : fs.levels.back().storage()) v = rng.normal();
        }
        std::vector<QuerySample> qs;
        for (int i = 0; i < 3; ++i) qs.push_back(random_query(rng, levels, k, c));
        const auto out = msda::msda_forward(fs, qs);
        for (std::size_t i = 0; i < qs.size(); ++i) {
            const auto want = oracle::msda_query(fs.levels, qs[i]);
            for (std::size_t ch = 0; ch < c; ++ch) CHECK(std::abs(out[i][ch] - want[ch]) < 1e-10);
        }
    }
}

TEST_CASE("attention weights must sum to one") {
    Rng rng(4);
    msda::MultiScaleFeatureSet fs;
    fs.levels.push_back(Tensor({2, 4, 4}, 1.0));
    auto q = random_query(rng, 1, 2, 2);
    q.weights = {0.5, 0.5 + 2e-9};
    CHECK_THROWS_AS(msda::msda_forward(fs, std::span(&q, 1)), ValidationError);
    q.weights = {0.5, 0.5 + 5e-10};
    CHECK_NOTHROW(msda::msda_forward(fs, std::span(&q, 1)));
    q.offsets.pop_back();
    CHECK_THROWS_AS(msda::msda_forward(fs, std::span(&q, 1)), ValidationError);
}

TEST_CASE("feature set validation") {
    msda::MultiScaleFeatureSet fs;
    CHECK_THROWS_AS(fs.validate(), ValidationError);
    fs.levels = {Tensor({2, 3, 3}), Tensor({3, 2, 2})};
    CHECK_THROWS_AS(fs.validate(), ValidationError);
}
