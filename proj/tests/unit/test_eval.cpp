// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "oed/errors.hpp"
#include "oed/eval.hpp"
#include "oed/rng.hpp"
#include "oracles.hpp"

using namespace oed;
using namespace oed::eval;

namespace {

const Box kPool[] = {{0, 0, 10, 10}, {1, 0, 11, 10}, {0, 0, 5, 10}, {20, 20, 30, 30}, {22, 21, 31, 30}, {40, 0, 48, 6}};

}  // namespace

TEST_CASE("perfect and empty detectors") {
    const std::vector<ImageTruth> gt{{{0, 0, 10, 10}, {20, 20, 40, 40}}, {{5, 5, 9, 9}}};
    std::vector<ImagePredictions> perfect(2);
    for (std::size_t i = 0; i < 2; ++i)
        for (const auto& b : gt[i]) perfect[i].push_back({b, 1.0});
    CHECK(*average_precision(perfect, gt, 0.5) == 1.0);
    const auto s = ap_summary(perfect, gt);
    CHECK(*s.ap == 1.0);
    CHECK(*s.ap50 == 1.0);
    CHECK(*s.ap75 == 1.0);
    CHECK(*s.ap_small == 1.0);
    CHECK_FALSE(s.ap_large.has_value());

    std::vector<ImagePredictions> none(2);
    CHECK(*average_precision(none, gt, 0.5) == 0.0);
    CHECK_FALSE(average_precision(none, std::vector<ImageTruth>(2), 0.5).has_value());
}

TEST_CASE("hand case with three predictions and two ground truths") {
    // ranked: TP (0.9), FP (0.8), TP (0.7) -> recall 1/2, 1/2, 1; precision 1, 1/2, 2/3
    const std::vector<ImageTruth> gt{{{0, 0, 10, 10}, {20, 20, 30, 30}}};
    const std::vector<ImagePredictions> preds{{{{0, 0, 10, 10}, 0.9}, {{50, 50, 60, 60}, 0.8}, {{20, 20, 30, 30}, 0.7}}};
    // recall points 0..0.5 (51 of them) take 1, 0.51..1 (50) take 2/3
    const double want = (51.0 * 1.0 + 50.0 * (2.0 / 3.0)) / 101.0;
    CHECK(*average_precision(preds, gt, 0.5) == doctest::Approx(want).epsilon(1e-15));
    CHECK(*average_precision(preds, gt, 0.5) == *oracle::brute_force_ap(preds, gt, 0.5));
}

TEST_CASE("greedy matching") {
    const ImageTruth gt{{0, 0, 10, 10}, {0, 0, 10, 10}};
    const ImagePredictions p{{{0, 0, 10, 10}, 0.5}, {{0, 0, 10, 10}, 0.9}, {{0, 0, 10, 10}, 0.1}};
    const auto m = greedy_match(p, gt, 0.5);
    CHECK(*m[1] == 0);  // highest score first, ties to the lower index
    CHECK(*m[0] == 1);
    CHECK_FALSE(m[2].has_value());
    // IoU exactly at the threshold counts
    const ImagePredictions half{{{0, 0, 10, 10}, 1.0}};
    const ImageTruth wider{{0, 0, 20, 10}};
    CHECK(greedy_match(half, wider, 0.5)[0].has_value());
    CHECK_FALSE(greedy_match(half, wider, 0.55)[0].has_value());
}

TEST_CASE("exhaustive sweep against brute-force enumeration") {
    const double scores[] = {0.9, 0.5, 0.5};
    const std::size_t pool = std::size(kPool);
    std::size_t cases = 0;
    // single image: every gt subset of size <= 2 from the first four pool boxes, every
    // prediction list of length <= 3 over (box, score)
    for (std::size_t gmask = 0; gmask < 16; ++gmask) {
        ImageTruth gt;
        for (std::size_t b = 0; b < 4; ++b)
            if (gmask & (1u << b)) gt.push_back(kPool[b]);
        if (gt.size() > 2) continue;
        const std::size_t options = pool * 3;
        for (std::size_t n = 0; n <= 3; ++n) {
            std::size_t combos = 1;
            for (std::size_t i = 0; i < n; ++i) combos *= options;
            for (std::size_t code = 0; code < combos; ++code) {
                ImagePredictions p;
                std::size_t c = code;
                for (std::size_t i = 0; i < n; ++i) {
                    p.push_back({kPool[(c % options) / 3], scores[c % 3]});
                    c /= options;
                }
                const std::vector<ImagePredictions> preds{p};
                const std::vector<ImageTruth> truth{gt};
                for (double t : {0.5, 0.75, 0.9}) {
                    const auto a = average_precision(preds, truth, t);
                    const auto b = oracle::brute_force_ap(preds, truth, t);
                    REQUIRE(a.has_value() == b.has_value());
                    if (a) REQUIRE(*a == *b);
                }
                ++cases;
            }
        }
    }
    CHECK(cases > 10000);
}

TEST_CASE("random multi-image cases against brute force") {
    Rng rng(9);
    for (int inst = 0; inst < 2000; ++inst) {
        const std::size_t images = std::size_t(rng.integer(1, 3));
        std::vector<ImagePredictions> preds(images);
        std::vector<ImageTruth> gt(images);
        for (std::size_t i = 0; i < images; ++i) {
            const auto ng = rng.integer(0, 4), np = rng.integer(0, 6);
            for (int j = 0; j < ng; ++j) gt[i].push_back(kPool[std::size_t(rng.integer(0, 5))]);
            for (int j = 0; j < np; ++j)
                preds[i].push_back({kPool[std::size_t(rng.integer(0, 5))], double(rng.integer(1, 4)) / 4.0});
        }
        for (double t : EvalConfig::default_thresholds()) {
            const auto a = average_precision(preds, gt, t);
            const auto b = oracle::brute_force_ap(preds, gt, t);
            REQUIRE(a.has_value() == b.has_value());
            if (a) REQUIRE(*a == *b);
        }
    }
}

TEST_CASE("AP is non-increasing in the IoU threshold and invariant to monotone score maps") {
    Rng rng(10);
    for (int inst = 0; inst < 300; ++inst) {
        std::vector<ImagePredictions> preds(2);
        std::vector<ImageTruth> gt(2);
        for (std::size_t i = 0; i < 2; ++i) {
            for (int j = 0; j < 3; ++j) {
                const double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
                gt[i].push_back({x, y, x + rng.uniform(5, 15), y + rng.uniform(5, 15)});
            }
            for (int j = 0; j < 5; ++j) {
                const Box& g = gt[i][std::size_t(rng.integer(0, 2))];
                const double jx = rng.normal(0, 2), jy = rng.normal(0, 2);
                preds[i].push_back({{g.x_min + jx, g.y_min + jy, g.x_max + jx, g.y_max + jy}, rng.uniform()});
            }
        }
        const auto s = ap_summary(preds, gt);
        for (std::size_t k = 1; k < s.per_threshold.size(); ++k) CHECK(*s.per_threshold[k] <= *s.per_threshold[k - 1]);
        auto mapped = preds;
        for (auto& img : mapped)
            for (auto& p : img) p.score = std::exp(3.0 * p.score) - 7.0;
        const auto m = ap_summary(mapped, gt);
        for (std::size_t k = 0; k < s.per_threshold.size(); ++k) CHECK(*m.per_threshold[k] == *s.per_threshold[k]);
    }
}

TEST_CASE("summary buckets and per-threshold slow path") {
    Rng rng(11);
    std::vector<ImagePredictions> preds(3);
    std::vector<ImageTruth> gt(3);
    for (std::size_t i = 0; i < 3; ++i) {
        gt[i] = {{0, 0, 20, 20}, {10, 10, 130, 140}, {50, 50, 90, 90}};
        for (const auto& g : gt[i]) {
            const double j = rng.uniform(0, 6);
            preds[i].push_back({{g.x_min + j, g.y_min, g.x_max + j, g.y_max}, rng.uniform()});
        }
    }
    const auto s = ap_summary(preds, gt);
    double mean = 0.0;
    for (double t : EvalConfig::default_thresholds()) mean += *oracle::brute_force_ap(preds, gt, t);
    CHECK(*s.ap == doctest::Approx(mean / 10.0).epsilon(1e-15));
    CHECK(*s.ap50 == *oracle::brute_force_ap(preds, gt, 0.5));
    CHECK(*s.ap75 == *oracle::brute_force_ap(preds, gt, 0.75));

    // small bucket keeps only the 20x20 boxes, large only the 120x130 ones
    std::vector<ImageTruth> small(3), large(3);
    for (std::size_t i = 0; i < 3; ++i) {
        small[i] = {gt[i][0]};
        large[i] = {gt[i][1]};
    }
    double ms = 0.0, ml = 0.0;
    for (double t : EvalConfig::default_thresholds()) {
        ms += *oracle::brute_force_ap(preds, small, t);
        ml += *oracle::brute_force_ap(preds, large, t);
    }
    CHECK(*s.ap_small == doctest::Approx(ms / 10.0).epsilon(1e-15));
    CHECK(*s.ap_large == doctest::Approx(ml / 10.0).epsilon(1e-15));

    const auto j = to_json(s);
    CHECK(j.at("AP").get<double>() == *s.ap);
    CHECK(to_csv(s).rfind("metric,value\nAP,", 0) == 0);
}

TEST_CASE("input validation") {
    const std::vector<ImageTruth> gt{{{0, 0, 1, 1}}};
    CHECK_THROWS_AS(average_precision({}, gt, 0.5), ValidationError);
    const std::vector<ImagePredictions> bad{{{{5, 0, 1, 1}, 0.5}}};
    CHECK_THROWS_AS(average_precision(bad, gt, 0.5), ValidationError);
    const std::vector<ImagePredictions> nan{{{{0, 0, 1, 1}, std::nan("")}}};
    CHECK_THROWS_AS(average_precision(nan, gt, 0.5), ValidationError);
    EvalConfig c;
    c.iou_thresholds = {0.7, 0.5};
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("prediction files round trip") {
    const std::vector<std::string> ids{"a", "b"};
    const std::vector<ImagePredictions> p{{{{1, 2, 3, 4}, 0.25}}, {}};
    const auto back = predictions_from_json(predictions_to_json(ids, p), ids);
    REQUIRE(back.size() == 2);
    CHECK(back[0][0].box == Box{1, 2, 3, 4});
    CHECK(back[0][0].score == 0.25);
    CHECK(back[1].empty());
    const nlohmann::json unknown = {{"images", {{{"id", "zz"}, {"detections", nlohmann::json::array()}}}}};
    CHECK_THROWS_AS(predictions_from_json(unknown, ids), ValidationError);
}
