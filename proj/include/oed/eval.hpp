// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// COCO-style average precision.
//
// Per image, predictions are visited by descending score (ties keep input
// order) and each is matched to the unmatched ground truth of highest IoU,
// provided that IoU >= threshold (ties go to the lower ground-truth index).
// The pooled list is then ranked by score (ties: image order, then the
// per-image order) and AP is the mean of the precision envelope sampled at
// the 101 recall points 0, 0.01, ..., 1.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oed/boxes.hpp"

namespace oed::eval {

struct ScoredBox {
    Box box;
    double score = 0.0;
};

using ImagePredictions = std::vector<ScoredBox>;
using ImageTruth = std::vector<Box>;

inline constexpr std::size_t kRecallPoints = 101;

struct EvalConfig {
    std::vector<double> iou_thresholds = default_thresholds();
    double small_area_max = 32.0 * 32.0;
    double large_area_min = 96.0 * 96.0;

    static std::vector<double> default_thresholds();
    void validate() const;
};

/// Per-prediction outcome of the greedy matching on one image: the matched
/// ground-truth index, or nullopt for a false positive.
std::vector<std::optional<std::size_t>> greedy_match(const ImagePredictions& preds, const ImageTruth& gt,
                                                     double iou_threshold);

/// nullopt when there is no ground truth at all.
std::optional<double> average_precision(const std::vector<ImagePredictions>& preds,
                                        const std::vector<ImageTruth>& gt, double iou_threshold);

struct Summary {
    std::optional<double> ap;  // mean over thresholds
    std::optional<double> ap50;
    std::optional<double> ap75;
    std::optional<double> ap_small;
    std::optional<double> ap_large;
    std::vector<std::optional<double>> per_threshold;
};

Summary ap_summary(const std::vector<ImagePredictions>& preds, const std::vector<ImageTruth>& gt,
                   const EvalConfig& config = {});

nlohmann::json to_json(const Summary& s);
/// "metric,value" rows; undefined metrics are written as empty values.
std::string to_csv(const Summary& s);

// ---- files

/// Ground truth of a generated dataset, keyed by scene id in manifest order.
struct GroundTruthSet {
    std::vector<std::string> ids;
    std::vector<ImageTruth> boxes;
};
GroundTruthSet load_ground_truth(const std::filesystem::path& dataset_dir);

/// {"images": [{"id": "...", "detections": [{"box": [x0, y0, x1, y1], "score": s}]}]}
nlohmann::json predictions_to_json(const std::vector<std::string>& ids, const std::vector<ImagePredictions>& preds);
/// Aligns predictions with `ids`; images absent from the file get none.
std::vector<ImagePredictions> predictions_from_json(const nlohmann::json& j, const std::vector<std::string>& ids);

}  // namespace oed::eval
