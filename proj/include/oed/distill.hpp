// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Distillation objectives between a teacher and a student feature pyramid.
//
// Every graph-form loss takes the teacher maps as Vars for convenience but
// detaches them: teacher features are constants within a step and never
// receive gradient.

#include <cstddef>
#include <span>
#include <vector>

#include "oed/adapter.hpp"
#include "oed/autograd.hpp"
#include "oed/boxes.hpp"
#include "oed/msda.hpp"
#include "oed/tensor.hpp"

namespace oed::distill {

/// One detector output as seen by the candidate weighting.
struct Prediction {
    double score = 0.0;           // classification score c_i
    Box box;                      // b_i
    std::size_t query_index = 0;  // owning query
    double iou_with_matched_gt = 0.0;
};

struct CandidateWeights {
    std::vector<double> score_weights;  // softmax over scores
    std::vector<double> box_weights;    // softmax over IoUs
    std::vector<double> gamma;          // elementwise product
};

struct PatchMatch {
    Tensor similarity;  // J x K
    std::size_t best_teacher_patch = 0;
    double beta = 0.0;
};

enum class PoolPolicy { Mean, Max };

// ---- plain feature imitation

/// Sum of squared elementwise differences.
double plain_feature_loss(const Tensor& teacher, const Tensor& student);
double plain_feature_loss(const msda::MultiScaleFeatureSet& teacher, const msda::MultiScaleFeatureSet& student);
ag::Var plain_feature_loss(std::span<const ag::Var> teacher, std::span<const ag::Var> student);

// ---- candidate distillation

CandidateWeights candidate_weights(std::span<const Prediction> preds);

/// sum_i gamma_i sum_{l,k} A[q_i,l,k] |T_l(p) - S_l(p)|^2, with p the
/// sampling locations of prediction i's query. Gamma is computed from preds.
double candidate_loss(const msda::MultiScaleFeatureSet& teacher, const msda::MultiScaleFeatureSet& student,
                      std::span<const Prediction> preds, std::span<const msda::QuerySample> queries);

/// Graph form with explicit per-prediction weights (gamma).
ag::Var candidate_loss(std::span<const ag::Var> teacher, std::span<const ag::Var> student,
                       std::span<const Prediction> preds, std::span<const double> gamma,
                       std::span<const msda::QuerySample> queries);

// ---- occlusion-aware distillation

/// Cosine similarity of every teacher patch (rows) with every student patch.
Tensor patch_similarity(const Tensor& teacher_patches, const Tensor& student_patches);

/// Row whose maximum is the global maximum; ties go to the lowest row.
std::size_t best_patch(const Tensor& similarity);

/// Cosine similarity between a patch vector and the pooled C x H x W map.
double occlusion_beta(std::span<const double> patch, const Tensor& teacher_map, PoolPolicy pool = PoolPolicy::Mean);

/// Similarity, best patch and beta for one target.
PatchMatch match_patches(const Tensor& teacher_patches, const Tensor& student_patches, const Tensor& teacher_map,
                         PoolPolicy pool = PoolPolicy::Mean);

/// Negative betas contribute zero.
double clamp_beta(double beta);

/// (sum_i max(beta_i, 0)) * plain_feature_loss. Zero when betas is empty.
double occlusion_aware_loss(const msda::MultiScaleFeatureSet& teacher, const msda::MultiScaleFeatureSet& student,
                            std::span<const double> betas);
ag::Var occlusion_aware_loss(std::span<const ag::Var> teacher, std::span<const ag::Var> student,
                             std::span<const double> betas);

/// Variant restricting target i's squared difference to its own box,
/// regions[i][l] being the box projected onto level l.
ag::Var occlusion_aware_loss_per_box(std::span<const ag::Var> teacher, std::span<const ag::Var> student,
                                     std::span<const double> betas,
                                     std::span<const std::vector<adapter::IndexRect>> regions);

}  // namespace oed::distill
