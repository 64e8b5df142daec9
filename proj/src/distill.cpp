// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/distill.hpp"

#include <algorithm>
#include <string>

#include "oed/errors.hpp"
#include "oed/kernels.hpp"
#include "oed/ops.hpp"

namespace oed::distill {

namespace {

std::vector<ag::Var> constants(const msda::MultiScaleFeatureSet& set) {
    std::vector<ag::Var> out;
    for (const auto& t : set.levels) out.push_back(ag::constant(t));
    return out;
}

void same_pyramid(std::span<const ag::Var> teacher, std::span<const ag::Var> student, const char* op) {
    if (teacher.size() != student.size())
        throw ValidationError(std::string(op) + ": teacher and student have different level counts");
    for (std::size_t l = 0; l < teacher.size(); ++l)
        if (teacher[l].shape() != student[l].shape())
            throw ValidationError(std::string(op) + ": shape mismatch at level " + std::to_string(l) + " (" +
                                  shape_to_string(teacher[l].shape()) + " vs " + shape_to_string(student[l].shape()) +
                                  ")");
}

}  // namespace

double plain_feature_loss(const Tensor& teacher, const Tensor& student) {
    if (teacher.shape() != student.shape())
        throw ValidationError("plain_feature_loss: shape mismatch " + shape_to_string(teacher.shape()) + " vs " +
                              shape_to_string(student.shape()));
    return kernels::sq_diff_sum(teacher.data().data(), student.data().data(), teacher.numel());
}

double plain_feature_loss(const msda::MultiScaleFeatureSet& teacher, const msda::MultiScaleFeatureSet& student) {
    const auto t = constants(teacher), s = constants(student);
    return plain_feature_loss(t, s).item();
}

ag::Var plain_feature_loss(std::span<const ag::Var> teacher, std::span<const ag::Var> student) {
    same_pyramid(teacher, student, "plain_feature_loss");
    require(!teacher.empty(), "plain_feature_loss: empty pyramid");
    ag::Var total;
    for (std::size_t l = 0; l < teacher.size(); ++l) {
        auto term = ag::sq_diff_sum(ag::detach(teacher[l]), student[l]);
        total = total.defined() ? ag::add(total, term) : term;
    }
    return total;
}

CandidateWeights candidate_weights(std::span<const Prediction> preds) {
    require(!preds.empty(), "candidate_weights: empty prediction list");
    CandidateWeights w;
    for (const auto& p : preds) {
        w.score_weights.push_back(p.score);
        w.box_weights.push_back(p.iou_with_matched_gt);
    }
    softmax_inplace(w.score_weights);
    softmax_inplace(w.box_weights);
    w.gamma.resize(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) w.gamma[i] = w.score_weights[i] * w.box_weights[i];
    return w;
}

ag::Var candidate_loss(std::span<const ag::Var> teacher, std::span<const ag::Var> student,
                       std::span<const Prediction> preds, std::span<const double> gamma,
                       std::span<const msda::QuerySample> queries) {
    same_pyramid(teacher, student, "candidate_loss");
    require(!teacher.empty(), "candidate_loss: empty pyramid");
    require(gamma.size() == preds.size(), "candidate_loss: one gamma per prediction required");
    const auto num_levels = teacher.size();
    for (const auto& p : preds) {
        if (p.query_index >= queries.size())
            throw ValidationError("candidate_loss: prediction references missing query " +
                                  std::to_string(p.query_index));
        const auto& q = queries[p.query_index];
        require(q.offsets.size() == num_levels * q.points && q.weights.size() == num_levels * q.points,
                "candidate_loss: query offsets/weights do not match the pyramid");
    }

    ag::Var total = ag::constant(Tensor::scalar(0.0));
    for (std::size_t l = 0; l < num_levels; ++l) {
        const auto h = teacher[l].shape()[1], w = teacher[l].shape()[2];
        std::vector<double> xs, ys, wts;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const auto& q = queries[preds[i].query_index];
            const auto base = msda::rescale_point(q.ref, h, w);
            for (std::size_t k = 0; k < q.points; ++k) {
                xs.push_back(base.x + q.offset(l, k).x);
                ys.push_back(base.y + q.offset(l, k).y);
                wts.push_back(gamma[i] * q.weight(l, k));
            }
        }
        if (xs.empty()) continue;
        const auto px = ag::constant(Tensor::vector(xs));
        const auto py = ag::constant(Tensor::vector(ys));
        const auto t_samples = ag::bilinear_sample(ag::detach(teacher[l]), px, py);
        const auto s_samples = ag::bilinear_sample(student[l], px, py);
        const auto per_point = ag::sum_rows(ag::square(ag::sub(s_samples, t_samples)));
        total = ag::add(total, ag::dot(ag::constant(Tensor::vector(std::move(wts))), per_point));
    }
    return total;
}

double candidate_loss(const msda::MultiScaleFeatureSet& teacher, const msda::MultiScaleFeatureSet& student,
                      std::span<const Prediction> preds, std::span<const msda::QuerySample> queries) {
    teacher.validate();
    student.validate();
    const auto w = candidate_weights(preds);
    const auto t = constants(teacher), s = constants(student);
    return candidate_loss(t, s, preds, w.gamma, queries).item();
}

Tensor patch_similarity(const Tensor& teacher_patches, const Tensor& student_patches) {
    require(teacher_patches.rank() == 2 && student_patches.rank() == 2, "patch_similarity: expected matrices");
    if (teacher_patches.dim(1) != student_patches.dim(1))
        throw ValidationError("patch_similarity: patch width mismatch");
    const auto jn = teacher_patches.dim(0), kn = student_patches.dim(0), d = teacher_patches.dim(1);
    Tensor s({jn, kn});
    for (std::size_t j = 0; j < jn; ++j)
        for (std::size_t k = 0; k < kn; ++k)
            s.at(j, k) = cosine_similarity(teacher_patches.data().subspan(j * d, d),
                                           student_patches.data().subspan(k * d, d));
    return s;
}

std::size_t best_patch(const Tensor& similarity) {
    require(similarity.rank() == 2 && similarity.dim(0) > 0 && similarity.dim(1) > 0, "best_patch: empty matrix");
    const auto jn = similarity.dim(0), kn = similarity.dim(1);
    std::size_t best = 0;
    double best_val = 0.0;
    for (std::size_t j = 0; j < jn; ++j) {
        double row_max = similarity.at(j, 0);
        for (std::size_t k = 1; k < kn; ++k) row_max = std::max(row_max, similarity.at(j, k));
        if (j == 0 || row_max > best_val) {
            best = j;
            best_val = row_max;
        }
    }
    return best;
}

double occlusion_beta(std::span<const double> patch, const Tensor& teacher_map, PoolPolicy pool) {
    require(teacher_map.rank() == 3 && teacher_map.numel() > 0, "occlusion_beta: expected a C x H x W map");
    if (patch.size() != teacher_map.dim(0)) throw ValidationError("occlusion_beta: channel width mismatch");
    const auto m = ag::constant(teacher_map);
    const auto pooled = pool == PoolPolicy::Mean ? ag::spatial_mean(m) : ag::spatial_max(m);
    return cosine_similarity(patch, pooled.value().data());
}

PatchMatch match_patches(const Tensor& teacher_patches, const Tensor& student_patches, const Tensor& teacher_map,
                         PoolPolicy pool) {
    PatchMatch m;
    m.similarity = patch_similarity(teacher_patches, student_patches);
    m.best_teacher_patch = best_patch(m.similarity);
    const auto d = teacher_patches.dim(1);
    m.beta = occlusion_beta(teacher_patches.data().subspan(m.best_teacher_patch * d, d), teacher_map, pool);
    return m;
}

double clamp_beta(double beta) { return beta > 0.0 ? beta : 0.0; }

ag::Var occlusion_aware_loss(std::span<const ag::Var> teacher, std::span<const ag::Var> student,
                             std::span<const double> betas) {
    same_pyramid(teacher, student, "occlusion_aware_loss");
    double weight = 0.0;
    for (double b : betas) weight += clamp_beta(b);
    if (betas.empty() || teacher.empty()) return ag::constant(Tensor::scalar(0.0));
    return ag::scale(plain_feature_loss(teacher, student), weight);
}

double occlusion_aware_loss(const msda::MultiScaleFeatureSet& teacher, const msda::MultiScaleFeatureSet& student,
                            std::span<const double> betas) {
    const auto t = constants(teacher), s = constants(student);
    return occlusion_aware_loss(t, s, betas).item();
}

ag::Var occlusion_aware_loss_per_box(std::span<const ag::Var> teacher, std::span<const ag::Var> student,
                                     std::span<const double> betas,
                                     std::span<const std::vector<adapter::IndexRect>> regions) {
    same_pyramid(teacher, student, "occlusion_aware_loss_per_box");
    require(regions.size() == betas.size(), "occlusion_aware_loss_per_box: one region set per target required");
    ag::Var total = ag::constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < betas.size(); ++i) {
        const double b = clamp_beta(betas[i]);
        require(regions[i].size() == teacher.size(), "occlusion_aware_loss_per_box: one region per level required");
        if (b == 0.0) continue;
        for (std::size_t l = 0; l < teacher.size(); ++l) {
            const auto& r = regions[i][l];
            const auto t = ag::region_patches(ag::detach(teacher[l]), r.y0, r.y1, r.x0, r.x1);
            const auto s = ag::region_patches(student[l], r.y0, r.y1, r.x0, r.x1);
            total = ag::add(total, ag::scale(ag::sq_diff_sum(t, s), b));
        }
    }
    return total;
}

}  // namespace oed::distill
