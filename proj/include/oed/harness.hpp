// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Teacher-student training. Per scene the teacher (EMA of the student) runs
// on the clean image without gradient and the student on the occluded one:
//
//   total = L_det + gamma1 * L_candidate + gamma2 * L_occlusion_aware
//
// The occlusion-aware term is evaluated level by level with per-level betas.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oed/detector.hpp"
#include "oed/distill.hpp"
#include "oed/ema.hpp"
#include "oed/eval.hpp"
#include "oed/occlusion.hpp"
#include "oed/params.hpp"

namespace oed::harness {

enum class TeacherInit { Copy, Snapshot };

struct TrainConfig {
    std::uint64_t seed = 0;
    std::size_t epochs = 50;
    std::size_t batch_size = 1;
    double learning_rate = 1e-3;
    double grad_clip_norm = 0.0;  // 0 disables clipping
    double gamma1 = 1.0;
    double gamma2 = 15.0;
    bool ema = true;
    bool occlusion_augment = true;
    bool multiscale_distill = true;
    double ema_decay_start = ema::kDefaultDecayStart;
    std::size_t ema_total_steps = 0;  // 0: epochs * steps per epoch
    std::optional<double> ema_fixed_tau;  // overrides the schedule when set
    TeacherInit teacher_init = TeacherInit::Copy;
    std::filesystem::path teacher_snapshot;
    std::filesystem::path dataset;
    std::filesystem::path test_dataset;  // empty: no evaluation
    std::filesystem::path output_dir;    // empty: nothing written
    distill::PoolPolicy beta_pool = distill::PoolPolicy::Mean;
    bool oa_per_box = false;
    std::size_t max_train_scenes = 0;  // 0: all
    std::size_t eval_every = 1;        // epochs; 0: final only
    bool evaluate_occluded = true;     // test on occluded (true) or clean images
    bool plots = true;
    detector::DetectorConfig detector;
    detector::LossWeights loss;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// "seed" is mandatory; other keys default. Unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

/// One annotated pair as consumed by training.
struct TrainScene {
    std::string id;
    RgbImage clean;
    RgbImage occluded;
    std::vector<Box> boxes;
    std::vector<int> class_ids;
};

std::vector<TrainScene> scenes_from_dataset(const occlusion::Dataset& ds);
TrainScene scene_from_composite(const occlusion::OcclusionScene& s, std::string id = "scene");

struct TargetWeights {
    std::vector<double> beta;        // per level, clamped value used in the loss
    std::vector<double> raw_beta;    // per level, before clamping
    std::vector<std::size_t> j_star; // per level
};

struct LossBreakdown {
    std::size_t step = 0;
    double l_det = 0.0;
    double l_det_class = 0.0;
    double l_det_l1 = 0.0;
    double l_det_giou = 0.0;
    double l_candidate = 0.0;
    double l_occlusion_aware = 0.0;
    double total = 0.0;  // value of the differentiated graph
    std::vector<double> gamma;           // per teacher prediction
    std::vector<TargetWeights> targets;  // per annotated target
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainState {
    TrainConfig config;
    ParamSet student;
    ema::EmaState ema;  // ema.teacher holds the teacher parameters
    AdamState adam;
    std::size_t step = 0;
};

TrainState init_state(const TrainConfig& config, std::size_t total_steps);

struct StepResult {
    LossBreakdown breakdown;
    std::vector<Tensor> gradients;  // aligned with student parameters
};

/// Loss and student gradients for one scene; no state change.
StepResult compute_step(const TrainState& state, const TrainScene& scene);

/// Optimizer step with the given gradients, then the EMA teacher update.
void apply_update(TrainState& state, std::vector<Tensor> gradients);

/// compute_step followed by apply_update.
LossBreakdown train_step(TrainState& state, const TrainScene& scene);

void adam_step(ParamSet& params, AdamState& adam, const std::vector<Tensor>& grads, double lr);

/// Scores every test scene with the given parameters.
eval::Summary evaluate(const ParamSet& params, const detector::DetectorConfig& det,
                       const std::vector<TrainScene>& scenes, bool occluded,
                       std::vector<eval::ImagePredictions>* predictions = nullptr);

struct EpochRecord {
    std::size_t epoch = 0;
    double l_det = 0.0;
    double l_candidate = 0.0;
    double l_occlusion_aware = 0.0;
    double total = 0.0;
    std::optional<eval::Summary> student;
    std::optional<eval::Summary> teacher;
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    std::optional<eval::Summary> student;
    std::optional<eval::Summary> teacher;
    double max_recomposition_error = 0.0;
    std::size_t steps = 0;
    double seconds = 0.0;
    ParamSet student_params;
    ParamSet teacher_params;
};

/// Full run. Datasets may be passed in to skip loading from disk.
TrainResult run_training(const TrainConfig& config, const std::vector<TrainScene>* train = nullptr,
                         const std::vector<TrainScene>* test = nullptr);

// ---- ablation

struct AblationRow {
    std::string name;
    TrainConfig config;
};

struct AblationGrid {
    std::vector<AblationRow> rows;
    std::vector<std::uint64_t> seeds;  // each row runs once per seed
};

/// {"base": {TrainConfig}, "seeds": [..], "rows": [{"name": .., overrides..}]};
/// without "rows" the seven toggle combinations of the standard table are used.
AblationGrid load_ablation_grid(const nlohmann::json& j);

struct AblationCell {
    std::string row;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::optional<eval::Summary> student;
    std::optional<eval::Summary> teacher;
    double seconds = 0.0;
};

struct AblationReport {
    std::vector<AblationCell> cells;
    nlohmann::json to_json() const;
    std::string to_markdown(const AblationGrid& grid) const;
};

AblationReport run_ablation(const AblationGrid& grid, const std::filesystem::path& out_dir,
                            const std::vector<TrainScene>* train = nullptr,
                            const std::vector<TrainScene>* test = nullptr);

}  // namespace oed::harness
