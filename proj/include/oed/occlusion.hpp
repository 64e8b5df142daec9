// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Occlusion augmentation: instance and occluder templates, and hard-mask
// compositing of occluders over annotated targets. The clean image is never
// modified; the occluded image differs from it only under occluder pixels.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "oed/boxes.hpp"
#include "oed/errors.hpp"
#include "oed/raster.hpp"

namespace oed::occlusion {

struct InstanceTemplate {
    RgbImage image_patch;
    Mask mask;
    Box source_box;
};

struct OccluderTemplate {
    RgbImage image_patch;
    Mask mask;
    std::string label;
};

struct Target {
    Box box;
    int class_id = 1;
    Mask mask;  // full image extent
};

/// A clean annotated image.
struct CleanScene {
    RgbImage image;
    std::vector<Target> targets;
};

struct Placement {
    std::size_t template_id = 0;
    double x = 0.0;  // template center in image pixels
    double y = 0.0;
    double scale = 1.0;
    double rotation = 0.0;  // radians
    std::size_t target = 0; // target the placement was aimed at
};

struct OcclusionScene {
    RgbImage clean_image;
    RgbImage occluded_image;
    std::vector<Target> targets;
    Mask occluder_mask;  // union of rendered placements
    std::vector<Placement> placements;
    std::vector<double> coverage_per_target;
};

struct CoveragePolicy {
    double min_coverage = 0.2;
    double max_coverage = 0.7;
    std::size_t max_occluders_per_target = 3;
    std::size_t max_attempts_per_target = 64;
    double select_probability = 1.0;  // chance that a target is occluded at all
    double min_scale = 0.25;
    double max_scale = 6.0;
    double jitter = 0.35;  // anchor jitter as a fraction of the target's equivalent radius
    void validate() const;
};

/// Thrown when a target cannot be brought into the coverage range.
class CoverageError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// ---- templates

/// Annotation file (JSON):
///   { "images": [ {"id": "...", "file": "relative.png"} ],
///     "masks":  [ {"image": "<id>", "file": "mask.png", "label": "leaves"} ] }
/// Paths are relative to the annotation file. One template per mask,
/// cropped to the mask's bounding box.
std::vector<OccluderTemplate> ingest_occluder_masks(const std::filesystem::path& annotation_file);

struct SynthesisConfig {
    double min_size = 4.0;  // semi-major axis range in pixels
    double max_size = 10.0;
    std::size_t min_lobes = 2;
    std::size_t max_lobes = 4;
    double branch_fraction = 0.25;  // share of thin brown "branch" shapes
    void validate() const;
};

/// Leaf-like unions of ellipses sharing a 3x3 core, so every mask is one
/// 4-connected component of at least 9 pixels.
std::vector<OccluderTemplate> synthesize_occluders(std::uint64_t seed, std::size_t count,
                                                   const SynthesisConfig& config = {});

inline constexpr std::size_t kMinOccluderArea = 9;

std::vector<InstanceTemplate> extract_instance_templates(const CleanScene& scene);

/// For every instance, the occluder ids able to reach the minimum coverage
/// within the scale limits of compositing.
std::vector<std::vector<std::size_t>> build_candidate_set(const std::vector<InstanceTemplate>& instances,
                                                          const std::vector<OccluderTemplate>& occluders,
                                                          const CoveragePolicy& policy);

// ---- scenes

struct SceneConfig {
    std::size_t width = 64;
    std::size_t height = 64;
    std::size_t min_targets = 1;
    std::size_t max_targets = 3;
    double min_radius = 5.0;
    double max_radius = 11.0;
    std::size_t distractors = 2;  // background leaves away from fruit
    void validate() const;
};

/// Synthetic orchard-like clean scene: textured background, round fruit.
CleanScene render_clean_scene(std::uint64_t seed, const SceneConfig& config);

/// Renders one placement's footprint (nearest-neighbour, rotated and scaled).
Mask placement_footprint(const OccluderTemplate& tmpl, const Placement& p, std::size_t width, std::size_t height);

OcclusionScene composite_scene(const CleanScene& clean, const std::vector<OccluderTemplate>& occluders,
                               const CoveragePolicy& policy, std::uint64_t seed);

/// Coverage of each target recomputed from masks.
std::vector<double> measure_coverage(const std::vector<Target>& targets, const Mask& occluder_mask);

// ---- datasets

struct DatasetConfig {
    std::size_t count = 10;
    std::uint64_t seed = 0;
    SceneConfig scene;
    CoveragePolicy coverage;
    SynthesisConfig synthesis;
    std::size_t occluder_bank = 24;
    std::filesystem::path occluder_annotations;  // empty: synthesize
    std::size_t max_retries = 8;
    void validate() const;
};

nlohmann::json to_json(const DatasetConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

/// Writes PNGs plus dataset.json (see docs/dataset_format.md) into out_dir.
void generate_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);

inline constexpr const char* kManifestName = "dataset.json";

struct SceneRecord {
    std::string id;
    std::uint64_t seed = 0;
    RgbImage clean;
    RgbImage occluded;
    std::vector<Box> boxes;
    std::vector<int> class_ids;
    std::vector<Mask> target_masks;
    Mask occluder_mask;
    std::vector<double> coverage;
};

struct Dataset {
    std::filesystem::path root;
    std::vector<SceneRecord> scenes;
};

Dataset load_dataset(const std::filesystem::path& dir, bool load_masks = false);

}  // namespace oed::occlusion
