// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

#include "oed/config_json.hpp"
#include "oed/rng.hpp"

namespace oed::occlusion {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

struct Rgb {
    double r, g, b;
};

void put(RgbImage& img, std::size_t x, std::size_t y, const Rgb& c) {
    auto* px = img.at(x, y);
    px[0] = clamp_u8(c.r);
    px[1] = clamp_u8(c.g);
    px[2] = clamp_u8(c.b);
}

/// Crops image and mask to the mask's bounding box.
template <typename Tmpl>
Tmpl crop_to_mask(const RgbImage& image, const Mask& mask) {
    const Box b = mask.bounds();
    const auto x0 = static_cast<std::size_t>(b.x_min);
    const auto y0 = static_cast<std::size_t>(b.y_min);
    const auto w = static_cast<std::size_t>(b.width());
    const auto h = static_cast<std::size_t>(b.height());
    Tmpl t;
    t.image_patch = RgbImage(w, h);
    t.mask = Mask(w, h);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const auto* src = image.at(x0 + x, y0 + y);
            std::copy(src, src + 3, t.image_patch.at(x, y));
            t.mask.set(x, y, mask.get(x0 + x, y0 + y));
        }
    }
    return t;
}

/// Keeps the 4-connected component containing (sx, sy).
Mask component_at(const Mask& m, std::size_t sx, std::size_t sy) {
    Mask out(m.width, m.height);
    if (!m.get(sx, sy)) return out;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{sx, sy}};
    out.set(sx, sy);
    while (!stack.empty()) {
        auto [x, y] = stack.back();
        stack.pop_back();
        const std::pair<long, long> nb[4] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
        for (auto [dx, dy] : nb) {
            const long nx = static_cast<long>(x) + dx;
            const long ny = static_cast<long>(y) + dy;
            if (nx < 0 || ny < 0 || nx >= static_cast<long>(m.width) || ny >= static_cast<long>(m.height)) continue;
            const auto ux = static_cast<std::size_t>(nx);
            const auto uy = static_cast<std::size_t>(ny);
            if (m.get(ux, uy) && !out.get(ux, uy)) {
                out.set(ux, uy);
                stack.emplace_back(ux, uy);
            }
        }
    }
    return out;
}

struct Ellipse {
    double cx, cy, a, b, angle;
    bool contains(double x, double y) const {
        const double dx = x - cx;
        const double dy = y - cy;
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double u = (c * dx + s * dy) / a;
        const double v = (-s * dx + c * dy) / b;
        return u * u + v * v <= 1.0;
    }
};

double coverage_of(const Mask& target, const Mask& cover) {
    const std::size_t n = target.count();
    if (n == 0) return 0.0;
    return static_cast<double>(overlap_count(target, cover)) / static_cast<double>(n);
}

std::pair<double, double> centroid(const Mask& m) {
    double sx = 0.0;
    double sy = 0.0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < m.height; ++y) {
        for (std::size_t x = 0; x < m.width; ++x) {
            if (m.get(x, y)) {
                sx += static_cast<double>(x) + 0.5;
                sy += static_cast<double>(y) + 0.5;
                ++n;
            }
        }
    }
    require(n > 0, "centroid of an empty mask");
    return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

/// Union of the footprint with `base`, restricted to a target, counted.
std::size_t covered_with(const Mask& target, const Mask& base, const Mask& footprint) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < target.data.size(); ++i) {
        if (target.data[i] && (base.data[i] || footprint.data[i])) ++n;
    }
    return n;
}

std::string scene_id(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%04zu", k);
    return buf;
}

}  // namespace

// ---- validation

void CoveragePolicy::validate() const {
    require(std::isfinite(min_coverage) && std::isfinite(max_coverage), "coverage bounds must be finite");
    require(min_coverage >= 0.0 && min_coverage <= max_coverage && max_coverage <= 0.95,
            "coverage range must satisfy 0 <= min <= max <= 0.95");
    require(max_occluders_per_target >= 1, "max_occluders_per_target must be >= 1");
    require(max_attempts_per_target >= 1, "max_attempts_per_target must be >= 1");
    require(select_probability >= 0.0 && select_probability <= 1.0, "select_probability must be in [0, 1]");
    require(min_scale > 0.0 && min_scale <= max_scale && std::isfinite(max_scale), "scale range must satisfy 0 < min <= max");
    require(jitter >= 0.0 && std::isfinite(jitter), "jitter must be >= 0");
}

void SynthesisConfig::validate() const {
    require(min_size >= 0.0 && min_size <= max_size && max_size <= 64.0, "occluder size range must satisfy 0 <= min <= max <= 64");
    require(min_lobes >= 1 && min_lobes <= max_lobes && max_lobes <= 8, "lobe range must satisfy 1 <= min <= max <= 8");
    require(branch_fraction >= 0.0 && branch_fraction <= 1.0, "branch_fraction must be in [0, 1]");
}

void SceneConfig::validate() const {
    require(width >= 16 && height >= 16 && width <= 1024 && height <= 1024, "scene extent must be within [16, 1024]");
    require(min_targets >= 1 && min_targets <= max_targets && max_targets <= 16, "target count range must satisfy 1 <= min <= max <= 16");
    require(min_radius >= 2.0 && min_radius <= max_radius, "radius range must satisfy 2 <= min <= max");
    require(2.0 * max_radius + 2.0 < static_cast<double>(std::min(width, height)), "fruit radius too large for the scene");
}

void DatasetConfig::validate() const {
    scene.validate();
    coverage.validate();
    synthesis.validate();
    require(occluder_bank >= 1, "occluder_bank must be >= 1");
}

// ---- templates

std::vector<OccluderTemplate> ingest_occluder_masks(const fs::path& annotation_file) {
    std::ifstream in(annotation_file);
    if (!in) throw IoError("cannot open annotation file " + annotation_file.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed annotation file: ") + e.what());
    }
    const fs::path base = annotation_file.parent_path();
    std::vector<OccluderTemplate> out;
    try {
        require(doc.is_object() && doc.contains("images") && doc.contains("masks"),
                "annotation file needs 'images' and 'masks'");
        std::map<std::string, fs::path> images;
        for (const auto& im : doc.at("images")) {
            images[im.at("id").get<std::string>()] = base / im.at("file").get<std::string>();
        }
        std::map<std::string, RgbImage> cache;
        for (const auto& m : doc.at("masks")) {
            const auto ref = m.at("image").get<std::string>();
            const auto it = images.find(ref);
            require(it != images.end(), "mask references unknown image '" + ref + "'");
            if (!cache.contains(ref)) cache[ref] = read_png_rgb(it->second);
            const RgbImage& image = cache[ref];
            const Mask mask = read_png_mask(base / m.at("file").get<std::string>());
            require(mask.width == image.width && mask.height == image.height,
                    "mask extent differs from image '" + ref + "'");
            require(!mask.empty(), "empty occluder mask " + m.at("file").get<std::string>());
            auto t = crop_to_mask<OccluderTemplate>(image, mask);
            t.label = m.value("label", std::string("leaves"));
            out.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed annotation file: ") + e.what());
    }
    return out;
}

std::vector<OccluderTemplate> synthesize_occluders(std::uint64_t seed, std::size_t count, const SynthesisConfig& config) {
    require(count >= 1, "synthesize_occluders: count must be >= 1");
    config.validate();
    std::vector<OccluderTemplate> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(Rng::mix(seed, i));
        const bool branch = rng.uniform() < config.branch_fraction;
        std::vector<Ellipse> lobes;
        Rgb base{};
        if (branch) {
            const double a = rng.uniform(config.min_size, config.max_size) * 1.4;
            const double b = rng.uniform(1.0, 2.0);
            const double ang = rng.uniform(0.0, std::numbers::pi);
            lobes.push_back({0.0, 0.0, std::max(a, 0.5), b, ang});
            base = {rng.uniform(90, 120), rng.uniform(60, 80), rng.uniform(30, 45)};
        } else {
            const auto n = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(config.min_lobes),
                                                                static_cast<std::int64_t>(config.max_lobes)));
            for (std::size_t k = 0; k < n; ++k) {
                const double a = std::max(rng.uniform(config.min_size, config.max_size), 0.5);
                const double b = a * rng.uniform(0.4, 0.7);
                const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
                // centre on the major axis at distance < a, so the lobe contains the origin
                const double d = a * rng.uniform(0.0, 0.6);
                lobes.push_back({d * std::cos(ang), d * std::sin(ang), a, b, ang});
            }
            base = {rng.uniform(25, 55), rng.uniform(95, 135), rng.uniform(20, 45)};
        }
        double reach = 1.0;
        for (const auto& e : lobes) reach = std::max(reach, std::hypot(e.cx, e.cy) + e.a);
        const auto half = static_cast<std::size_t>(std::ceil(reach)) + 1;
        const std::size_t side = 2 * half + 1;
        Mask raw(side, side);
        for (std::size_t y = 0; y < side; ++y) {
            for (std::size_t x = 0; x < side; ++x) {
                const double px = static_cast<double>(x) - static_cast<double>(half);
                const double py = static_cast<double>(y) - static_cast<double>(half);
                bool in = std::abs(px) <= 1.0 && std::abs(py) <= 1.0;  // 3x3 core
                for (const auto& e : lobes) in = in || e.contains(px, py);
                raw.set(x, y, in);
            }
        }
        OccluderTemplate t;
        t.mask = component_at(raw, half, half);
        t.image_patch = RgbImage(side, side);
        for (std::size_t y = 0; y < side; ++y) {
            for (std::size_t x = 0; x < side; ++x) {
                const double shade = rng.uniform(-12.0, 12.0);
                if (!t.mask.get(x, y)) continue;
                put(t.image_patch, x, y, {base.r + shade, base.g + shade, base.b + 0.5 * shade});
            }
        }
        t.label = branch ? "branches" : "leaves";
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<InstanceTemplate> extract_instance_templates(const CleanScene& scene) {
    std::vector<InstanceTemplate> out;
    for (const auto& t : scene.targets) {
        require(!t.mask.empty(), "target with empty mask");
        auto inst = crop_to_mask<InstanceTemplate>(scene.image, t.mask);
        inst.source_box = t.mask.bounds();
        out.push_back(std::move(inst));
    }
    return out;
}

Mask placement_footprint(const OccluderTemplate& tmpl, const Placement& p, std::size_t width, std::size_t height) {
    Mask out(width, height);
    const double c = std::cos(p.rotation);
    const double s = std::sin(p.rotation);
    const double tw = static_cast<double>(tmpl.mask.width);
    const double th = static_cast<double>(tmpl.mask.height);
    const double reach = 0.5 * std::hypot(tw, th) * p.scale + 1.0;
    const long x0 = std::max(0L, static_cast<long>(std::floor(p.x - reach)));
    const long x1 = std::min(static_cast<long>(width), static_cast<long>(std::ceil(p.x + reach)));
    const long y0 = std::max(0L, static_cast<long>(std::floor(p.y - reach)));
    const long y1 = std::min(static_cast<long>(height), static_cast<long>(std::ceil(p.y + reach)));
    for (long y = y0; y < y1; ++y) {
        for (long x = x0; x < x1; ++x) {
            const double dx = (static_cast<double>(x) + 0.5 - p.x) / p.scale;
            const double dy = (static_cast<double>(y) + 0.5 - p.y) / p.scale;
            const double u = c * dx + s * dy + 0.5 * tw;
            const double v = -s * dx + c * dy + 0.5 * th;
            if (u < 0.0 || v < 0.0 || u >= tw || v >= th) continue;
            if (tmpl.mask.get(static_cast<std::size_t>(u), static_cast<std::size_t>(v))) {
                out.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
            }
        }
    }
    return out;
}

namespace {

void paint_placement(RgbImage& img, const OccluderTemplate& tmpl, const Placement& p, const Mask& footprint) {
    const double c = std::cos(p.rotation);
    const double s = std::sin(p.rotation);
    const double tw = static_cast<double>(tmpl.mask.width);
    const double th = static_cast<double>(tmpl.mask.height);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            if (!footprint.get(x, y)) continue;
            const double dx = (static_cast<double>(x) + 0.5 - p.x) / p.scale;
            const double dy = (static_cast<double>(y) + 0.5 - p.y) / p.scale;
            const auto u = static_cast<std::size_t>(c * dx + s * dy + 0.5 * tw);
            const auto v = static_cast<std::size_t>(-s * dx + c * dy + 0.5 * th);
            const auto* src = tmpl.image_patch.at(u, v);
            std::copy(src, src + 3, img.at(x, y));
        }
    }
}

Placement centred(std::size_t id, double x, double y, double scale) {
    Placement p;
    p.template_id = id;
    p.x = x;
    p.y = y;
    p.scale = scale;
    return p;
}

}  // namespace

std::vector<std::vector<std::size_t>> build_candidate_set(const std::vector<InstanceTemplate>& instances,
                                                          const std::vector<OccluderTemplate>& occluders,
                                                          const CoveragePolicy& policy) {
    policy.validate();
    std::vector<std::vector<std::size_t>> out(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const Mask& m = instances[i].mask;
        require(!m.empty(), "instance template with empty mask");
        const auto [cx, cy] = centroid(m);
        for (std::size_t k = 0; k < occluders.size(); ++k) {
            const Mask fp = placement_footprint(occluders[k], centred(k, cx, cy, policy.max_scale), m.width, m.height);
            if (coverage_of(m, fp) >= policy.min_coverage) out[i].push_back(k);
        }
    }
    return out;
}

std::vector<double> measure_coverage(const std::vector<Target>& targets, const Mask& occluder_mask) {
    std::vector<double> out;
    out.reserve(targets.size());
    for (const auto& t : targets) out.push_back(coverage_of(t.mask, occluder_mask));
    return out;
}

// ---- scenes

CleanScene render_clean_scene(std::uint64_t seed, const SceneConfig& config) {
    config.validate();
    Rng rng(seed);
    const std::size_t W = config.width;
    const std::size_t H = config.height;
    CleanScene scene;
    scene.image = RgbImage(W, H);
    const Rgb bg{rng.uniform(60, 90), rng.uniform(120, 150), rng.uniform(50, 75)};
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const double n = rng.uniform(-10.0, 10.0);
            put(scene.image, x, y, {bg.r + n, bg.g + n, bg.b + n});
        }
    }
    // background foliage, drawn before the fruit so it never hides a target
    for (std::size_t k = 0; k < config.distractors; ++k) {
        const Ellipse e{rng.uniform(0, static_cast<double>(W)), rng.uniform(0, static_cast<double>(H)),
                        rng.uniform(4, 9), rng.uniform(2, 4), rng.uniform(0, std::numbers::pi)};
        const Rgb c{rng.uniform(30, 50), rng.uniform(90, 110), rng.uniform(30, 45)};
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                if (e.contains(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) put(scene.image, x, y, c);
            }
        }
    }
    const auto n_targets = static_cast<std::size_t>(
        rng.integer(static_cast<std::int64_t>(config.min_targets), static_cast<std::int64_t>(config.max_targets)));
    struct Disc {
        double x, y, r;
    };
    std::vector<Disc> discs;
    for (std::size_t attempt = 0; discs.size() < n_targets && attempt < 200; ++attempt) {
        const double r = rng.uniform(config.min_radius, config.max_radius);
        const double x = rng.uniform(r + 1.0, static_cast<double>(W) - r - 1.0);
        const double y = rng.uniform(r + 1.0, static_cast<double>(H) - r - 1.0);
        bool ok = true;
        for (const auto& d : discs) ok = ok && std::hypot(d.x - x, d.y - y) >= d.r + r + 1.0;
        if (ok) discs.push_back({x, y, r});
    }
    for (const auto& d : discs) {
        const Rgb c{rng.uniform(170, 230), rng.uniform(20, 60), rng.uniform(20, 50)};
        Target t;
        t.class_id = 1;
        t.mask = Mask(W, H);
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                const double dx = static_cast<double>(x) + 0.5 - d.x;
                const double dy = static_cast<double>(y) + 0.5 - d.y;
                const double rr = std::hypot(dx, dy);
                if (rr > d.r) continue;
                // upper-left highlight
                const double lit = 1.0 + 0.35 * std::max(0.0, 1.0 - std::hypot(dx + 0.35 * d.r, dy + 0.35 * d.r) / (0.6 * d.r));
                put(scene.image, x, y, {c.r * lit, c.g * lit + 60.0 * (lit - 1.0), c.b * lit});
                t.mask.set(x, y);
            }
        }
        t.box = t.mask.bounds();
        scene.targets.push_back(std::move(t));
    }
    return scene;
}

OcclusionScene composite_scene(const CleanScene& clean, const std::vector<OccluderTemplate>& occluders,
                               const CoveragePolicy& policy, std::uint64_t seed) {
    policy.validate();
    require(!clean.targets.empty(), "composite_scene: at least one target required");
    const std::size_t W = clean.image.width;
    const std::size_t H = clean.image.height;
    for (const auto& t : clean.targets) {
        require(t.mask.width == W && t.mask.height == H, "target mask extent differs from image");
        require(!t.mask.empty(), "target with empty mask");
    }

    OcclusionScene out;
    out.clean_image = clean.image;
    out.occluded_image = clean.image;
    out.targets = clean.targets;
    out.occluder_mask = Mask(W, H);
    if (policy.max_coverage == 0.0) {
        out.coverage_per_target.assign(clean.targets.size(), 0.0);
        return out;
    }
    require(!occluders.empty(), "composite_scene: no occluder templates");

    std::vector<InstanceTemplate> instances = extract_instance_templates(clean);
    const auto candidates = build_candidate_set(instances, occluders, policy);

    std::vector<std::size_t> target_area;
    for (const auto& t : clean.targets) target_area.push_back(t.mask.count());

    Rng rng(seed);
    for (std::size_t i = 0; i < clean.targets.size(); ++i) {
        const double select = rng.uniform();
        const double goal = rng.uniform(policy.min_coverage, policy.max_coverage);
        if (select >= policy.select_probability) continue;
        const Mask& tm = clean.targets[i].mask;
        if (candidates[i].empty()) {
            throw CoverageError("target " + std::to_string(i) + ": no occluder can reach coverage " +
                                std::to_string(policy.min_coverage) + " within the scale limit");
        }
        const auto [cx, cy] = centroid(tm);
        const double radius = std::sqrt(static_cast<double>(target_area[i]) / std::numbers::pi);
        const auto goal_px = static_cast<double>(target_area[i]) * goal;

        std::size_t placed = 0;
        for (std::size_t attempt = 0; attempt < policy.max_attempts_per_target; ++attempt) {
            const double cov = coverage_of(tm, out.occluder_mask);
            if (cov >= goal || placed >= policy.max_occluders_per_target) break;

            const auto pick = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(candidates[i].size()) - 1));
            Placement p;
            p.template_id = candidates[i][pick];
            p.target = i;
            p.rotation = rng.uniform(0.0, 2.0 * std::numbers::pi);
            p.x = std::clamp(cx + rng.uniform(-1.0, 1.0) * policy.jitter * radius, 0.0, static_cast<double>(W));
            p.y = std::clamp(cy + rng.uniform(-1.0, 1.0) * policy.jitter * radius, 0.0, static_cast<double>(H));
            const OccluderTemplate& tmpl = occluders[p.template_id];

            // bisect on scale so the target lands near its goal
            auto covered_at = [&](double scale) {
                p.scale = scale;
                return static_cast<double>(covered_with(tm, out.occluder_mask, placement_footprint(tmpl, p, W, H)));
            };
            double lo = policy.min_scale;
            double hi = policy.max_scale;
            double scale = hi;
            if (covered_at(lo) >= goal_px) {
                scale = lo;
            } else if (covered_at(hi) > goal_px) {
                for (int it = 0; it < 30; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (covered_at(mid) >= goal_px ? hi : lo) = mid;
                }
                scale = hi;
            }
            p.scale = scale;
            const Mask fp = placement_footprint(tmpl, p, W, H);
            if (overlap_count(tm, fp) == 0) continue;

            Mask merged = out.occluder_mask;
            for (std::size_t k = 0; k < merged.data.size(); ++k) merged.data[k] |= fp.data[k];
            bool ok = true;
            for (std::size_t j = 0; j < clean.targets.size() && ok; ++j) {
                ok = coverage_of(clean.targets[j].mask, merged) <= policy.max_coverage;
            }
            if (!ok) continue;
            out.occluder_mask = std::move(merged);
            paint_placement(out.occluded_image, tmpl, p, fp);
            out.placements.push_back(p);
            ++placed;
        }
        const double cov = coverage_of(tm, out.occluder_mask);
        if (cov < policy.min_coverage) {
            throw CoverageError("target " + std::to_string(i) + ": coverage " + std::to_string(cov) +
                                " below " + std::to_string(policy.min_coverage) + " after " + std::to_string(placed) +
                                " placements");
        }
    }
    out.coverage_per_target = measure_coverage(out.targets, out.occluder_mask);
    return out;
}

// ---- config json

json to_json(const DatasetConfig& c) {
    return json{
        {"count", c.count},
        {"seed", c.seed},
        {"occluder_bank", c.occluder_bank},
        {"occluder_annotations", c.occluder_annotations.string()},
        {"max_retries", c.max_retries},
        {"scene",
         {{"width", c.scene.width},
          {"height", c.scene.height},
          {"min_targets", c.scene.min_targets},
          {"max_targets", c.scene.max_targets},
          {"min_radius", c.scene.min_radius},
          {"max_radius", c.scene.max_radius},
          {"distractors", c.scene.distractors}}},
        {"coverage",
         {{"min_coverage", c.coverage.min_coverage},
          {"max_coverage", c.coverage.max_coverage},
          {"max_occluders_per_target", c.coverage.max_occluders_per_target},
          {"max_attempts_per_target", c.coverage.max_attempts_per_target},
          {"select_probability", c.coverage.select_probability},
          {"min_scale", c.coverage.min_scale},
          {"max_scale", c.coverage.max_scale},
          {"jitter", c.coverage.jitter}}},
        {"synthesis",
         {{"min_size", c.synthesis.min_size},
          {"max_size", c.synthesis.max_size},
          {"min_lobes", c.synthesis.min_lobes},
          {"max_lobes", c.synthesis.max_lobes},
          {"branch_fraction", c.synthesis.branch_fraction}}},
    };
}

DatasetConfig dataset_config_from_json(const json& j) {
    json merged = to_json(DatasetConfig{});
    overlay_known(merged, j);
    DatasetConfig c;
    try {
        c.count = merged.at("count").get<std::size_t>();
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.occluder_bank = merged.at("occluder_bank").get<std::size_t>();
        c.occluder_annotations = merged.at("occluder_annotations").get<std::string>();
        c.max_retries = merged.at("max_retries").get<std::size_t>();
        const auto& s = merged.at("scene");
        c.scene.width = s.at("width").get<std::size_t>();
        c.scene.height = s.at("height").get<std::size_t>();
        c.scene.min_targets = s.at("min_targets").get<std::size_t>();
        c.scene.max_targets = s.at("max_targets").get<std::size_t>();
        c.scene.min_radius = s.at("min_radius").get<double>();
        c.scene.max_radius = s.at("max_radius").get<double>();
        c.scene.distractors = s.at("distractors").get<std::size_t>();
        const auto& v = merged.at("coverage");
        c.coverage.min_coverage = v.at("min_coverage").get<double>();
        c.coverage.max_coverage = v.at("max_coverage").get<double>();
        c.coverage.max_occluders_per_target = v.at("max_occluders_per_target").get<std::size_t>();
        c.coverage.max_attempts_per_target = v.at("max_attempts_per_target").get<std::size_t>();
        c.coverage.select_probability = v.at("select_probability").get<double>();
        c.coverage.min_scale = v.at("min_scale").get<double>();
        c.coverage.max_scale = v.at("max_scale").get<double>();
        c.coverage.jitter = v.at("jitter").get<double>();
        const auto& y = merged.at("synthesis");
        c.synthesis.min_size = y.at("min_size").get<double>();
        c.synthesis.max_size = y.at("max_size").get<double>();
        c.synthesis.min_lobes = y.at("min_lobes").get<std::size_t>();
        c.synthesis.max_lobes = y.at("max_lobes").get<std::size_t>();
        c.synthesis.branch_fraction = y.at("branch_fraction").get<double>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("dataset config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---- datasets

void generate_dataset(const DatasetConfig& config, const fs::path& out_dir) {
    config.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    const std::vector<OccluderTemplate> bank =
        config.occluder_annotations.empty()
            ? synthesize_occluders(Rng::mix(config.seed, 0xB0CCu), config.occluder_bank, config.synthesis)
            : ingest_occluder_masks(config.occluder_annotations);
    require(!bank.empty(), "occluder bank is empty");

    json scenes = json::array();
    for (std::size_t k = 0; k < config.count; ++k) {
        const std::uint64_t scene_seed = Rng::mix(config.seed, k + 1);
        const CleanScene clean = render_clean_scene(scene_seed, config.scene);
        OcclusionScene scene;
        std::uint64_t used_seed = 0;
        for (std::size_t attempt = 0;; ++attempt) {
            used_seed = Rng::mix(scene_seed, 0xC0DE0000u + attempt);
            try {
                scene = composite_scene(clean, bank, config.coverage, used_seed);
                break;
            } catch (const CoverageError& e) {
                if (attempt + 1 >= config.max_retries) {
                    throw CoverageError(scene_id(k) + ": " + e.what() + " (after " +
                                        std::to_string(config.max_retries) + " attempts)");
                }
            }
        }
        const std::string id = scene_id(k);
        write_png(scene.clean_image, out_dir / (id + "_clean.png"));
        write_png(scene.occluded_image, out_dir / (id + "_occluded.png"));
        write_png(scene.occluder_mask, out_dir / (id + "_occluders.png"));
        json targets = json::array();
        for (std::size_t t = 0; t < scene.targets.size(); ++t) {
            const std::string mask_file = id + "_target_" + std::to_string(t) + ".png";
            write_png(scene.targets[t].mask, out_dir / mask_file);
            const Box& b = scene.targets[t].box;
            targets.push_back({{"box", {b.x_min, b.y_min, b.x_max, b.y_max}},
                               {"class_id", scene.targets[t].class_id},
                               {"mask", mask_file},
                               {"coverage", scene.coverage_per_target[t]}});
        }
        json placements = json::array();
        for (const auto& p : scene.placements) {
            placements.push_back({{"template", p.template_id},
                                  {"x", p.x},
                                  {"y", p.y},
                                  {"scale", p.scale},
                                  {"rotation", p.rotation},
                                  {"target", p.target}});
        }
        scenes.push_back({{"id", id},
                          {"scene_seed", scene_seed},
                          {"composite_seed", used_seed},
                          {"width", scene.clean_image.width},
                          {"height", scene.clean_image.height},
                          {"clean", id + "_clean.png"},
                          {"occluded", id + "_occluded.png"},
                          {"occluder_mask", id + "_occluders.png"},
                          {"targets", targets},
                          {"placements", placements}});
    }
    json occl = json::array();
    for (std::size_t k = 0; k < bank.size(); ++k) {
        occl.push_back({{"id", k},
                        {"label", bank[k].label},
                        {"width", bank[k].mask.width},
                        {"height", bank[k].mask.height},
                        {"area", bank[k].mask.count()}});
    }
    const json manifest{{"format", "oed-dataset"},
                        {"version", 1},
                        {"config", to_json(config)},
                        {"occluders", occl},
                        {"scenes", scenes}};
    std::ofstream out(out_dir / kManifestName, std::ios::binary);
    if (!out) throw IoError("cannot write manifest in " + out_dir.string());
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("failed writing manifest in " + out_dir.string());
}

Dataset load_dataset(const fs::path& dir, bool load_masks) {
    std::ifstream in(dir / kManifestName);
    if (!in) throw IoError("cannot open " + (dir / kManifestName).string());
    Dataset ds;
    ds.root = dir;
    try {
        json doc;
        in >> doc;
        require(doc.value("format", std::string()) == "oed-dataset", "not an oed dataset manifest");
        for (const auto& s : doc.at("scenes")) {
            SceneRecord r;
            r.id = s.at("id").get<std::string>();
            r.seed = s.at("scene_seed").get<std::uint64_t>();
            r.clean = read_png_rgb(dir / s.at("clean").get<std::string>());
            r.occluded = read_png_rgb(dir / s.at("occluded").get<std::string>());
            require(r.clean.width == r.occluded.width && r.clean.height == r.occluded.height,
                    r.id + ": clean and occluded extents differ");
            for (const auto& t : s.at("targets")) {
                const auto b = t.at("box").get<std::array<double, 4>>();
                r.boxes.push_back({b[0], b[1], b[2], b[3]});
                r.class_ids.push_back(t.at("class_id").get<int>());
                r.coverage.push_back(t.at("coverage").get<double>());
                if (load_masks) r.target_masks.push_back(read_png_mask(dir / t.at("mask").get<std::string>()));
            }
            if (load_masks) r.occluder_mask = read_png_mask(dir / s.at("occluder_mask").get<std::string>());
            ds.scenes.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed dataset manifest: ") + e.what());
    }
    return ds;
}

}  // namespace oed::occlusion
