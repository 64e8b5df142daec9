// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "oed/adapter.hpp"
#include "oed/config_json.hpp"
#include "oed/hungarian.hpp"
#include "oed/plot.hpp"
#include "oed/rng.hpp"

namespace oed::harness {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config

void TrainConfig::validate() const {
    require(epochs >= 1, "epochs must be >= 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(std::isfinite(learning_rate) && learning_rate > 0.0, "learning_rate must be > 0");
    require(std::isfinite(grad_clip_norm) && grad_clip_norm >= 0.0, "grad_clip_norm must be >= 0");
    require(std::isfinite(gamma1) && gamma1 >= 0.0, "gamma1 must be >= 0");
    require(std::isfinite(gamma2) && gamma2 >= 0.0, "gamma2 must be >= 0");
    require(ema_decay_start >= 0.0 && ema_decay_start <= 1.0, "ema_decay_start must be in [0, 1]");
    if (ema_fixed_tau) require(*ema_fixed_tau >= 0.0 && *ema_fixed_tau <= 1.0, "ema_fixed_tau must be in [0, 1]");
    require(teacher_init != TeacherInit::Snapshot || !teacher_snapshot.empty(),
            "teacher_init 'snapshot' needs teacher_snapshot");
    require(loss.l1 >= 0.0 && loss.giou >= 0.0 && loss.background >= 0.0, "loss weights must be >= 0");
    detector.validate();
}

json to_json(const TrainConfig& c) {
    return json{
        {"seed", c.seed},
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"learning_rate", c.learning_rate},
        {"grad_clip_norm", c.grad_clip_norm},
        {"gamma1", c.gamma1},
        {"gamma2", c.gamma2},
        {"ema", c.ema},
        {"occlusion_augment", c.occlusion_augment},
        {"multiscale_distill", c.multiscale_distill},
        {"ema_decay_start", c.ema_decay_start},
        {"ema_total_steps", c.ema_total_steps},
        {"ema_fixed_tau", c.ema_fixed_tau ? json(*c.ema_fixed_tau) : json(nullptr)},
        {"teacher_init", c.teacher_init == TeacherInit::Copy ? "copy" : "snapshot"},
        {"teacher_snapshot", c.teacher_snapshot.string()},
        {"dataset", c.dataset.string()},
        {"test_dataset", c.test_dataset.string()},
        {"output_dir", c.output_dir.string()},
        {"beta_pool", c.beta_pool == distill::PoolPolicy::Mean ? "mean" : "max"},
        {"oa_per_box", c.oa_per_box},
        {"max_train_scenes", c.max_train_scenes},
        {"eval_every", c.eval_every},
        {"evaluate_on", c.evaluate_occluded ? "occluded" : "clean"},
        {"plots", c.plots},
        {"detector",
         {{"channels", c.detector.channels},
          {"stem_channels", c.detector.stem_channels},
          {"num_queries", c.detector.num_queries},
          {"num_points", c.detector.num_points},
          {"num_classes", c.detector.num_classes},
          {"image_min", c.detector.image_min},
          {"image_max", c.detector.image_max},
          {"init_scale", c.detector.init_scale}}},
        {"loss", {{"l1", c.loss.l1}, {"giou", c.loss.giou}, {"background", c.loss.background}}},
    };
}

TrainConfig train_config_from_json(const json& j) {
    require(j.is_object(), "train config must be a JSON object");
    require(j.contains("seed"), "train config: 'seed' is required");
    json src = j;
    std::optional<double> fixed_tau;
    if (src.contains("ema_fixed_tau")) {
        const auto& v = src["ema_fixed_tau"];
        require(v.is_null() || v.is_number(), "wrong type for 'ema_fixed_tau'");
        if (v.is_number()) fixed_tau = v.get<double>();
        src.erase("ema_fixed_tau");
    }
    json merged = to_json(TrainConfig{});
    merged.erase("ema_fixed_tau");
    overlay_known(merged, src);

    TrainConfig c;
    try {
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.epochs = merged.at("epochs").get<std::size_t>();
        c.batch_size = merged.at("batch_size").get<std::size_t>();
        c.learning_rate = merged.at("learning_rate").get<double>();
        c.grad_clip_norm = merged.at("grad_clip_norm").get<double>();
        c.gamma1 = merged.at("gamma1").get<double>();
        c.gamma2 = merged.at("gamma2").get<double>();
        c.ema = merged.at("ema").get<bool>();
        c.occlusion_augment = merged.at("occlusion_augment").get<bool>();
        c.multiscale_distill = merged.at("multiscale_distill").get<bool>();
        c.ema_decay_start = merged.at("ema_decay_start").get<double>();
        c.ema_total_steps = merged.at("ema_total_steps").get<std::size_t>();
        c.ema_fixed_tau = fixed_tau;
        const auto init = merged.at("teacher_init").get<std::string>();
        require(init == "copy" || init == "snapshot", "teacher_init must be 'copy' or 'snapshot'");
        c.teacher_init = init == "copy" ? TeacherInit::Copy : TeacherInit::Snapshot;
        c.teacher_snapshot = merged.at("teacher_snapshot").get<std::string>();
        c.dataset = merged.at("dataset").get<std::string>();
        c.test_dataset = merged.at("test_dataset").get<std::string>();
        c.output_dir = merged.at("output_dir").get<std::string>();
        const auto pool = merged.at("beta_pool").get<std::string>();
        require(pool == "mean" || pool == "max", "beta_pool must be 'mean' or 'max'");
        c.beta_pool = pool == "mean" ? distill::PoolPolicy::Mean : distill::PoolPolicy::Max;
        c.oa_per_box = merged.at("oa_per_box").get<bool>();
        c.max_train_scenes = merged.at("max_train_scenes").get<std::size_t>();
        c.eval_every = merged.at("eval_every").get<std::size_t>();
        const auto on = merged.at("evaluate_on").get<std::string>();
        require(on == "occluded" || on == "clean", "evaluate_on must be 'occluded' or 'clean'");
        c.evaluate_occluded = on == "occluded";
        c.plots = merged.at("plots").get<bool>();
        const auto& d = merged.at("detector");
        c.detector.channels = d.at("channels").get<std::size_t>();
        c.detector.stem_channels = d.at("stem_channels").get<std::size_t>();
        c.detector.num_queries = d.at("num_queries").get<std::size_t>();
        c.detector.num_points = d.at("num_points").get<std::size_t>();
        c.detector.num_classes = d.at("num_classes").get<std::size_t>();
        c.detector.image_min = d.at("image_min").get<std::size_t>();
        c.detector.image_max = d.at("image_max").get<std::size_t>();
        c.detector.init_scale = d.at("init_scale").get<double>();
        const auto& l = merged.at("loss");
        c.loss.l1 = l.at("l1").get<double>();
        c.loss.giou = l.at("giou").get<double>();
        c.loss.background = l.at("background").get<double>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

TrainConfig load_train_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed config: ") + e.what());
    }
    return train_config_from_json(j);
}

// ---- scenes

std::vector<TrainScene> scenes_from_dataset(const occlusion::Dataset& ds) {
    std::vector<TrainScene> out;
    for (const auto& s : ds.scenes) out.push_back({s.id, s.clean, s.occluded, s.boxes, s.class_ids});
    return out;
}

TrainScene scene_from_composite(const occlusion::OcclusionScene& s, std::string id) {
    TrainScene t;
    t.id = std::move(id);
    t.clean = s.clean_image;
    t.occluded = s.occluded_image;
    for (const auto& tg : s.targets) {
        t.boxes.push_back(tg.box);
        t.class_ids.push_back(tg.class_id);
    }
    return t;
}

// ---- state

TrainState init_state(const TrainConfig& config, std::size_t total_steps) {
    config.validate();
    TrainState s;
    s.config = config;
    s.student = detector::init_params(config.detector, Rng::mix(config.seed, 1));
    if (config.teacher_init == TeacherInit::Copy) {
        s.ema.teacher = s.student;
    } else {
        s.ema.teacher = load_snapshot(config.teacher_snapshot);
        s.ema.teacher.require_same_layout(s.student);
    }
    s.ema.decay_start = config.ema_decay_start;
    s.ema.total_steps = std::max<std::size_t>(total_steps, 1);
    if (config.ema_fixed_tau) {
        s.ema.fixed_tau = true;
        s.ema.tau = *config.ema_fixed_tau;
    } else if (!config.ema) {
        // without EMA the teacher is a direct copy of the student
        s.ema.fixed_tau = true;
        s.ema.tau = 0.0;
    }
    for (const auto& t : s.student.tensors) {
        s.adam.m.emplace_back(t.shape());
        s.adam.v.emplace_back(t.shape());
    }
    return s;
}

// ---- step

namespace {

std::vector<detector::NormalizedBox> normalized(const TrainScene& scene) {
    std::vector<detector::NormalizedBox> out;
    for (const auto& b : scene.boxes) out.push_back(detector::normalize_box(b, scene.clean.width, scene.clean.height));
    return out;
}

Tensor patches_of(const Tensor& level, const adapter::IndexRect& r) {
    return ag::region_patches(ag::constant(level), r.y0, r.y1, r.x0, r.x1).value();
}

}  // namespace

StepResult compute_step(const TrainState& state, const TrainScene& scene) {
    const TrainConfig& cfg = state.config;
    const auto& det = cfg.detector;
    require(scene.clean.width == scene.occluded.width && scene.clean.height == scene.occluded.height,
            "train_step: clean and occluded extents differ");
    require(scene.boxes.size() == scene.class_ids.size(), "train_step: one class id per box required");
    state.ema.teacher.require_same_layout(state.student);
    const std::size_t iw = scene.clean.width, ih = scene.clean.height;

    // teacher on the clean image, constants only
    const auto teacher_vars = detector::as_vars(state.ema.teacher, false);
    const auto tg = detector::forward_graph(detector::image_tensor(scene.clean), teacher_vars, det);
    const auto tr = detector::read_out(tg, iw, ih, det);

    const RgbImage& student_image = cfg.occlusion_augment ? scene.occluded : scene.clean;
    const auto student_vars = detector::as_vars(state.student, true);
    const auto sg = detector::forward_graph(detector::image_tensor(student_image), student_vars, det);

    StepResult out;
    LossBreakdown& b = out.breakdown;
    b.step = state.step;

    const auto gt = normalized(scene);
    const Tensor cost = detector::matching_cost(sg.logits.value(), sg.boxes.value(), gt, scene.class_ids, cfg.loss);
    const Assignment assignment = hungarian_match(cost);
    const auto det_terms = detector::detection_loss(sg.logits, sg.boxes, gt, scene.class_ids, assignment, cfg.loss);
    b.l_det = det_terms.total.item();
    b.l_det_class = det_terms.classification;
    b.l_det_l1 = det_terms.l1;
    b.l_det_giou = det_terms.giou;

    ag::Var l_cand = ag::constant(Tensor::scalar(0.0));
    ag::Var l_oa = ag::constant(Tensor::scalar(0.0));
    if (cfg.multiscale_distill) {
        std::vector<distill::Prediction> preds;
        for (const auto& d : tr.detections) {
            distill::Prediction p;
            p.score = d.score;
            p.box = d.box;
            p.query_index = d.query_index;
            for (const auto& g : scene.boxes) p.iou_with_matched_gt = std::max(p.iou_with_matched_gt, iou(d.box, g));
            preds.push_back(p);
        }
        const auto weights = distill::candidate_weights(preds);
        b.gamma = weights.gamma;
        l_cand = distill::candidate_loss(tg.levels, sg.levels, preds, weights.gamma, tr.queries);

        const auto t_adapter = detector::adapter_params(state.ema.teacher);
        const auto s_adapter = detector::adapter_params(state.student);
        const std::size_t levels = tg.levels.size();
        std::vector<std::vector<double>> level_betas(levels);
        std::vector<std::vector<std::vector<adapter::IndexRect>>> level_regions(levels);
        for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
            TargetWeights tw;
            for (std::size_t l = 0; l < levels; ++l) {
                const Tensor& tmap = tr.features.levels[l];
                const Tensor& smap = sg.levels[l].value();
                const adapter::LevelGeometry geo{tmap.dim(1), tmap.dim(2), detector::kLevelStrides[l], 0};
                const auto rect = adapter::project_box_to_level(scene.boxes[i], iw, ih, geo);
                const Tensor tp = adapter::adapter_forward({patches_of(tmap, rect), static_cast<int>(i)}, t_adapter);
                const Tensor sp = adapter::adapter_forward({patches_of(smap, rect), static_cast<int>(i)}, s_adapter);
                const auto match = distill::match_patches(tp, sp, tmap, cfg.beta_pool);
                tw.raw_beta.push_back(match.beta);
                tw.beta.push_back(distill::clamp_beta(match.beta));
                tw.j_star.push_back(match.best_teacher_patch);
                level_betas[l].push_back(match.beta);
                level_regions[l].push_back({rect});
            }
            b.targets.push_back(std::move(tw));
        }
        for (std::size_t l = 0; l < levels; ++l) {
            const std::span<const ag::Var> t1(&tg.levels[l], 1), s1(&sg.levels[l], 1);
            const auto term = cfg.oa_per_box
                                  ? distill::occlusion_aware_loss_per_box(t1, s1, level_betas[l], level_regions[l])
                                  : distill::occlusion_aware_loss(t1, s1, level_betas[l]);
            l_oa = ag::add(l_oa, term);
        }
    }
    b.l_candidate = l_cand.item();
    b.l_occlusion_aware = l_oa.item();

    const auto total = ag::add(ag::add(det_terms.total, ag::scale(l_cand, cfg.gamma1)), ag::scale(l_oa, cfg.gamma2));
    b.total = total.item();
    if (!std::isfinite(b.total)) throw NumericalError("non-finite loss at step " + std::to_string(state.step));
    out.gradients = ag::gradients(total, student_vars);
    return out;
}

void adam_step(ParamSet& params, AdamState& adam, const std::vector<Tensor>& grads, double lr) {
    require(grads.size() == params.size() && adam.m.size() == params.size(), "adam: gradient count mismatch");
    ++adam.t;
    const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.t));
    const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params.tensors[i].data();
        const auto g = grads[i].data();
        auto m = adam.m[i].data();
        auto v = adam.v[i].data();
        require(g.size() == p.size(), "adam: gradient shape mismatch for " + params.names[i]);
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = adam.beta1 * m[j] + (1.0 - adam.beta1) * g[j];
            v[j] = adam.beta2 * v[j] + (1.0 - adam.beta2) * g[j] * g[j];
            p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + adam.eps);
        }
    }
}

void apply_update(TrainState& state, std::vector<Tensor> gradients) {
    if (state.config.grad_clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& g : gradients)
            for (double v : g.data()) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > state.config.grad_clip_norm) {
            const double s = state.config.grad_clip_norm / norm;
            for (auto& g : gradients)
                for (double& v : g.storage()) v *= s;
        }
    }
    adam_step(state.student, state.adam, gradients, state.config.learning_rate);
    ema::ema_update_inplace(state.ema, state.student);
    ++state.step;
}

LossBreakdown train_step(TrainState& state, const TrainScene& scene) {
    auto r = compute_step(state, scene);
    apply_update(state, std::move(r.gradients));
    return r.breakdown;
}

// ---- evaluation

eval::Summary evaluate(const ParamSet& params, const detector::DetectorConfig& det, const std::vector<TrainScene>& scenes,
                       bool occluded, std::vector<eval::ImagePredictions>* predictions) {
    std::vector<eval::ImagePredictions> preds;
    std::vector<eval::ImageTruth> gt;
    for (const auto& s : scenes) {
        const auto r = detector::forward(occluded ? s.occluded : s.clean, params, det);
        eval::ImagePredictions p;
        for (const auto& d : r.detections) p.push_back({d.box, d.score});
        preds.push_back(std::move(p));
        gt.push_back(s.boxes);
    }
    auto summary = eval::ap_summary(preds, gt);
    if (predictions) *predictions = std::move(preds);
    return summary;
}

// ---- training run

namespace {

std::vector<TrainScene> load_scenes(const fs::path& dir) {
    return scenes_from_dataset(occlusion::load_dataset(dir));
}

double metric(const std::optional<eval::Summary>& s) { return s && s->ap ? *s->ap : std::nan(""); }

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

void write_outputs(const TrainConfig& cfg, const TrainResult& r, const std::vector<TrainScene>* test) {
    const fs::path dir = cfg.output_dir;
    std::ostringstream csv;
    csv << "epoch,l_det,l_candidate,l_occlusion_aware,total,student_AP,student_AP50,student_AP75,"
           "teacher_AP,teacher_AP50,teacher_AP75\n";
    for (const auto& e : r.epochs) {
        csv << e.epoch << "," << fmt(e.l_det) << "," << fmt(e.l_candidate) << "," << fmt(e.l_occlusion_aware) << ","
            << fmt(e.total);
        for (const auto* s : {&e.student, &e.teacher}) {
            if (*s) csv << "," << fmt((*s)->ap) << "," << fmt((*s)->ap50) << "," << fmt((*s)->ap75);
            else csv << ",,,";
        }
        csv << "\n";
    }
    plot::write_text(dir / "metrics.csv", csv.str());

    json final_metrics{{"config", to_json(cfg)},
                       {"steps", r.steps},
                       {"seconds", r.seconds},
                       {"max_recomposition_error", r.max_recomposition_error},
                       {"student", r.student ? eval::to_json(*r.student) : json(nullptr)},
                       {"teacher", r.teacher ? eval::to_json(*r.teacher) : json(nullptr)}};
    plot::write_text(dir / "final_metrics.json", final_metrics.dump(2) + "\n");
    save_snapshot(r.student_params, dir / "student.oedp");
    save_snapshot(r.teacher_params, dir / "teacher.oedp");

    if (test) {
        std::vector<eval::ImagePredictions> preds;
        evaluate(r.student_params, cfg.detector, *test, cfg.evaluate_occluded, &preds);
        std::vector<std::string> ids;
        for (const auto& s : *test) ids.push_back(s.id);
        plot::write_text(dir / "predictions_student.json", eval::predictions_to_json(ids, preds).dump(2) + "\n");
    }

    if (cfg.plots) {
        plot::Series det{"L_det", {}, {}}, cand{"L_candidate", {}, {}}, oa{"L_occlusion_aware", {}, {}},
            tot{"total", {}, {}}, sap{"student AP", {}, {}}, tap{"teacher AP", {}, {}};
        for (const auto& e : r.epochs) {
            const double x = static_cast<double>(e.epoch);
            for (auto* s : {&det, &cand, &oa, &tot}) s->x.push_back(x);
            det.y.push_back(e.l_det);
            cand.y.push_back(e.l_candidate);
            oa.y.push_back(e.l_occlusion_aware);
            tot.y.push_back(e.total);
            if (e.student) {
                sap.x.push_back(x);
                sap.y.push_back(metric(e.student));
                tap.x.push_back(x);
                tap.y.push_back(metric(e.teacher));
            }
        }
        plot::write_text(dir / "loss.svg", plot::line_chart("Mean loss per epoch", "epoch", {det, cand, oa, tot}));
        if (!sap.x.empty()) plot::write_text(dir / "ap.svg", plot::line_chart("Test AP", "epoch", {sap, tap}));
    }
}

}  // namespace

TrainResult run_training(const TrainConfig& config, const std::vector<TrainScene>* train_in,
                         const std::vector<TrainScene>* test_in) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<TrainScene> train_owned, test_owned;
    if (!train_in) {
        require(!config.dataset.empty(), "train config: 'dataset' is required");
        train_owned = load_scenes(config.dataset);
        train_in = &train_owned;
    }
    if (!test_in && !config.test_dataset.empty()) {
        test_owned = load_scenes(config.test_dataset);
        test_in = &test_owned;
    }
    std::vector<const TrainScene*> train;
    for (const auto& s : *train_in) train.push_back(&s);
    if (config.max_train_scenes > 0 && train.size() > config.max_train_scenes) train.resize(config.max_train_scenes);
    require(!train.empty(), "training set is empty");

    const std::size_t per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t updates = config.epochs * per_epoch;
    TrainState state = init_state(config, config.ema_total_steps > 0 ? config.ema_total_steps : updates);

    const bool write = !config.output_dir.empty();
    std::ofstream steps_csv;
    if (write) {
        std::error_code ec;
        fs::create_directories(config.output_dir, ec);
        if (ec) throw IoError("cannot create " + config.output_dir.string() + ": " + ec.message());
        steps_csv.open(config.output_dir / "steps.csv", std::ios::binary);
        if (!steps_csv) throw IoError("cannot write steps.csv in " + config.output_dir.string());
        steps_csv << "step,epoch,scene,l_det,l_det_class,l_det_l1,l_det_giou,l_candidate,l_occlusion_aware,total,"
                     "recomposed,gamma1,gamma2\n";
    }

    TrainResult result;
    std::size_t seen = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng shuffle(Rng::mix(config.seed, 1000 + epoch));
        for (std::size_t i = train.size(); i > 1; --i)
            std::swap(train[i - 1], train[static_cast<std::size_t>(shuffle.integer(0, static_cast<std::int64_t>(i) - 1))]);

        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t start = 0; start < train.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, train.size());
            std::vector<Tensor> acc;
            for (std::size_t k = start; k < end; ++k) {
                StepResult r;
                try {
                    r = compute_step(state, *train[k]);
                } catch (const NumericalError& e) {
                    if (write) {
                        save_snapshot(state.student, config.output_dir / "diagnostic_student.oedp");
                        save_snapshot(state.ema.teacher, config.output_dir / "diagnostic_teacher.oedp");
                        plot::write_text(config.output_dir / "diagnostic.json",
                                         json{{"step", state.step}, {"scene", train[k]->id}, {"error", e.what()}}.dump(2) +
                                             "\n");
                    }
                    throw;
                }
                const auto& b = r.breakdown;
                const double recomposed = b.l_det + config.gamma1 * b.l_candidate + config.gamma2 * b.l_occlusion_aware;
                result.max_recomposition_error = std::max(result.max_recomposition_error, std::abs(recomposed - b.total));
                if (write) {
                    steps_csv << state.step << "," << epoch << "," << train[k]->id << "," << fmt(b.l_det) << ","
                              << fmt(b.l_det_class) << "," << fmt(b.l_det_l1) << "," << fmt(b.l_det_giou) << ","
                              << fmt(b.l_candidate) << "," << fmt(b.l_occlusion_aware) << "," << fmt(b.total) << ","
                              << fmt(recomposed) << "," << fmt(config.gamma1) << "," << fmt(config.gamma2) << "\n";
                }
                rec.l_det += b.l_det;
                rec.l_candidate += b.l_candidate;
                rec.l_occlusion_aware += b.l_occlusion_aware;
                rec.total += b.total;
                ++seen;
                if (acc.empty()) {
                    acc = std::move(r.gradients);
                } else {
                    for (std::size_t i = 0; i < acc.size(); ++i) {
                        auto a = acc[i].data();
                        const auto g = r.gradients[i].data();
                        for (std::size_t j = 0; j < a.size(); ++j) a[j] += g[j];
                    }
                }
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            if (end - start > 1)
                for (auto& g : acc)
                    for (double& v : g.storage()) v *= inv;
            apply_update(state, std::move(acc));
        }
        const double n = static_cast<double>(train.size());
        rec.l_det /= n;
        rec.l_candidate /= n;
        rec.l_occlusion_aware /= n;
        rec.total /= n;
        const bool eval_now = test_in && (epoch == config.epochs || (config.eval_every > 0 && epoch % config.eval_every == 0));
        if (eval_now) {
            rec.student = evaluate(state.student, config.detector, *test_in, config.evaluate_occluded);
            rec.teacher = evaluate(state.ema.teacher, config.detector, *test_in, config.evaluate_occluded);
        }
        result.epochs.push_back(std::move(rec));
    }
    if (test_in) {
        result.student = result.epochs.back().student;
        result.teacher = result.epochs.back().teacher;
    }
    result.steps = seen;
    result.student_params = state.student;
    result.teacher_params = state.ema.teacher;
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (write) {
        steps_csv.close();
        write_outputs(config, result, test_in);
    }
    return result;
}

// ---- ablation

AblationGrid load_ablation_grid(const json& j) {
    require(j.is_object(), "ablation grid must be a JSON object");
    AblationGrid grid;
    try {
        if (j.contains("seeds")) grid.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        json base = j.value("base", json::object());
        if (grid.seeds.empty()) {
            require(base.contains("seed"), "ablation grid needs 'seeds' or base.seed");
            grid.seeds = {base.at("seed").get<std::uint64_t>()};
        }
        if (!base.contains("seed")) base["seed"] = grid.seeds.front();
        const TrainConfig base_cfg = train_config_from_json(base);
        json rows = j.value("rows", json());
        if (rows.is_null()) {
            rows = json::array();
            const bool table[7][3] = {{false, false, false}, {true, false, false}, {false, true, false},
                                      {false, false, true},  {true, true, false},  {false, true, true},
                                      {true, true, true}};
            for (int r = 0; r < 7; ++r)
                rows.push_back({{"name", "row" + std::to_string(r)},
                                {"ema", table[r][0]},
                                {"occlusion_augment", table[r][1]},
                                {"multiscale_distill", table[r][2]}});
        }
        require(rows.is_array() && !rows.empty(), "ablation grid 'rows' must be a non-empty array");
        for (const auto& row : rows) {
            require(row.is_object() && row.contains("name"), "each ablation row needs a 'name'");
            json overrides = row;
            overrides.erase("name");
            json merged = to_json(base_cfg);
            if (!overrides.contains("ema_fixed_tau") && base_cfg.ema_fixed_tau) overrides["ema_fixed_tau"] = *base_cfg.ema_fixed_tau;
            merged.erase("ema_fixed_tau");
            for (auto& [k, v] : overrides.items()) merged[k] = v;
            grid.rows.push_back({row.at("name").get<std::string>(), train_config_from_json(merged)});
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("ablation grid: ") + e.what());
    }
    return grid;
}

json AblationReport::to_json() const {
    json cells_j = json::array();
    for (const auto& c : cells) {
        cells_j.push_back({{"row", c.row},
                           {"seed", c.seed},
                           {"ok", c.ok},
                           {"error", c.error},
                           {"seconds", c.seconds},
                           {"student", c.student ? eval::to_json(*c.student) : json(nullptr)},
                           {"teacher", c.teacher ? eval::to_json(*c.teacher) : json(nullptr)}});
    }
    return {{"cells", cells_j}};
}

namespace {

std::string mean_of(const std::vector<AblationCell>& cells, const std::string& row,
                    std::optional<double> eval::Summary::*field) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& c : cells) {
        if (c.row != row || !c.ok || !c.student || !((*c.student).*field)) continue;
        s += *((*c.student).*field);
        ++n;
    }
    if (n == 0) return "n/a";
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << s / static_cast<double>(n);
    return os.str();
}

}  // namespace

std::string AblationReport::to_markdown(const AblationGrid& grid) const {
    std::ostringstream os;
    os << "| Row | EMA | Occlusion augment | Multi-scale distill | AP | AP_small | AP_large | runs |\n";
    os << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : grid.rows) {
        std::size_t ok = 0, total = 0;
        for (const auto& c : cells)
            if (c.row == r.name) {
                ++total;
                ok += c.ok ? 1 : 0;
            }
        os << "| " << r.name << " | " << (r.config.ema ? "x" : "") << " | " << (r.config.occlusion_augment ? "x" : "")
           << " | " << (r.config.multiscale_distill ? "x" : "") << " | " << mean_of(cells, r.name, &eval::Summary::ap)
           << " | " << mean_of(cells, r.name, &eval::Summary::ap_small) << " | "
           << mean_of(cells, r.name, &eval::Summary::ap_large) << " | " << ok << "/" << total << " |\n";
    }
    return os.str();
}

AblationReport run_ablation(const AblationGrid& grid, const fs::path& out_dir, const std::vector<TrainScene>* train,
                            const std::vector<TrainScene>* test) {
    require(!grid.rows.empty() && !grid.seeds.empty(), "ablation: empty grid");
    std::vector<TrainScene> train_owned, test_owned;
    const auto& first = grid.rows.front().config;
    if (!train && !first.dataset.empty()) {
        train_owned = load_scenes(first.dataset);
        train = &train_owned;
    }
    if (!test && !first.test_dataset.empty()) {
        test_owned = load_scenes(first.test_dataset);
        test = &test_owned;
    }
    AblationReport report;
    for (const auto& row : grid.rows) {
        for (const auto seed : grid.seeds) {
            AblationCell cell;
            cell.row = row.name;
            cell.seed = seed;
            TrainConfig cfg = row.config;
            cfg.seed = seed;
            cfg.output_dir = out_dir.empty() ? fs::path() : out_dir / row.name / ("seed_" + std::to_string(seed));
            const bool same_data = cfg.dataset == first.dataset && cfg.test_dataset == first.test_dataset;
            try {
                const auto r = run_training(cfg, same_data ? train : nullptr, same_data ? test : nullptr);
                cell.ok = true;
                cell.student = r.student;
                cell.teacher = r.teacher;
                cell.seconds = r.seconds;
            } catch (const Error& e) {
                cell.error = e.what();
            }
            report.cells.push_back(std::move(cell));
        }
    }
    if (!out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create " + out_dir.string());
        plot::write_text(out_dir / "ablation.json", report.to_json().dump(2) + "\n");
        plot::write_text(out_dir / "ablation.md", report.to_markdown(grid));
    }
    return report;
}

}  // namespace oed::harness
