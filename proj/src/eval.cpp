// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "oed/errors.hpp"

namespace oed::eval {

using nlohmann::json;

std::vector<double> EvalConfig::default_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
    return t;
}

void EvalConfig::validate() const {
    require(!iou_thresholds.empty(), "eval: at least one IoU threshold required");
    for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
        require(iou_thresholds[i] > 0.0 && iou_thresholds[i] < 1.0, "eval: IoU thresholds must lie in (0, 1)");
        require(i == 0 || iou_thresholds[i] > iou_thresholds[i - 1], "eval: IoU thresholds must be strictly increasing");
    }
    require(small_area_max >= 0.0 && small_area_max < large_area_min, "eval: need 0 <= small_area_max < large_area_min");
}

namespace {

/// Indices sorted by descending score, ties in input order.
std::vector<std::size_t> score_order(const ImagePredictions& preds) {
    std::vector<std::size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
    return order;
}

void check_inputs(const std::vector<ImagePredictions>& preds, const std::vector<ImageTruth>& gt) {
    require(preds.size() == gt.size(), "eval: predictions and ground truth cover different image counts");
    for (const auto& img : preds) {
        for (const auto& p : img) {
            require(std::isfinite(p.score), "eval: non-finite score");
            require(p.box.well_ordered(), "eval: prediction box is not well-ordered");
        }
    }
    for (const auto& img : gt)
        for (const auto& b : img) require(b.well_ordered(), "eval: ground-truth box is not well-ordered");
}

}  // namespace

std::vector<std::optional<std::size_t>> greedy_match(const ImagePredictions& preds, const ImageTruth& gt,
                                                     double iou_threshold) {
    std::vector<std::optional<std::size_t>> out(preds.size());
    std::vector<bool> taken(gt.size(), false);
    for (std::size_t p : score_order(preds)) {
        double best = iou_threshold;
        std::optional<std::size_t> pick;
        for (std::size_t g = 0; g < gt.size(); ++g) {
            if (taken[g]) continue;
            const double v = iou(preds[p].box, gt[g]);
            if (v >= best && (!pick || v > best)) {
                best = v;
                pick = g;
            }
        }
        if (pick) {
            taken[*pick] = true;
            out[p] = pick;
        }
    }
    return out;
}

std::optional<double> average_precision(const std::vector<ImagePredictions>& preds,
                                        const std::vector<ImageTruth>& gt, double iou_threshold) {
    check_inputs(preds, gt);
    std::size_t npos = 0;
    for (const auto& g : gt) npos += g.size();
    if (npos == 0) return std::nullopt;

    struct Ranked {
        double score;
        bool tp;
    };
    std::vector<Ranked> ranked;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto match = greedy_match(preds[i], gt[i], iou_threshold);
        for (std::size_t p : score_order(preds[i])) ranked.push_back({preds[i][p].score, match[p].has_value()});
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

    std::vector<double> precision(ranked.size()), recall(ranked.size());
    std::size_t tp = 0;
    for (std::size_t k = 0; k < ranked.size(); ++k) {
        tp += ranked[k].tp ? 1 : 0;
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
        recall[k] = static_cast<double>(tp) / static_cast<double>(npos);
    }
    for (std::size_t k = ranked.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);

    double sum = 0.0;
    std::size_t k = 0;
    for (std::size_t r = 0; r < kRecallPoints; ++r) {
        const double level = static_cast<double>(r) / static_cast<double>(kRecallPoints - 1);
        while (k < recall.size() && recall[k] < level) ++k;
        if (k < recall.size()) sum += precision[k];
    }
    return sum / static_cast<double>(kRecallPoints);
}

namespace {

std::optional<double> mean_defined(const std::vector<std::optional<double>>& values) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& v : values) {
        if (v) {
            s += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
}

std::optional<double> bucket_ap(const std::vector<ImagePredictions>& preds, const std::vector<ImageTruth>& gt,
                                const EvalConfig& config, bool small) {
    std::vector<ImageTruth> filtered;
    for (const auto& img : gt) {
        ImageTruth keep;
        for (const auto& b : img) {
            const double a = b.area();
            if (small ? a <= config.small_area_max : a >= config.large_area_min) keep.push_back(b);
        }
        filtered.push_back(std::move(keep));
    }
    std::vector<std::optional<double>> per;
    for (double t : config.iou_thresholds) per.push_back(average_precision(preds, filtered, t));
    return mean_defined(per);
}

std::optional<double> at_threshold(const std::vector<double>& thresholds, const std::vector<std::optional<double>>& ap,
                                   const std::vector<ImagePredictions>& preds, const std::vector<ImageTruth>& gt,
                                   double t) {
    for (std::size_t i = 0; i < thresholds.size(); ++i)
        if (std::abs(thresholds[i] - t) < 1e-12) return ap[i];
    return average_precision(preds, gt, t);
}

}  // namespace

Summary ap_summary(const std::vector<ImagePredictions>& preds, const std::vector<ImageTruth>& gt,
                   const EvalConfig& config) {
    config.validate();
    check_inputs(preds, gt);
    Summary s;
    for (double t : config.iou_thresholds) s.per_threshold.push_back(average_precision(preds, gt, t));
    s.ap = mean_defined(s.per_threshold);
    s.ap50 = at_threshold(config.iou_thresholds, s.per_threshold, preds, gt, 0.5);
    s.ap75 = at_threshold(config.iou_thresholds, s.per_threshold, preds, gt, 0.75);
    s.ap_small = bucket_ap(preds, gt, config, true);
    s.ap_large = bucket_ap(preds, gt, config, false);
    return s;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string csv_value(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os.precision(17);
    os << *v;
    return os.str();
}

}  // namespace

json to_json(const Summary& s) {
    json per = json::array();
    for (const auto& v : s.per_threshold) per.push_back(opt(v));
    return {{"AP", opt(s.ap)},          {"AP50", opt(s.ap50)},         {"AP75", opt(s.ap75)},
            {"AP_small", opt(s.ap_small)}, {"AP_large", opt(s.ap_large)}, {"AP_per_threshold", per}};
}

std::string to_csv(const Summary& s) {
    std::ostringstream os;
    os << "metric,value\n";
    os << "AP," << csv_value(s.ap) << "\n";
    os << "AP50," << csv_value(s.ap50) << "\n";
    os << "AP75," << csv_value(s.ap75) << "\n";
    os << "AP_small," << csv_value(s.ap_small) << "\n";
    os << "AP_large," << csv_value(s.ap_large) << "\n";
    return os.str();
}

GroundTruthSet load_ground_truth(const std::filesystem::path& dir) {
    const auto path = dir / "dataset.json";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    GroundTruthSet out;
    try {
        json doc;
        in >> doc;
        for (const auto& s : doc.at("scenes")) {
            out.ids.push_back(s.at("id").get<std::string>());
            ImageTruth boxes;
            for (const auto& t : s.at("targets")) {
                const auto b = t.at("box").get<std::array<double, 4>>();
                boxes.push_back({b[0], b[1], b[2], b[3]});
            }
            out.boxes.push_back(std::move(boxes));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed dataset manifest: ") + e.what());
    }
    return out;
}

json predictions_to_json(const std::vector<std::string>& ids, const std::vector<ImagePredictions>& preds) {
    require(ids.size() == preds.size(), "predictions_to_json: one id per image required");
    json images = json::array();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        json dets = json::array();
        for (const auto& p : preds[i])
            dets.push_back({{"box", {p.box.x_min, p.box.y_min, p.box.x_max, p.box.y_max}}, {"score", p.score}});
        images.push_back({{"id", ids[i]}, {"detections", dets}});
    }
    return {{"images", images}};
}

std::vector<ImagePredictions> predictions_from_json(const json& j, const std::vector<std::string>& ids) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = i;
    std::vector<ImagePredictions> out(ids.size());
    try {
        for (const auto& im : j.at("images")) {
            const auto id = im.at("id").get<std::string>();
            const auto it = index.find(id);
            require(it != index.end(), "predictions reference unknown image '" + id + "'");
            for (const auto& d : im.at("detections")) {
                const auto b = d.at("box").get<std::array<double, 4>>();
                out[it->second].push_back({{b[0], b[1], b[2], b[3]}, d.at("score").get<double>()});
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed predictions file: ") + e.what());
    }
    return out;
}

}  // namespace oed::eval
