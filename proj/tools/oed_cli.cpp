// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include <json.hpp>

#include "oed/errors.hpp"
#include "oed/eval.hpp"
#include "oed/gradcheck.hpp"
#include "oed/harness.hpp"
#include "oed/occlusion.hpp"
#include "oed/plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw oed::IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw oed::ValidationError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Occlusion-enhanced distillation toolkit"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a paired clean/occluded synthetic dataset");
    fs::path gen_config, gen_out;
    std::optional<std::uint64_t> gen_seed;
    std::optional<std::size_t> gen_count;
    bool gen_print = false;
    gen->add_option("--config", gen_config, "Dataset config JSON");
    gen->add_option("--out", gen_out, "Output directory");
    gen->add_option("--seed", gen_seed, "Dataset seed (overrides the config)");
    gen->add_option("--count", gen_count, "Scene count (overrides the config)");
    gen->add_flag("--print-effective-config", gen_print, "Print the merged config and exit");

    // train
    auto* train = app.add_subcommand("train", "Train teacher and student");
    fs::path train_config;
    bool train_print = false;
    train->add_option("--config", train_config, "Training config JSON")->required();
    train->add_flag("--print-effective-config", train_print, "Print the merged config and exit");

    // eval
    auto* ev = app.add_subcommand("eval", "Score a predictions file against a dataset");
    fs::path ev_dataset, ev_preds, ev_out;
    ev->add_option("--dataset", ev_dataset, "Dataset directory")->required();
    ev->add_option("--preds", ev_preds, "Predictions JSON")->required();
    ev->add_option("--out", ev_out, "Directory for metrics.json and metrics.csv");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    oed::gradcheck::SuiteOptions gc_opts;
    gc->add_option("--instances", gc_opts.instances, "Random instances per check");
    gc->add_option("--seed", gc_opts.seed, "Suite seed");
    gc->add_option("--tolerance", gc_opts.tolerance, "Relative error tolerance");
    gc->add_option("--corrupt", gc_opts.corrupt, "Name of a check whose analytic gradient is perturbed (test fixture)");
    gc->add_option("--only", gc_opts.only, "Run only checks whose name contains this text");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Train every row of a toggle grid");
    fs::path ab_grid, ab_out;
    ab->add_option("--grid", ab_grid, "Ablation grid JSON")->required();
    ab->add_option("--out", ab_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // usage problems share the validation exit code; --help stays 0
        return app.exit(e) == 0 ? oed::kExitOk : oed::kExitValidation;
    }

    if (*gen) {
        json j = gen_config.empty() ? json::object() : read_json(gen_config);
        if (gen_seed) j["seed"] = *gen_seed;
        if (gen_count) j["count"] = *gen_count;
        const auto cfg = oed::occlusion::dataset_config_from_json(j);
        if (gen_print) {
            std::cout << oed::occlusion::to_json(cfg).dump(2) << "\n";
            return oed::kExitOk;
        }
        if (gen_out.empty()) throw oed::ValidationError("generate: --out is required");
        oed::occlusion::generate_dataset(cfg, gen_out);
        std::cout << "wrote " << cfg.count << " scenes to " << gen_out.string() << "\n";
        return oed::kExitOk;
    }
    if (*train) {
        const auto cfg = oed::harness::load_train_config(train_config);
        if (train_print) {
            std::cout << oed::harness::to_json(cfg).dump(2) << "\n";
            return oed::kExitOk;
        }
        const auto r = oed::harness::run_training(cfg);
        json summary{{"steps", r.steps},
                     {"seconds", r.seconds},
                     {"max_recomposition_error", r.max_recomposition_error},
                     {"student", r.student ? oed::eval::to_json(*r.student) : json(nullptr)},
                     {"teacher", r.teacher ? oed::eval::to_json(*r.teacher) : json(nullptr)}};
        std::cout << summary.dump(2) << "\n";
        return oed::kExitOk;
    }
    if (*ev) {
        const auto gt = oed::eval::load_ground_truth(ev_dataset);
        const auto preds = oed::eval::predictions_from_json(read_json(ev_preds), gt.ids);
        const auto s = oed::eval::ap_summary(preds, gt.boxes);
        std::cout << oed::eval::to_json(s).dump(2) << "\n";
        if (!ev_out.empty()) {
            fs::create_directories(ev_out);
            oed::plot::write_text(ev_out / "metrics.json", oed::eval::to_json(s).dump(2) + "\n");
            oed::plot::write_text(ev_out / "metrics.csv", oed::eval::to_csv(s));
        }
        return oed::kExitOk;
    }
    if (*gc) {
        const auto report = oed::gradcheck::run_suite(gc_opts);
        for (const auto& c : report.checks) {
            std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  instances=" << c.instances
                      << "  max_rel_err=" << c.max_relative_error << "\n";
        }
        std::cout << (report.all_passed() ? "all checks passed" : "gradient check FAILED") << " in "
                  << report.seconds << " s\n";
        return report.all_passed() ? oed::kExitOk : oed::kExitNumerical;
    }
    if (*ab) {
        const auto grid = oed::harness::load_ablation_grid(read_json(ab_grid));
        const auto report = oed::harness::run_ablation(grid, ab_out);
        std::cout << report.to_markdown(grid);
        for (const auto& c : report.cells)
            if (!c.ok) std::cerr << "row " << c.row << " seed " << c.seed << " failed: " << c.error << "\n";
        return oed::kExitOk;
    }
    return oed::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const oed::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return oed::kExitValidation;
    } catch (const oed::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return oed::kExitNumerical;
    } catch (const oed::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return oed::kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return oed::kExitIo;
    }
}
