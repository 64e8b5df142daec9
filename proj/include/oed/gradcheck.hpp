// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference checks of every differentiable op and loss.
//
// For an input entry x the analytic partial a is compared with
// n = (f(x + h) - f(x - h)) / 2h and the error is |a - n| / max(|a|, |n|, floor).
// Non-scalar ops are reduced to a scalar by a fixed random projection.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace oed::gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kRelativeFloor = 1e-3;
inline constexpr double kDefaultTolerance = 1e-4;

struct SuiteOptions {
    std::size_t instances = 100;
    std::uint64_t seed = 20240611;
    double tolerance = kDefaultTolerance;
    std::string corrupt;  // check whose analytic gradient is deliberately perturbed
    std::string only;     // substring filter on check names
};

struct CheckResult {
    std::string name;
    std::size_t instances = 0;
    std::size_t entries = 0;  // partials compared
    double max_relative_error = 0.0;
    bool teacher_grad_zero = true;  // for losses with a detached teacher input
    bool passed = false;
    std::string detail;
};

struct SuiteReport {
    std::vector<CheckResult> checks;
    double seconds = 0.0;
    bool all_passed() const;
};

/// Names of every check in suite order.
std::vector<std::string> check_names();

SuiteReport run_suite(const SuiteOptions& options = {});

}  // namespace oed::gradcheck
