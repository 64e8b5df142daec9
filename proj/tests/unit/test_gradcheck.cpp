// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>

#include "oed/gradcheck.hpp"

using namespace oed::gradcheck;

TEST_CASE("check names are unique and cover ops and losses") {
    const auto names = check_names();
    CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
    for (const char* n : {"op.conv2d", "op.bilinear_sample", "msda.forward", "adapter.forward", "loss.candidate",
                          "loss.occlusion_aware", "loss.detection", "loss.total"})
        CHECK(std::find(names.begin(), names.end(), n) != names.end());
    CHECK(names.back() == "loss.total");
}

TEST_CASE("suite passes with a few instances") {
    SuiteOptions o;
    o.instances = 5;
    const auto r = run_suite(o);
    CHECK(r.checks.size() == check_names().size());
    for (const auto& c : r.checks) {
        INFO(c.name << " " << c.detail);
        CHECK(c.passed);
        CHECK(c.teacher_grad_zero);
        CHECK(c.entries > 0);
        CHECK(c.max_relative_error <= kDefaultTolerance);
    }
    CHECK(r.all_passed());
}

TEST_CASE("a corrupted gradient is caught") {
    for (const char* name : {"op.matmul", "loss.occlusion_aware"}) {
        SuiteOptions o;
        o.instances = 3;
        o.corrupt = name;
        o.only = name;
        const auto r = run_suite(o);
        REQUIRE(r.checks.size() >= 1);
        bool seen = false;
        for (const auto& c : r.checks)
            if (c.name == name) {
                seen = true;
                CHECK_FALSE(c.passed);
            }
        CHECK(seen);
        CHECK_FALSE(r.all_passed());
    }
}
