// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "oed/errors.hpp"
#include "oed/params.hpp"
#include "oed/rng.hpp"

using namespace oed;

namespace {

ParamSet sample() {
    Rng rng(1);
    ParamSet p;
    p.add("conv.w", Tensor({2, 3, 3, 3}));
    p.add("bias", Tensor({2}));
    p.add("scalar", Tensor::scalar(-0.0));
    for (auto& t : p.tensors)
        for (double& v : t.storage()) v = rng.normal();
    return p;
}

}  // namespace

TEST_CASE("snapshot round trip is bit exact") {
    const auto p = sample();
    const auto bytes = encode_snapshot(p);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "OEDPARAM");
    CHECK(decode_snapshot(bytes) == p);
    const auto path = std::filesystem::temp_directory_path() / "oed_params_test.oedp";
    save_snapshot(p, path);
    CHECK(load_snapshot(path) == p);
    std::filesystem::remove(path);
}

TEST_CASE("corrupt snapshots are I/O errors") {
    auto bytes = encode_snapshot(sample());
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_snapshot(truncated), IoError);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_snapshot(magic), IoError);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_snapshot(trailing), IoError);
    CHECK_THROWS_AS(load_snapshot("/nonexistent/dir/x.oedp"), IoError);
}

TEST_CASE("layout checks") {
    auto a = sample(), b = sample();
    CHECK_NOTHROW(a.require_same_layout(b));
    b.names[1] = "other";
    CHECK_THROWS_AS(a.require_same_layout(b), ValidationError);
    CHECK(a.numel() == 54 + 2 + 1);
    CHECK_THROWS_AS(a.add("bias", Tensor({1})), ValidationError);
}
