// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "oed/tensor.hpp"

namespace oed {

/// Ordered named tensors; the flat parameter vector of a model.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    std::size_t add(std::string name, Tensor t);
    std::size_t size() const { return tensors.size(); }
    std::size_t numel() const;
    /// Throws ValidationError on name, count or shape disagreement.
    void require_same_layout(const ParamSet& other) const;

    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

// Snapshot file layout, all integers little-endian:
//
//   magic     8 bytes  "OEDPARAM"
//   version   u32      1
//   count     u32      number of tensors
//   count x { name_len u32, name bytes, rank u32, dims u64[rank] }
//   payload   f64[sum of numel], tensors in manifest order, IEEE-754 LE
void save_snapshot(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_snapshot(const std::filesystem::path& path);

std::vector<unsigned char> encode_snapshot(const ParamSet& params);
ParamSet decode_snapshot(const std::vector<unsigned char>& bytes);

}  // namespace oed
