// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include <json.hpp>

namespace oed {

/// Overlays `src` onto a fully populated `dst`. Unknown keys, type changes,
/// negative values for unsigned fields and fractional values for integer
/// fields throw ValidationError naming the offending key.
void overlay_known(nlohmann::json& dst, const nlohmann::json& src, const std::string& where = "");

}  // namespace oed
