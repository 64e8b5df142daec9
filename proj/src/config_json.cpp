// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#include "oed/config_json.hpp"

#include <cstdint>

#include "oed/errors.hpp"

namespace oed {

void overlay_known(nlohmann::json& dst, const nlohmann::json& src, const std::string& where) {
    require(src.is_object(), (where.empty() ? std::string("config") : where) + " must be an object");
    for (const auto& [k, v] : src.items()) {
        const std::string key = where + k;
        require(dst.contains(k), "unknown key '" + key + "'");
        auto& slot = dst[k];
        if (slot.is_object()) {
            overlay_known(slot, v, key + ".");
            continue;
        }
        require(v.is_number() == slot.is_number() && v.is_string() == slot.is_string() &&
                    v.is_boolean() == slot.is_boolean(),
                "wrong type for '" + key + "'");
        if (slot.is_number_integer()) {
            require(!v.is_number_float(), "'" + key + "' must be an integer");
            require(!(slot.is_number_unsigned() && v.is_number_integer() && !v.is_number_unsigned() &&
                      v.get<std::int64_t>() < 0),
                    "'" + key + "' must be non-negative");
            slot = v;
        } else if (slot.is_number_float()) {
            slot = v.get<double>();
        } else {
            slot = v;
        }
    }
}

}  // namespace oed
