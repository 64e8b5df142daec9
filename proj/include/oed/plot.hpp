// Copyright (C) 2026 The OED Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace oed::plot {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Standalone SVG line chart with linear axes and a legend.
std::string line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace oed::plot
