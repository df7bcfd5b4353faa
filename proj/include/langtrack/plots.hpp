// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

namespace langtrack {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (x, y)
};

// Self-contained SVG line chart: axes, min/max tick labels, one polyline per
// series with a legend. Returns the document as a string.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<Series>& series);

// Vertical bars with value labels, one per (name, value) pair.
std::string svg_bar_chart(const std::string& title, const std::string& y_label,
                          const std::vector<std::pair<std::string, double>>& bars);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace langtrack
