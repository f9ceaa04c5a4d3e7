#pragma once

#include <string>
#include <vector>

namespace kinscope {

/// Minimal self-contained SVG charts. Data always ships as CSV alongside.
std::string line_chart_svg(const std::vector<double>& x, const std::vector<double>& y, const std::string& title,
                           const std::string& x_label, const std::string& y_label);
std::string heatmap_svg(const std::vector<std::vector<double>>& values, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& column_labels, const std::string& title);

}  // namespace kinscope
