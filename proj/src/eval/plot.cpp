#include "eval/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace kinscope {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string text(double x, double y, const std::string& s, const char* anchor = "middle", int size = 12) {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + std::to_string(size) +
         "\" text-anchor=\"" + anchor + "\" font-family=\"sans-serif\">" + escape(s) + "</text>\n";
}

}  // namespace

std::string line_chart_svg(const std::vector<double>& x, const std::vector<double>& y, const std::string& title,
                           const std::string& x_label, const std::string& y_label) {
  const double w = 480, h = 320, left = 60, right = 20, top = 40, bottom = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!x.empty()) {
    x0 = *std::min_element(x.begin(), x.end());
    x1 = *std::max_element(x.begin(), x.end());
    y0 = std::min(0.0, *std::min_element(y.begin(), y.end()));
    y1 = std::max(1.0, *std::max_element(y.begin(), y.end()));
  }
  if (x1 == x0) x1 = x0 + 1;
  auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * (w - left - right); };
  auto py = [&](double v) { return h - bottom - (v - y0) / (y1 - y0) * (h - top - bottom); };
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += text(w / 2, 22, title, "middle", 14);
  svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(h - bottom) + "\" x2=\"" + num(w - right) + "\" y2=\"" +
         num(h - bottom) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(h - bottom) +
         "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = y0 + (y1 - y0) * k / 4.0;
    svg += text(left - 6, py(v) + 4, num(v), "end", 10);
  }
  for (double v : x) svg += text(px(v), h - bottom + 16, num(v), "middle", 10);
  svg += text(w / 2, h - 12, x_label);
  svg += "<text x=\"16\" y=\"" + num(h / 2) + "\" font-size=\"12\" font-family=\"sans-serif\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 16 " + num(h / 2) + ")\">" + escape(y_label) + "</text>\n";
  std::string points;
  for (std::size_t i = 0; i < x.size(); ++i) points += num(px(x[i])) + "," + num(py(y[i])) + " ";
  svg += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
  for (std::size_t i = 0; i < x.size(); ++i)
    svg += "<circle cx=\"" + num(px(x[i])) + "\" cy=\"" + num(py(y[i])) + "\" r=\"3\" fill=\"#1f77b4\"/>\n";
  svg += "</svg>\n";
  return svg;
}

std::string heatmap_svg(const std::vector<std::vector<double>>& values, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& column_labels, const std::string& title) {
  const double cell = 70, left = 90, top = 60;
  const std::size_t rows = values.size(), cols = rows ? values.front().size() : 0;
  double lo = 1e300, hi = -1e300;
  for (const auto& r : values)
    for (double v : r) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo)) hi = lo + 1;
  const double w = left + cell * cols + 20, h = top + cell * rows + 20;
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += text(w / 2, 20, title, "middle", 14);
  for (std::size_t c = 0; c < cols; ++c)
    svg += text(left + cell * (c + 0.5), top - 8, c < column_labels.size() ? column_labels[c] : "");
  for (std::size_t r = 0; r < rows; ++r) {
    svg += text(left - 8, top + cell * (r + 0.5) + 4, r < row_labels.size() ? row_labels[r] : "", "end");
    for (std::size_t c = 0; c < cols; ++c) {
      const double t = (values[r][c] - lo) / (hi - lo);
      const int shade = static_cast<int>(std::lround(235 - 190 * t));
      const std::string color = "rgb(" + std::to_string(shade) + "," + std::to_string(shade) + ",255)";
      svg += "<rect x=\"" + num(left + cell * c) + "\" y=\"" + num(top + cell * r) + "\" width=\"" + num(cell) +
             "\" height=\"" + num(cell) + "\" fill=\"" + color + "\" stroke=\"white\"/>\n";
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", values[r][c]);
      svg += text(left + cell * (c + 0.5), top + cell * (r + 0.5) + 4, buf, "middle", 11);
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace kinscope
