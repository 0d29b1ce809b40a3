#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "tmeasures/analysis.hpp"
#include "tmeasures/error.hpp"
#include "tmeasures/report.hpp"

namespace tmeasures {

/// Percentile with linear interpolation between order statistics (q in [0, 100]).
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw Error("invalid-argument", "percentile of an empty list");
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace svg {

inline std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Dark blue → teal → yellow ramp, t in [0, 1].
inline std::string ramp(double t) {
  static constexpr double stops[3][3] = {{68, 1, 84}, {33, 145, 140}, {253, 231, 37}};
  t = std::clamp(std::isnan(t) ? 0.5 : t, 0.0, 1.0);
  const double x = t * 2.0;
  const int i = std::min(1, static_cast<int>(x));
  const double f = x - i;
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(stops[i][0] + f * (stops[i + 1][0] - stops[i][0]))),
                static_cast<int>(std::lround(stops[i][1] + f * (stops[i + 1][1] - stops[i][1]))),
                static_cast<int>(std::lround(stops[i][2] + f * (stops[i + 1][2] - stops[i][2]))));
  return buf;
}

inline constexpr const char* outlier_color = "#00c000";

inline std::string header(double width, double height) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         number(width) + "\" height=\"" + number(height) + "\" viewBox=\"0 0 " + number(width) + " " + number(height) + "\">\n";
}

}  // namespace svg

/// One column per layer and one cell per valid activation value. Colors are
/// clipped to the [1st, 99th] percentile of the finite values; cells outside
/// that range (and +∞) are drawn as outliers.
inline std::string heatmap_svg(const MeasureReport& report, const std::string& measure) {
  require_nonempty(report);
  const auto& values = report.result(measure).values;
  const auto layers = unit_layers(report.manifest);
  std::vector<double> finite;
  for (const auto& v : values)
    if (v.is_finite()) finite.push_back(v.value);
  const double lo = finite.empty() ? 0.0 : percentile(finite, 1.0);
  const double hi = finite.empty() ? 1.0 : percentile(finite, 99.0);

  struct Column {
    std::string name;
    std::vector<double> cells;
  };
  std::vector<Column> columns;
  for (std::size_t u = 0; u < values.size(); ++u) {
    if (columns.empty() || layers[u].layer_index != layers[u - 1].layer_index) columns.push_back({layers[u].layer_name, {}});
    if (values[u].valid && !std::isnan(values[u].value)) columns.back().cells.push_back(values[u].value);
  }
  std::size_t tallest = 1;
  for (const auto& c : columns) tallest = std::max(tallest, c.cells.size());

  const double col_w = 24.0, gap = 4.0, top = 30.0, bottom = 110.0, left = 10.0;
  const double cell_h = std::max(0.5, std::min(8.0, 480.0 / static_cast<double>(tallest)));
  const double width = left * 2 + static_cast<double>(columns.size()) * (col_w + gap);
  const double height = top + bottom + cell_h * static_cast<double>(tallest);

  std::string out = svg::header(width, height);
  out += "<title>" + svg::escape(measure) + " heatmap</title>\n";
  out += "<text x=\"" + svg::number(left) + "\" y=\"18\" font-family=\"sans-serif\" font-size=\"12\">" + svg::escape(measure) +
         " (color range " + svg::number(lo) + " .. " + svg::number(hi) + ", outliers green)</text>\n";
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const double x = left + static_cast<double>(c) * (col_w + gap);
    out += "<g class=\"layer\" data-layer=\"" + svg::escape(columns[c].name) + "\">\n";
    for (std::size_t r = 0; r < columns[c].cells.size(); ++r) {
      const double v = columns[c].cells[r];
      const bool outlier = !std::isfinite(v) || v < lo || v > hi;
      const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      out += "<rect class=\"" + std::string(outlier ? "cell outlier" : "cell") + "\" x=\"" + svg::number(x) + "\" y=\"" +
             svg::number(top + static_cast<double>(r) * cell_h) + "\" width=\"" + svg::number(col_w) + "\" height=\"" +
             svg::number(cell_h) + "\" fill=\"" + (outlier ? std::string(svg::outlier_color) : svg::ramp(t)) + "\"/>\n";
    }
    const double ly = top + cell_h * static_cast<double>(tallest) + 8.0;
    out += "<text x=\"" + svg::number(x + col_w / 2) + "\" y=\"" + svg::number(ly) +
           "\" font-family=\"sans-serif\" font-size=\"9\" transform=\"rotate(90 " + svg::number(x + col_w / 2) + " " +
           svg::number(ly) + ")\">" + svg::escape(columns[c].name) + "</text>\n</g>\n";
  }
  out += "</svg>\n";
  return out;
}

inline void render_heatmap(const MeasureReport& report, const std::string& measure, const std::filesystem::path& path) {
  write_text_file(path, heatmap_svg(report, measure));
}

/// Per-layer means as a polyline, one marker per layer with a valid mean.
inline std::string layer_plot_svg(const MeasureReport& report, const std::string& measure) {
  require_nonempty(report);
  const auto layers = layer_aggregate(report, measure);
  double vmin = 0.0, vmax = 0.0;
  bool any = false;
  for (const auto& l : layers) {
    if (!l.valid) continue;
    vmin = any ? std::min(vmin, l.mean) : l.mean;
    vmax = any ? std::max(vmax, l.mean) : l.mean;
    any = true;
  }
  if (!any || vmax == vmin) {
    vmin -= 0.5;
    vmax += 0.5;
  }
  const double w = 60.0 + 30.0 * static_cast<double>(std::max<std::size_t>(layers.size(), 2)), h = 300.0;
  const double x0 = 50.0, y0 = 20.0, pw = w - 70.0, ph = h - 120.0;
  auto px = [&](std::size_t i) { return x0 + pw * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(1, layers.size() - 1)); };
  auto py = [&](double v) { return y0 + ph * (1.0 - (v - vmin) / (vmax - vmin)); };

  std::string out = svg::header(w, h);
  out += "<title>" + svg::escape(measure) + " by layer</title>\n";
  out += "<line x1=\"" + svg::number(x0) + "\" y1=\"" + svg::number(y0 + ph) + "\" x2=\"" + svg::number(x0 + pw) + "\" y2=\"" +
         svg::number(y0 + ph) + "\" stroke=\"black\"/>\n";
  out += "<text x=\"4\" y=\"" + svg::number(y0 + 4) + "\" font-family=\"sans-serif\" font-size=\"9\">" + svg::number(vmax) + "</text>\n";
  out += "<text x=\"4\" y=\"" + svg::number(y0 + ph) + "\" font-family=\"sans-serif\" font-size=\"9\">" + svg::number(vmin) + "</text>\n";
  std::string points;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].valid) continue;
    points += svg::number(px(i)) + "," + svg::number(py(layers[i].mean)) + " ";
  }
  out += "<polyline fill=\"none\" stroke=\"#21918c\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].valid) {
      out += "<circle class=\"layer-mean\" cx=\"" + svg::number(px(i)) + "\" cy=\"" + svg::number(py(layers[i].mean)) +
             "\" r=\"3\" fill=\"#440154\"/>\n";
    }
    out += "<text x=\"" + svg::number(px(i)) + "\" y=\"" + svg::number(y0 + ph + 10) +
           "\" font-family=\"sans-serif\" font-size=\"9\" transform=\"rotate(90 " + svg::number(px(i)) + " " +
           svg::number(y0 + ph + 10) + ")\">" + svg::escape(layers[i].layer_name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

inline void render_layer_plot(const MeasureReport& report, const std::string& measure, const std::filesystem::path& path) {
  write_text_file(path, layer_plot_svg(report, measure));
}

/// Convergence grid of median relative errors, samples down, transformations across.
inline std::string grid_svg(const ConvergenceGrid& grid) {
  const std::size_t S = grid.sample_sizes.size(), T = grid.transform_sizes.size();
  std::vector<double> finite;
  for (const auto& row : grid.median_error)
    for (double v : row)
      if (std::isfinite(v)) finite.push_back(v);
  const double vmax = finite.empty() ? 1.0 : std::max(1e-12, *std::max_element(finite.begin(), finite.end()));
  const double cell = 60.0, left = 60.0, top = 40.0;
  std::string out = svg::header(left + cell * static_cast<double>(T) + 10, top + cell * static_cast<double>(S) + 10);
  out += "<title>median relative error</title>\n";
  for (std::size_t t = 0; t < T; ++t) {
    out += "<text x=\"" + svg::number(left + cell * (static_cast<double>(t) + 0.5)) +
           "\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + std::to_string(grid.transform_sizes[t]) + "</text>\n";
  }
  for (std::size_t s = 0; s < S; ++s) {
    out += "<text x=\"50\" y=\"" + svg::number(top + cell * (static_cast<double>(s) + 0.5)) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + std::to_string(grid.sample_sizes[s]) + "</text>\n";
    for (std::size_t t = 0; t < T; ++t) {
      const double v = grid.median_error[s][t];
      const double x = left + cell * static_cast<double>(t), y = top + cell * static_cast<double>(s);
      out += "<rect class=\"cell\" x=\"" + svg::number(x) + "\" y=\"" + svg::number(y) + "\" width=\"" + svg::number(cell) +
             "\" height=\"" + svg::number(cell) + "\" fill=\"" + svg::ramp(v / vmax) + "\"/>\n";
      out += "<text x=\"" + svg::number(x + cell / 2) + "\" y=\"" + svg::number(y + cell / 2 + 4) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\" fill=\"white\">" + svg::number(100.0 * v) + "%</text>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace tmeasures
