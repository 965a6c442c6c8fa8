// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Decode-cost benchmark: sweeps output range and pixel density, records the
// runtime multiply-add counter, wall-clock time and the dense-decoder
// reference curve, and renders the CSV as a log-scale SVG chart.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gohome/error.hpp"
#include "gohome/model.hpp"
#include "gohome/scene.hpp"

namespace gohome {

struct BenchConfig {
  std::vector<double> output_ranges{96.0, 192.0, 384.0};  // m, swept at base_resolution
  std::vector<double> pixels_per_meter{1.0, 2.0, 4.0};    // swept at base_range
  double base_range = 192.0;
  double base_resolution = 0.5;
  double input_range = 128.0;
  std::size_t top_k = 20;
  std::size_t dense_layers = 4;
  std::uint64_t seed = 7;

  void validate() const {
    if (output_ranges.empty() && pixels_per_meter.empty()) throw ConfigError("bench: nothing to sweep");
    for (double r : output_ranges)
      if (!(r > 0.0)) throw ConfigError("bench: output ranges must be positive");
    for (double p : pixels_per_meter)
      if (!(p > 0.0)) throw ConfigError("bench: pixels_per_meter must be positive");
    if (top_k == 0) throw ConfigError("bench: top_k must be at least 1");
  }
};

struct BenchRow {
  std::string sweep;  // "range" or "resolution"
  double output_range = 0.0;
  double resolution = 0.0;
  std::size_t top_k = 0;
  std::size_t scenes = 0;
  double mean_lanelets = 0.0;
  double mean_decoded = 0.0;
  double decode_macs = 0.0;  // mean per scene, runtime counter
  double dense_macs = 0.0;   // analytical dense decoder
  double wall_ms = 0.0;      // mean encode + decode time per scene
};

/// Measures one grid configuration. The model is rebuilt for it (raster
/// sizes follow the resolution), so weights are seeded, not trained; decode
/// cost depends on k and the map geometry only.
inline BenchRow bench_point(const std::vector<Scene>& scenes, ModelConfig cfg, const BenchConfig& bench,
                            const std::string& sweep) {
  if (scenes.empty()) throw InputError("bench: no scenes");
  cfg.top_k = bench.top_k;
  cfg.input_range = bench.input_range;
  cfg.validate();
  const GohomeModel model(cfg, bench.seed);
  BenchRow row;
  row.sweep = sweep;
  row.output_range = cfg.output_range;
  row.resolution = cfg.resolution;
  row.top_k = cfg.top_k;
  row.scenes = scenes.size();
  row.dense_macs = static_cast<double>(dense_decoder_macs(cfg.grid_size(), cfg.channels, bench.dense_layers));
  double seconds = 0.0;
  for (const Scene& s : scenes) {
    nn::NoGradGuard guard;
    const auto start = std::chrono::steady_clock::now();
    const ScenePass pass = run_scene(s, model, cfg.top_k);
    const HeatmapGrid heatmap = densify(pass.grid, pass.decoded.index.cells, pass.decoded.cell_proba);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    row.mean_lanelets += static_cast<double>(pass.inputs.num_lanes());
    row.mean_decoded += static_cast<double>(pass.decoded.rows.size());
    row.decode_macs += static_cast<double>(pass.decode_macs);
  }
  const double n = static_cast<double>(scenes.size());
  row.mean_lanelets /= n;
  row.mean_decoded /= n;
  row.decode_macs /= n;
  row.wall_ms = 1e3 * seconds / n;
  return row;
}

inline std::vector<BenchRow> run_bench(const std::vector<Scene>& scenes, const ModelConfig& base,
                                       const BenchConfig& bench) {
  bench.validate();
  std::vector<BenchRow> rows;
  for (double range : bench.output_ranges) {
    ModelConfig cfg = base;
    cfg.output_range = range;
    cfg.resolution = bench.base_resolution;
    rows.push_back(bench_point(scenes, cfg, bench, "range"));
  }
  for (double ppm : bench.pixels_per_meter) {
    ModelConfig cfg = base;
    cfg.output_range = bench.base_range;
    cfg.resolution = 1.0 / ppm;
    rows.push_back(bench_point(scenes, cfg, bench, "resolution"));
  }
  return rows;
}

inline constexpr const char* kBenchHeader =
    "sweep,output_range,resolution,pixels_per_meter,top_k,scenes,mean_lanelets,mean_decoded,decode_macs,dense_macs,"
    "wall_ms";

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = std::string(kBenchHeader) + "\n";
  char buf[512];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.6f\n", r.sweep.c_str(),
                  r.output_range, r.resolution, 1.0 / r.resolution, r.top_k, r.scenes, r.mean_lanelets, r.mean_decoded,
                  r.decode_macs, r.dense_macs, r.wall_ms);
    out += buf;
  }
  return out;
}

/// Parses bench_csv output; the header must match exactly.
inline std::vector<BenchRow> parse_bench_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kBenchHeader) throw ParseError("/0", "bench CSV header mismatch");
  std::vector<BenchRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 11) throw ParseError("/" + std::to_string(line_no), "expected 11 columns");
    try {
      BenchRow r;
      r.sweep = f[0];
      r.output_range = std::stod(f[1]);
      r.resolution = std::stod(f[2]);
      r.top_k = std::stoul(f[4]);
      r.scenes = std::stoul(f[5]);
      r.mean_lanelets = std::stod(f[6]);
      r.mean_decoded = std::stod(f[7]);
      r.decode_macs = std::stod(f[8]);
      r.dense_macs = std::stod(f[9]);
      r.wall_ms = std::stod(f[10]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError("/" + std::to_string(line_no), "malformed number");
    }
  }
  return rows;
}

namespace detail {

struct Series {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;  // (x, y), y > 0
};

inline std::string svg_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

/// One log-log panel at (x0, y0) of size (w, h).
inline std::string svg_panel(double x0, double y0, double w, double h, const std::string& title,
                             const std::string& xlabel, const std::vector<Series>& series) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Series& s : series)
    for (auto [x, y] : s.points) {
      if (!(x > 0.0) || !(y > 0.0)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  std::string out;
  out += "<text x=\"" + svg_number(x0 + w / 2) + "\" y=\"" + svg_number(y0 - 10) +
         "\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
  out += "<rect x=\"" + svg_number(x0) + "\" y=\"" + svg_number(y0) + "\" width=\"" + svg_number(w) + "\" height=\"" +
         svg_number(h) + "\" fill=\"none\" stroke=\"black\"/>\n";
  if (xmin > xmax) return out;
  const double lx0 = std::log10(xmin) - 0.1, lx1 = std::log10(xmax) + 0.1;
  const double ly0 = std::floor(std::log10(ymin)), ly1 = std::ceil(std::log10(ymax)) + (ymin == ymax ? 1.0 : 0.0);
  auto px = [&](double x) { return x0 + (std::log10(x) - lx0) / (lx1 - lx0) * w; };
  auto py = [&](double y) { return y0 + h - (std::log10(y) - ly0) / (ly1 - ly0) * h; };
  for (double e = ly0; e <= ly1 + 1e-9; e += 1.0) {
    const double y = py(std::pow(10.0, e));
    out += "<line x1=\"" + svg_number(x0) + "\" y1=\"" + svg_number(y) + "\" x2=\"" + svg_number(x0 + w) + "\" y2=\"" +
           svg_number(y) + "\" stroke=\"#ddd\"/>\n";
    out += "<text x=\"" + svg_number(x0 - 6) + "\" y=\"" + svg_number(y + 4) +
           "\" text-anchor=\"end\" font-size=\"11\">1e" + tick_label(e) + "</text>\n";
  }
  std::vector<double> xs;
  for (const Series& s : series)
    for (auto [x, y] : s.points) xs.push_back(x);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs)
    out += "<text x=\"" + svg_number(px(x)) + "\" y=\"" + svg_number(y0 + h + 16) +
           "\" text-anchor=\"middle\" font-size=\"11\">" + tick_label(x) + "</text>\n";
  out += "<text x=\"" + svg_number(x0 + w / 2) + "\" y=\"" + svg_number(y0 + h + 34) +
         "\" text-anchor=\"middle\" font-size=\"12\">" + xlabel + "</text>\n";
  double legend_y = y0 + 16;
  for (const Series& s : series) {
    std::string pts;
    for (auto [x, y] : s.points)
      if (x > 0.0 && y > 0.0) pts += svg_number(px(x)) + "," + svg_number(py(y)) + " ";
    out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"2\"/>\n";
    for (auto [x, y] : s.points)
      if (x > 0.0 && y > 0.0)
        out += "<circle cx=\"" + svg_number(px(x)) + "\" cy=\"" + svg_number(py(y)) + "\" r=\"3\" fill=\"" + s.color +
               "\"/>\n";
    out += "<text x=\"" + svg_number(x0 + 10) + "\" y=\"" + svg_number(legend_y) + "\" font-size=\"11\" fill=\"" +
           s.color + "\">" + s.label + "</text>\n";
    legend_y += 14;
  }
  return out;
}

}  // namespace detail

/// Log-scale chart of a bench CSV: multiply-adds and wall-clock against
/// output range and against pixels per meter. Depends on the CSV text only.
inline std::string bench_plot_svg(const std::string& csv) {
  const std::vector<BenchRow> rows = parse_bench_csv(csv);
  using detail::Series;
  Series range_sparse{"lane-raster decode MACs", "#1f77b4", {}}, range_dense{"dense decoder MACs", "#d62728", {}};
  Series res_sparse = range_sparse, res_dense = range_dense;
  Series range_wall{"wall-clock ms", "#2ca02c", {}}, res_wall = range_wall;
  for (const BenchRow& r : rows) {
    if (r.sweep == "range") {
      range_sparse.points.emplace_back(r.output_range, r.decode_macs);
      range_dense.points.emplace_back(r.output_range, r.dense_macs);
      range_wall.points.emplace_back(r.output_range, r.wall_ms);
    } else if (r.sweep == "resolution") {
      res_sparse.points.emplace_back(1.0 / r.resolution, r.decode_macs);
      res_dense.points.emplace_back(1.0 / r.resolution, r.dense_macs);
      res_wall.points.emplace_back(1.0 / r.resolution, r.wall_ms);
    }
  }
  const double w = 360, h = 260;
  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1680\" height=\"360\" font-family=\"sans-serif\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += detail::svg_panel(70, 40, w, h, "Decode cost vs output range", "output range (m)", {range_sparse, range_dense});
  svg += detail::svg_panel(490, 40, w, h, "Decode cost vs pixels per meter", "pixels per meter", {res_sparse, res_dense});
  svg += detail::svg_panel(910, 40, w, h, "Forward time vs output range", "output range (m)", {range_wall});
  svg += detail::svg_panel(1330, 40, w, h, "Forward time vs pixels per meter", "pixels per meter", {res_wall});
  svg += "</svg>\n";
  return svg;
}

/// Growth factor of decode and dense multiply-adds between consecutive
/// range-sweep rows (ranges in the listed order).
struct ScalingStep {
  double from_range = 0.0, to_range = 0.0;
  double decode_ratio = 0.0, dense_ratio = 0.0;
};

inline std::vector<ScalingStep> range_scaling(const std::vector<BenchRow>& rows) {
  std::vector<const BenchRow*> sweep;
  for (const BenchRow& r : rows)
    if (r.sweep == "range") sweep.push_back(&r);
  std::vector<ScalingStep> steps;
  for (std::size_t i = 1; i < sweep.size(); ++i)
    steps.push_back({sweep[i - 1]->output_range, sweep[i]->output_range,
                     sweep[i]->decode_macs / sweep[i - 1]->decode_macs, sweep[i]->dense_macs / sweep[i - 1]->dense_macs});
  return steps;
}

}  // namespace gohome
