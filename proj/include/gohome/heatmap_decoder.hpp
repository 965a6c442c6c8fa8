// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Sparse heatmap decoding: lane ranking, curvilinear lane rasters built from a
// longitudinal and a lateral component, a cartesian connection pass, per
// pixel probabilities and their projection onto the agent-centred grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gohome/error.hpp"
#include "gohome/geometry.hpp"
#include "gohome/map_core.hpp"
#include "gohome/nn/layers.hpp"
#include "gohome/nn/ops.hpp"
#include "gohome/scene_encoder.hpp"

namespace gohome {

inline constexpr std::size_t kGeometricChannels = 5;

/// Row-major (rows, cols) grid; pixel (i, j) spans [j, j+1) x [i, i+1) pixels
/// from `origin` along the axes rotated by `orientation`.
struct HeatmapGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double resolution = 0.5;
  Vec2 origin;
  double orientation = 0.0;
  std::vector<double> values;

  /// Square grid of side `range` centred on `frame`, axes along its heading.
  static HeatmapGrid centered(const Pose2& frame, double range, double resolution) {
    HeatmapGrid g;
    g.rows = g.cols = static_cast<std::size_t>(std::llround(range / resolution));
    g.resolution = resolution;
    g.origin = frame.to_parent({-0.5 * range, -0.5 * range});
    g.orientation = frame.yaw;
    g.values.assign(g.rows * g.cols, 0.0);
    return g;
  }

  Pose2 pose() const { return {origin, orientation}; }
  std::size_t size() const { return rows * cols; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }

  Vec2 pixel_center(std::size_t i, std::size_t j) const {
    return pose().to_parent({(static_cast<double>(j) + 0.5) * resolution, (static_cast<double>(i) + 0.5) * resolution});
  }
  Vec2 cell_center(std::size_t cell) const { return pixel_center(cell / cols, cell % cols); }

  /// Flat index of the pixel containing `p`, or -1 outside the grid.
  std::int64_t cell_of(Vec2 p) const { return cell_of_local(pose().to_local(p)); }

  /// Same as cell_of for a point already in grid coordinates.
  std::int64_t cell_of_local(Vec2 q) const {
    const double fj = std::floor(q.x / resolution), fi = std::floor(q.y / resolution);
    if (!(fi >= 0.0 && fj >= 0.0 && fi < static_cast<double>(rows) && fj < static_cast<double>(cols))) return -1;
    return static_cast<std::int64_t>(fi) * static_cast<std::int64_t>(cols) + static_cast<std::int64_t>(fj);
  }

  bool same_geometry(const HeatmapGrid& o) const {
    return rows == o.rows && cols == o.cols && resolution == o.resolution && origin == o.origin &&
           orientation == o.orientation;
  }
};

// ---------------------------------------------------------------- ranking

struct LaneScore {
  std::int64_t lanelet_id = 0;
  double score = 0.0;
  int label = 0;
};

/// Scores sorted by descending value, ties by ascending lanelet id.
inline std::vector<LaneScore> rank_lanes(const nn::Tensor& scores, const std::vector<std::int64_t>& ids,
                                         const std::vector<int>& labels = {}) {
  if (scores.size() != ids.size()) throw ShapeError("rank_lanes: score count differs from lanelet count");
  std::vector<LaneScore> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out[i] = {ids[i], scores[i], labels.empty() ? 0 : labels[i]};
  std::stable_sort(out.begin(), out.end(), [](const LaneScore& a, const LaneScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.lanelet_id < b.lanelet_id;
  });
  return out;
}

/// First min(k, L) ids of a ranked list.
inline std::vector<std::int64_t> select_top_k(const std::vector<LaneScore>& ranked, std::size_t k) {
  if (k == 0) throw ConfigError("top-k needs k >= 1");
  std::vector<std::int64_t> ids;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) ids.push_back(ranked[i].lanelet_id);
  return ids;
}

// ---------------------------------------------------------------- raster geometry

/// Per-pixel placement of one lane raster: pixel (i, j) sits at
/// s = (i + 0.5) res, d = -width/2 + (j + 0.5) res in the lanelet frame.
struct RasterGeometry {
  std::size_t h = 0, w = 0;
  std::vector<Vec2> world;          // pixel centres, scene frame
  std::vector<std::int64_t> cells;  // containing grid cell or -1
  std::vector<double> geometric;    // (h*w, 5): x, y, heading, occupancy, curvature
};

inline RasterGeometry raster_geometry(const map::Lanelet& lanelet, const HeatmapGrid& grid, const Pose2& frame,
                                      const ModelConfig& cfg) {
  RasterGeometry g;
  g.h = cfg.raster_h();
  g.w = cfg.raster_w();
  const double res = cfg.resolution;
  const double half_range = 0.5 * cfg.output_range;
  g.world.resize(g.h * g.w);
  g.cells.resize(g.h * g.w);
  g.geometric.resize(g.h * g.w * kGeometricChannels);
  const RigidTransform to_grid = grid.pose().transform();
  const RigidTransform to_frame = frame.transform();
  for (std::size_t i = 0; i < g.h; ++i) {
    const double s = (static_cast<double>(i) + 0.5) * res;
    const double heading = wrap_angle(lanelet.heading_at(s) - frame.yaw) / std::numbers::pi;
    const double occupied = s <= lanelet.length() ? 1.0 : 0.0;
    const double curvature = std::clamp(lanelet.curvature_at(s), -cfg.curvature_clip, cfg.curvature_clip);
    for (std::size_t j = 0; j < g.w; ++j) {
      const double d = -0.5 * cfg.raster_width + (static_cast<double>(j) + 0.5) * res;
      const std::size_t px = i * g.w + j;
      const Vec2 p = lanelet.point_at(s, d);
      g.world[px] = p;
      g.cells[px] = grid.cell_of_local(to_grid.to_local(p));
      const Vec2 local = to_frame.to_local(p);
      double* geo = g.geometric.data() + px * kGeometricChannels;
      geo[0] = local.x / half_range;
      geo[1] = local.y / half_range;
      geo[2] = heading;
      geo[3] = occupied;
      geo[4] = curvature;
    }
  }
  return g;
}

/// Compact numbering of the grid cells touched by a set of raster pixels.
struct CellIndex {
  std::vector<std::int64_t> cells;    // touched cell ids, ascending
  std::vector<std::int64_t> compact;  // per raster pixel: position in `cells`, or -1
  std::vector<double> counts;         // raster pixels per touched cell
};

inline CellIndex build_cell_index(const std::vector<std::int64_t>& pixel_cells) {
  CellIndex idx;
  std::int64_t max_cell = -1;
  for (std::int64_t c : pixel_cells) max_cell = std::max(max_cell, c);
  // Dense slot table over [0, max_cell]: marks touched cells, then numbers
  // them in ascending order.
  std::vector<std::int64_t> slot(static_cast<std::size_t>(max_cell + 1), -1);
  for (std::int64_t c : pixel_cells)
    if (c >= 0) slot[static_cast<std::size_t>(c)] = 0;
  for (std::size_t c = 0; c < slot.size(); ++c)
    if (slot[c] == 0) {
      slot[c] = static_cast<std::int64_t>(idx.cells.size());
      idx.cells.push_back(static_cast<std::int64_t>(c));
    }
  idx.counts.assign(idx.cells.size(), 0.0);
  idx.compact.resize(pixel_cells.size());
  for (std::size_t p = 0; p < pixel_cells.size(); ++p) {
    const std::int64_t c = pixel_cells[p];
    idx.compact[p] = c < 0 ? -1 : slot[static_cast<std::size_t>(c)];
    if (c >= 0) idx.counts[static_cast<std::size_t>(idx.compact[p])] += 1.0;
  }
  return idx;
}

// ---------------------------------------------------------------- decoder layers

/// R_features for k lanelets: (k*h*w, c) with row (r*h + i)*w + j equal to
/// lon(e_r)[i] + lat(e_r)[j]. The two linear maps cost (h + w) * c * C
/// multiply-adds per lanelet.
inline nn::Tensor build_lane_raster(const nn::Linear& lon, const nn::Linear& lat, const nn::Tensor& encoding_rows,
                                    std::size_t h, std::size_t w, std::size_t c) {
  return nn::broadcast_sum_raster(lon(encoding_rows), lat(encoding_rows), h, w, c);
}

/// Dense reference: one linear map straight to the (h, w, c) volume, h * w * c * C
/// multiply-adds per lanelet.
inline nn::Tensor build_lane_raster_dense(const nn::Linear& full, const nn::Tensor& encoding_rows, std::size_t h,
                                          std::size_t w, std::size_t c) {
  return nn::reshape(full(encoding_rows), {encoding_rows.rows() * h * w, c});
}

/// Scatter-mean of raster features into the touched cells, count channel,
/// shared per-cell linear layer with ReLU, gather back per raster pixel.
/// Pixels outside the grid gather zeros.
inline nn::Tensor cartesian_connection(const nn::Tensor& features, const CellIndex& idx, const nn::Linear& connect) {
  const nn::Tensor buffer = nn::scatter_mean_rows(features, idx.compact, idx.cells.size());
  const nn::Tensor counts = nn::Tensor::from({idx.cells.size(), 1}, idx.counts);
  const nn::Tensor mixed = nn::relu(connect(nn::concat_cols({buffer, counts})));
  return nn::gather_rows(mixed, idx.compact);
}

inline nn::Tensor finalize_proba(const nn::Tensor& pixel_features, const nn::Linear& head) {
  return nn::sigmoid(head(pixel_features));
}

/// Mean of the pixel probabilities falling in each touched cell, (cells, 1).
inline nn::Tensor project_sparse(const nn::Tensor& proba, const CellIndex& idx) {
  return nn::scatter_mean_rows(proba, idx.compact, idx.cells.size());
}

struct LaneRaster {
  std::int64_t lanelet_id = 0;
  std::size_t h = 0, w = 0;
  std::vector<std::int64_t> cells;  // per pixel, -1 outside the grid
  std::vector<double> proba;        // per pixel
};

/// Plain projection: cell value = mean of the raster pixels whose centre lies
/// in it, accumulated in raster order then pixel order; untouched cells are 0.
inline HeatmapGrid project_heatmap(const std::vector<LaneRaster>& rasters, HeatmapGrid grid) {
  std::vector<double> count(grid.size(), 0.0);
  std::fill(grid.values.begin(), grid.values.end(), 0.0);
  for (const LaneRaster& r : rasters) {
    if (r.cells.size() != r.proba.size()) throw ShapeError("project_heatmap: raster cells and values differ in size");
    for (std::size_t p = 0; p < r.cells.size(); ++p) {
      if (r.cells[p] < 0) continue;
      const auto c = static_cast<std::size_t>(r.cells[p]);
      grid.values[c] += r.proba[p];
      count[c] += 1.0;
    }
  }
  for (std::size_t c = 0; c < grid.size(); ++c)
    if (count[c] > 0.0) grid.values[c] /= count[c];
  return grid;
}

/// Writes sparse cell values into a copy of `grid` with zeros elsewhere.
inline HeatmapGrid densify(const HeatmapGrid& grid, const std::vector<std::int64_t>& cells, const nn::Tensor& values) {
  HeatmapGrid out = grid;
  std::fill(out.values.begin(), out.values.end(), 0.0);
  for (std::size_t i = 0; i < cells.size(); ++i) out.values[static_cast<std::size_t>(cells[i])] = values[i];
  return out;
}

/// Initial output probability of the ranking and raster heads.
inline constexpr double kOutputPrior = 0.01;

class HeatmapDecoder {
 public:
  HeatmapDecoder() = default;
  HeatmapDecoder(nn::ParameterStore& store, const ModelConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
    const std::size_t c = cfg.channels, rc = cfg.raster_channels;
    rank = nn::Linear(store, "decoder.rank", c, 1, rng);
    lon = nn::Linear(store, "decoder.lon", c, cfg.raster_h() * rc, rng);
    lat = nn::Linear(store, "decoder.lat", c, cfg.raster_w() * rc, rng);
    connect = nn::Linear(store, "decoder.connect", rc + 1, rc, rng);
    head = nn::Linear(store, "decoder.head", 2 * rc + kGeometricChannels, 1, rng);
    // Positives are rare for both heads, so their biases start at the logit
    // of a small prior instead of 0.5; otherwise early steps are spent only
    // on shifting the bias.
    const double prior_logit = std::log(kOutputPrior / (1.0 - kOutputPrior));
    for (nn::Tensor* b : {&rank.bias, &head.bias})
      for (double& v : b->mutable_values()) v = prior_logit;
  }

  const ModelConfig& config() const { return cfg_; }

  /// (L, 1) lane scores in (0, 1).
  nn::Tensor scores(const nn::Tensor& graph_encoding) const { return nn::sigmoid(rank(graph_encoding)); }

  struct Output {
    std::vector<std::size_t> rows;  // decoded lanelet rows, ascending
    CellIndex index;
    nn::Tensor raster_features;  // (n, 8) before activation
    nn::Tensor raster_proba;     // (n, 1)
    nn::Tensor cell_proba;       // (cells, 1)
  };

  /// Decodes the given rows of the graph encoding onto `grid`.
  Output decode(const nn::Tensor& graph_encoding, std::vector<std::size_t> rows,
                const std::vector<const map::Lanelet*>& lanelets, const HeatmapGrid& grid, const Pose2& frame) const {
    std::sort(rows.begin(), rows.end());
    Output out;
    out.rows = rows;
    const std::size_t h = cfg_.raster_h(), w = cfg_.raster_w(), rc = cfg_.raster_channels;
    std::vector<std::int64_t> pixel_cells;
    std::vector<double> geometric;
    pixel_cells.reserve(rows.size() * h * w);
    geometric.reserve(rows.size() * h * w * kGeometricChannels);
    for (std::size_t r : rows) {
      const RasterGeometry g = raster_geometry(*lanelets.at(r), grid, frame, cfg_);
      pixel_cells.insert(pixel_cells.end(), g.cells.begin(), g.cells.end());
      geometric.insert(geometric.end(), g.geometric.begin(), g.geometric.end());
    }
    out.index = build_cell_index(pixel_cells);
    const std::size_t n = pixel_cells.size();
    if (n == 0) {
      out.raster_proba = nn::Tensor::zeros({0, 1});
      out.cell_proba = nn::Tensor::zeros({0, 1});
      return out;
    }

    std::vector<std::int64_t> gather(rows.begin(), rows.end());
    const nn::Tensor enc = nn::gather_rows(graph_encoding, gather);
    out.raster_features = build_lane_raster(lon, lat, enc, h, w, rc);
    const nn::Tensor act = nn::relu(out.raster_features);
    const nn::Tensor connected = cartesian_connection(act, out.index, connect);
    const nn::Tensor geo = nn::Tensor::from({n, kGeometricChannels}, std::move(geometric));
    out.raster_proba = finalize_proba(nn::concat_cols({act, geo, connected}), head);
    out.cell_proba = project_sparse(out.raster_proba, out.index);
    return out;
  }

  nn::Linear rank, lon, lat, connect, head;

 private:
  ModelConfig cfg_;
};

// ---------------------------------------------------------------- targets and loss

/// Gaussian value of `cell` around `gt`; the cell containing gt is exactly 1.
inline double target_value(const HeatmapGrid& grid, std::int64_t gt_cell, Vec2 gt, std::size_t cell, double sigma) {
  if (static_cast<std::int64_t>(cell) == gt_cell) return 1.0;
  const Vec2 q = grid.pose().to_local(gt);
  const double dx = (static_cast<double>(cell % grid.cols) + 0.5) * grid.resolution - q.x;
  const double dy = (static_cast<double>(cell / grid.cols) + 0.5) * grid.resolution - q.y;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

/// Dense Gaussian target; nullopt when gt lies outside the grid (the sample
/// cannot be supervised).
inline std::optional<HeatmapGrid> target_heatmap(Vec2 gt, const HeatmapGrid& grid, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("target sigma must be positive");
  const std::int64_t gt_cell = grid.cell_of(gt);
  if (gt_cell < 0) return std::nullopt;
  HeatmapGrid y = grid;
  for (std::size_t c = 0; c < y.size(); ++c) y.values[c] = target_value(grid, gt_cell, gt, c, sigma);
  return y;
}

struct LossTerms {
  nn::Tensor total;
  double focal = 0.0;
  double ranking = 0.0;
  std::size_t clamped = 0;
};

/// Dense focal loss over all P pixels plus `ranking_weight` x mean BCE.
inline LossTerms combined_loss(const nn::Tensor& yhat, const std::vector<double>& y, const nn::Tensor& lane_scores,
                               const std::vector<double>& lane_labels, double ranking_weight = 1e-2) {
  LossTerms t;
  const nn::Tensor focal = nn::focal_loss(yhat, y, static_cast<double>(y.size()), &t.clamped);
  const nn::Tensor rank = nn::bce_mean(lane_scores, lane_labels);
  t.focal = focal.item();
  t.ranking = rank.item();
  t.total = nn::add_scalars(focal, rank, 1.0, ranking_weight);
  return t;
}

/// Same value as combined_loss on the densified heatmap, evaluated on the
/// touched cells plus the closed-form terms of untouched cells (Ŷ = 0 there,
/// clamped) within 8 sigma of the gt cell. Requires gt inside the grid.
inline LossTerms sparse_combined_loss(const nn::Tensor& cell_proba, const std::vector<std::int64_t>& cells,
                                      const HeatmapGrid& grid, Vec2 gt, double sigma, const nn::Tensor& lane_scores,
                                      const std::vector<double>& lane_labels, double ranking_weight = 1e-2) {
  const std::int64_t gt_cell = grid.cell_of(gt);
  if (gt_cell < 0) throw InputError("ground truth outside the heatmap grid");
  const double p = static_cast<double>(grid.size());
  std::vector<double> y(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i)
    y[i] = target_value(grid, gt_cell, gt, static_cast<std::size_t>(cells[i]), sigma);

  LossTerms t;
  nn::Tensor focal = cells.empty() ? nn::Tensor::scalar(0.0) : nn::focal_loss(cell_proba, y, p, &t.clamped);
  // Untouched cells near the target: prediction is exactly 0, clamped.
  const double lo = nn::kProbClamp;
  double untouched = 0.0;
  const auto radius = static_cast<std::int64_t>(std::ceil(8.0 * sigma / grid.resolution));
  const auto gi = gt_cell / static_cast<std::int64_t>(grid.cols), gj = gt_cell % static_cast<std::int64_t>(grid.cols);
  for (std::int64_t i = std::max<std::int64_t>(0, gi - radius);
       i <= std::min<std::int64_t>(static_cast<std::int64_t>(grid.rows) - 1, gi + radius); ++i)
    for (std::int64_t j = std::max<std::int64_t>(0, gj - radius);
         j <= std::min<std::int64_t>(static_cast<std::int64_t>(grid.cols) - 1, gj + radius); ++j) {
      const std::int64_t c = i * static_cast<std::int64_t>(grid.cols) + j;
      if (std::binary_search(cells.begin(), cells.end(), c)) continue;
      const double yc = target_value(grid, gt_cell, gt, static_cast<std::size_t>(c), sigma);
      if (yc == 1.0)
        untouched += (1.0 - lo) * (1.0 - lo) * std::log(lo);
      else
        untouched += yc * yc * std::pow(1.0 - yc, 4) * std::log(1.0 - lo);
      t.clamped += 1;
    }
  focal = nn::add_scalars(focal, nn::Tensor::scalar(-untouched / p));
  const nn::Tensor rank = nn::bce_mean(lane_scores, lane_labels);
  t.focal = focal.item();
  t.ranking = rank.item();
  t.total = nn::add_scalars(focal, rank, 1.0, ranking_weight);
  return t;
}

// ---------------------------------------------------------------- export

/// 16-bit binary PGM (P5, maxval 65535, big-endian), value x 65535 rounded;
/// image row 0 is grid row 0.
inline void write_pgm(const std::filesystem::path& path, const HeatmapGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << grid.cols << " " << grid.rows << "\n65535\n";
  std::vector<char> data(grid.size() * 2);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(grid.values[c], 0.0, 1.0) * 65535.0));
    data[2 * c] = static_cast<char>(v >> 8);
    data[2 * c + 1] = static_cast<char>(v & 0xff);
  }
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write on " + path.string());
}

inline nlohmann::json grid_metadata(const HeatmapGrid& grid) {
  return {{"origin", {grid.origin.x, grid.origin.y}},
          {"resolution", grid.resolution},
          {"orientation", grid.orientation},
          {"H", grid.rows},
          {"W", grid.cols}};
}

/// Writes `{stem}.pgm` and the `{stem}.json` sidecar.
inline void export_heatmap(const std::filesystem::path& stem, const HeatmapGrid& grid) {
  write_pgm(stem.string() + ".pgm", grid);
  std::ofstream meta(stem.string() + ".json");
  if (!meta) throw IoError("cannot write " + stem.string() + ".json");
  meta << grid_metadata(grid).dump(1) << "\n";
}

/// Reads a heatmap written by export_heatmap (values quantized to 1/65535).
inline HeatmapGrid import_heatmap(const std::filesystem::path& stem) {
  std::ifstream meta_in(stem.string() + ".json");
  if (!meta_in) throw IoError("cannot open " + stem.string() + ".json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("", std::string("heatmap sidecar: ") + e.what());
  }
  HeatmapGrid g;
  try {
    g.origin = {meta.at("origin").at(0).get<double>(), meta.at("origin").at(1).get<double>()};
    g.resolution = meta.at("resolution").get<double>();
    g.orientation = meta.at("orientation").get<double>();
    g.rows = meta.at("H").get<std::size_t>();
    g.cols = meta.at("W").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("", std::string("heatmap sidecar: ") + e.what());
  }
  std::ifstream in(stem.string() + ".pgm", std::ios::binary);
  if (!in) throw IoError("cannot open " + stem.string() + ".pgm");
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  if (magic != "P5" || w != g.cols || h != g.rows || maxval != 65535)
    throw ParseError("", "heatmap image does not match its sidecar");
  std::vector<unsigned char> data(w * h * 2);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!in) throw IoError("truncated heatmap image " + stem.string() + ".pgm");
  g.values.resize(w * h);
  for (std::size_t c = 0; c < g.values.size(); ++c)
    g.values[c] = static_cast<double>((data[2 * c] << 8) | data[2 * c + 1]) / 65535.0;
  return g;
}

}  // namespace gohome
