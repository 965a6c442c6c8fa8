// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gohome/error.hpp"
#include "gohome/geometry.hpp"
#include "gohome/heatmap_decoder.hpp"
#include "gohome/nn/layers.hpp"
#include "gohome/nn/ops.hpp"
#include "gohome/scene.hpp"
#include "gohome/scene_encoder.hpp"

namespace gohome {

// ---------------------------------------------------------------- sampling

struct EndpointSet {
  std::vector<Vec2> points;        // scene frame, selection order
  std::vector<double> masses;      // neighbourhood sum at selection
  std::vector<std::int64_t> cells;  // selected grid cells
  bool degenerate = false;         // input heatmap was all zero
};

/// Pixel offsets (di, dj) with (di² + dj²) res² <= r², in row-major order.
inline std::vector<std::pair<int, int>> disk_offsets(double radius, double resolution) {
  const int reach = static_cast<int>(std::floor(radius / resolution));
  std::vector<std::pair<int, int>> out;
  for (int di = -reach; di <= reach; ++di)
    for (int dj = -reach; dj <= reach; ++dj)
      if (static_cast<double>(di * di + dj * dj) * resolution * resolution <= radius * radius) out.emplace_back(di, dj);
  return out;
}

/// Greedy coverage sampling: k times, pick the pixel whose disk of radius r
/// holds the most remaining mass (ties: lowest row-major index), then zero
/// that disk. Disk sums add values in row-major offset order, so the
/// incremental update reproduces a from-scratch evaluation bit for bit.
inline EndpointSet sample_endpoints(const HeatmapGrid& heatmap, std::size_t k, double radius) {
  if (k == 0) throw ConfigError("sample_endpoints: k must be at least 1");
  if (!(radius > 0.0)) throw ConfigError("sample_endpoints: radius must be positive");
  const auto rows = static_cast<std::int64_t>(heatmap.rows), cols = static_cast<std::int64_t>(heatmap.cols);
  std::vector<double> v = heatmap.values;
  bool any = false;
  for (double x : v) {
    if (!(x >= 0.0)) throw InputError("sample_endpoints: heatmap values must be non-negative");
    any = any || x > 0.0;
  }
  EndpointSet out;
  if (!any) {
    out.degenerate = true;
    const Vec2 centre = heatmap.pose().to_parent(
        {0.5 * static_cast<double>(cols) * heatmap.resolution, 0.5 * static_cast<double>(rows) * heatmap.resolution});
    out.points.assign(k, centre);
    out.masses.assign(k, 0.0);
    out.cells.assign(k, -1);
    return out;
  }

  const auto disk = disk_offsets(radius, heatmap.resolution);
  int reach = 0;
  for (auto [di, dj] : disk) reach = std::max({reach, std::abs(di), std::abs(dj)});

  // Scatter non-zero pixels in row-major order: each target receives its
  // contributions in increasing source index, i.e. row-major offset order.
  std::vector<double> sums(v.size(), 0.0);
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) {
      const double x = v[static_cast<std::size_t>(i * cols + j)];
      if (x == 0.0) continue;
      for (auto [di, dj] : disk) {
        const std::int64_t qi = i - di, qj = j - dj;
        if (qi < 0 || qj < 0 || qi >= rows || qj >= cols) continue;
        sums[static_cast<std::size_t>(qi * cols + qj)] += x;
      }
    }

  auto disk_sum = [&](std::int64_t i, std::int64_t j) {
    double s = 0.0;
    for (auto [di, dj] : disk) {
      const std::int64_t pi = i + di, pj = j + dj;
      if (pi < 0 || pj < 0 || pi >= rows || pj >= cols) continue;
      const double x = v[static_cast<std::size_t>(pi * cols + pj)];
      if (x != 0.0) s += x;
    }
    return s;
  };

  for (std::size_t n = 0; n < k; ++n) {
    std::size_t best = 0;
    double best_sum = 0.0;
    for (std::size_t c = 0; c < sums.size(); ++c)
      if (sums[c] > best_sum) {
        best_sum = sums[c];
        best = c;
      }
    if (!(best_sum > 0.0)) {
      // Exhausted: repeat the last selection.
      out.points.push_back(out.points.back());
      out.masses.push_back(0.0);
      out.cells.push_back(out.cells.back());
      continue;
    }
    const auto bi = static_cast<std::int64_t>(best) / cols, bj = static_cast<std::int64_t>(best) % cols;
    out.points.push_back(heatmap.pixel_center(static_cast<std::size_t>(bi), static_cast<std::size_t>(bj)));
    out.masses.push_back(best_sum);
    out.cells.push_back(static_cast<std::int64_t>(best));
    for (auto [di, dj] : disk) {
      const std::int64_t pi = bi + di, pj = bj + dj;
      if (pi < 0 || pj < 0 || pi >= rows || pj >= cols) continue;
      v[static_cast<std::size_t>(pi * cols + pj)] = 0.0;
    }
    for (std::int64_t i = std::max<std::int64_t>(0, bi - 2 * reach); i <= std::min(rows - 1, bi + 2 * reach); ++i)
      for (std::int64_t j = std::max<std::int64_t>(0, bj - 2 * reach); j <= std::min(cols - 1, bj + 2 * reach); ++j)
        sums[static_cast<std::size_t>(i * cols + j)] = disk_sum(i, j);
  }
  return out;
}

// ---------------------------------------------------------------- trajectories

struct PredictedTrajectory {
  std::vector<Vec2> waypoints;  // scene frame, one per future step
  Vec2 endpoint() const { return waypoints.back(); }
};

/// MLP (history, endpoint) -> intermediate waypoints, as residuals over the
/// straight line from the current position to the endpoint. Works in the
/// target frame.
class TrajectoryDecoder {
 public:
  TrajectoryDecoder() = default;
  TrajectoryDecoder(nn::ParameterStore& store, std::size_t history_steps, std::size_t future_steps, std::size_t hidden,
                    nn::Rng& rng)
      : history_(history_steps), future_(future_steps) {
    fc1 = nn::Linear(store, "trajectory.fc1", 2 * history_steps + 2, hidden, rng);
    fc2 = nn::Linear(store, "trajectory.fc2", hidden, hidden, rng);
    out = nn::Linear(store, "trajectory.out", hidden, 2 * (future_steps - 1), rng);
  }

  std::size_t history_steps() const { return history_; }
  std::size_t future_steps() const { return future_; }

  /// Input row: history positions in the target frame (masked steps zero),
  /// then the endpoint, all scaled.
  std::vector<double> input_row(const AgentTrack& track, const Pose2& frame, Vec2 endpoint_local) const {
    if (track.steps() != history_) throw InputError("trajectory decoder: history length differs from configuration");
    std::vector<double> row;
    row.reserve(2 * history_ + 2);
    for (std::size_t t = 0; t < history_; ++t) {
      const Vec2 p = track.valid[t] ? frame.to_local(track.states[t].position()) : Vec2{};
      row.push_back(p.x * kPositionScale);
      row.push_back(p.y * kPositionScale);
    }
    row.push_back(endpoint_local.x * kPositionScale);
    row.push_back(endpoint_local.y * kPositionScale);
    return row;
  }

  /// (B, 2(F-1)) intermediate waypoints in the target frame for B input rows
  /// with the given endpoints.
  nn::Tensor forward(const nn::Tensor& inputs, const std::vector<Vec2>& endpoints_local) const {
    const std::size_t b = inputs.rows();
    std::vector<double> base(b * 2 * (future_ - 1));
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t t = 0; t + 1 < future_; ++t) {
        const double f = static_cast<double>(t + 1) / static_cast<double>(future_);
        base[r * 2 * (future_ - 1) + 2 * t] = endpoints_local[r].x * f;
        base[r * 2 * (future_ - 1) + 2 * t + 1] = endpoints_local[r].y * f;
      }
    const nn::Tensor residual = out(nn::relu(fc2(nn::relu(fc1(inputs)))));
    return nn::add(residual, nn::Tensor::from(residual.shape(), std::move(base)));
  }

  /// Full trajectory in the scene frame; the last waypoint is `endpoint` exactly.
  PredictedTrajectory decode(const AgentTrack& track, const Pose2& frame, Vec2 endpoint) const {
    const Vec2 local = frame.to_local(endpoint);
    const nn::Tensor x = nn::Tensor::from({1, 2 * history_ + 2}, input_row(track, frame, local));
    nn::Tensor y;
    {
      nn::NoGradGuard guard;
      y = forward(x, {local});
    }
    PredictedTrajectory traj;
    for (std::size_t t = 0; t + 1 < future_; ++t) traj.waypoints.push_back(frame.to_parent({y[2 * t], y[2 * t + 1]}));
    traj.waypoints.push_back(endpoint);
    return traj;
  }

  nn::Linear fc1, fc2, out;

 private:
  std::size_t history_ = 0, future_ = 0;
};

/// Target-frame intermediate ground-truth waypoints, flattened (2(F-1)).
inline std::vector<double> intermediate_targets(const Scene& scene, const Pose2& frame) {
  std::vector<double> y;
  for (std::size_t t = 0; t + 1 < scene.gt_future.size(); ++t) {
    const Vec2 p = frame.to_local(scene.gt_future[t]);
    y.push_back(p.x);
    y.push_back(p.y);
  }
  return y;
}

// ---------------------------------------------------------------- ensembling

/// Pixel-wise weighted mean (Σ w_i Y_i) / Σ w_i over aligned grids.
inline HeatmapGrid ensemble(const std::vector<HeatmapGrid>& heatmaps, const std::vector<double>& weights) {
  if (heatmaps.empty()) throw InputError("ensemble: no heatmaps");
  if (weights.size() != heatmaps.size()) throw ConfigError("ensemble: one weight per heatmap required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("ensemble: weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("ensemble: weights must not all be zero");
  for (const HeatmapGrid& h : heatmaps)
    if (!h.same_geometry(heatmaps.front()) || h.values.size() != heatmaps.front().values.size())
      throw GridAlignmentError("ensemble: heatmap grids differ in size, resolution, origin or orientation");
  HeatmapGrid out = heatmaps.front();
  for (std::size_t c = 0; c < out.values.size(); ++c) {
    double s = 0.0;
    for (std::size_t m = 0; m < heatmaps.size(); ++m) s += weights[m] * heatmaps[m].values[c];
    out.values[c] = s / total;
  }
  return out;
}

// ---------------------------------------------------------------- metrics

struct ScenePrediction {
  std::string scene_id;
  std::vector<Vec2> endpoints;
  std::vector<std::vector<Vec2>> trajectories;  // one per endpoint; may be empty
  std::vector<double> masses;
};

struct MetricReport {
  std::vector<std::size_t> ks;
  std::vector<double> miss_rate, min_fde, min_ade;  // min_ade NaN when trajectories are absent
  double threshold = 2.0;
  std::size_t scenes = 0;

  double mr(std::size_t k) const { return miss_rate.at(index(k)); }
  double fde(std::size_t k) const { return min_fde.at(index(k)); }
  double ade(std::size_t k) const { return min_ade.at(index(k)); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["threshold"] = threshold;
    j["scenes"] = scenes;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const std::string s = std::to_string(ks[i]);
      j["MR_" + s] = miss_rate[i];
      j["minFDE_" + s] = min_fde[i];
      j["minADE_" + s] = std::isnan(min_ade[i]) ? nlohmann::json(nullptr) : nlohmann::json(min_ade[i]);
    }
    return j;
  }

 private:
  std::size_t index(std::size_t k) const {
    for (std::size_t i = 0; i < ks.size(); ++i)
      if (ks[i] == k) return i;
    throw InputError("metric report has no k=" + std::to_string(k));
  }
};

/// Per scene, minimum over the first k predictions of the final and average
/// displacement; a miss is minFDE_k > threshold. Means over scenes.
inline MetricReport evaluate(const std::vector<ScenePrediction>& predictions,
                             const std::vector<std::vector<Vec2>>& ground_truths, std::vector<std::size_t> ks = {1, 6},
                             double threshold = 2.0) {
  if (predictions.size() != ground_truths.size()) throw InputError("evaluate: prediction and ground-truth counts differ");
  MetricReport rep;
  rep.ks = ks;
  rep.threshold = threshold;
  rep.scenes = predictions.size();
  rep.miss_rate.assign(ks.size(), 0.0);
  rep.min_fde.assign(ks.size(), 0.0);
  rep.min_ade.assign(ks.size(), 0.0);
  bool have_traj = true;
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    const ScenePrediction& p = predictions[s];
    const std::vector<Vec2>& gt = ground_truths[s];
    if (gt.empty()) throw InputError("evaluate: empty ground truth for " + p.scene_id);
    for (std::size_t k : ks)
      if (p.endpoints.size() < k)
        throw InputError("evaluate: scene " + p.scene_id + " has " + std::to_string(p.endpoints.size()) +
                         " predictions, k=" + std::to_string(k) + " requested");
    if (p.trajectories.empty()) have_traj = false;
    for (const auto& tr : p.trajectories)
      if (tr.size() != gt.size())
        throw InputError("evaluate: scene " + p.scene_id + " trajectory length differs from the future horizon");
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      double fde = std::numeric_limits<double>::infinity(), ade = std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < ks[ki]; ++m) {
        fde = std::min(fde, distance(p.endpoints[m], gt.back()));
        if (!p.trajectories.empty()) {
          double sum = 0.0;
          for (std::size_t t = 0; t < gt.size(); ++t) sum += distance(p.trajectories[m][t], gt[t]);
          ade = std::min(ade, sum / static_cast<double>(gt.size()));
        }
      }
      rep.min_fde[ki] += fde;
      rep.miss_rate[ki] += fde > threshold ? 1.0 : 0.0;
      if (!p.trajectories.empty()) rep.min_ade[ki] += ade;
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, predictions.size()));
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    rep.miss_rate[ki] /= n;
    rep.min_fde[ki] /= n;
    rep.min_ade[ki] = have_traj ? rep.min_ade[ki] / n : std::numeric_limits<double>::quiet_NaN();
  }
  return rep;
}

/// Single-mode constant-velocity extrapolation of the target's last state.
inline ScenePrediction constant_velocity(const Scene& scene) {
  const AgentTrack& a = scene.target();
  const TrackState& s = a.states[a.last_valid()];
  const Vec2 dir{std::cos(s.yaw), std::sin(s.yaw)};
  ScenePrediction p;
  p.scene_id = scene.scene_id;
  std::vector<Vec2> traj;
  for (std::size_t t = 1; t <= scene.horizon.future_steps; ++t)
    traj.push_back(s.position() + dir * (s.speed * scene.horizon.dt * static_cast<double>(t)));
  p.endpoints = {traj.back()};
  p.trajectories = {std::move(traj)};
  p.masses = {1.0};
  return p;
}

// ---------------------------------------------------------------- prediction dump

inline nlohmann::json to_json(const ScenePrediction& p) {
  nlohmann::json endpoints = nlohmann::json::array(), trajectories = nlohmann::json::array();
  for (Vec2 e : p.endpoints) endpoints.push_back({e.x, e.y});
  for (const auto& tr : p.trajectories) {
    nlohmann::json pts = nlohmann::json::array();
    for (Vec2 q : tr) pts.push_back({q.x, q.y});
    trajectories.push_back(std::move(pts));
  }
  return {{"scene_id", p.scene_id}, {"endpoints", endpoints}, {"trajectories", trajectories}, {"masses", p.masses}};
}

inline void write_predictions(const std::filesystem::path& path, const std::vector<ScenePrediction>& preds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const ScenePrediction& p : preds) out << to_json(p).dump() << "\n";
  if (!out) throw IoError("short write on " + path.string());
}

inline std::vector<ScenePrediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<ScenePrediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ScenePrediction p;
      p.scene_id = j.at("scene_id").get<std::string>();
      for (const auto& e : j.at("endpoints")) p.endpoints.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
      for (const auto& tr : j.at("trajectories")) {
        std::vector<Vec2> pts;
        for (const auto& q : tr) pts.push_back({q.at(0).get<double>(), q.at(1).get<double>()});
        p.trajectories.push_back(std::move(pts));
      }
      p.masses = j.at("masses").get<std::vector<double>>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("/" + std::to_string(lineno - 1), std::string("prediction record: ") + e.what());
    }
  }
  return out;
}

}  // namespace gohome
