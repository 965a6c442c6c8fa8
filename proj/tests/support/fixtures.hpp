// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Shared test helpers: hand-built scenes, a tiny model configuration and a
// central finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "gohome/map_core.hpp"
#include "gohome/nn/layers.hpp"
#include "gohome/nn/tensor.hpp"
#include "gohome/scene.hpp"
#include "gohome/scene_encoder.hpp"

namespace gohome::testing {

inline std::vector<Vec2> straight(Vec2 a, Vec2 b, std::size_t points) {
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < points; ++i) out.push_back(a + (b - a) * (static_cast<double>(i) / (points - 1)));
  return out;
}

inline std::vector<Vec2> arc(Vec2 center, double radius, double a0, double a1, std::size_t points) {
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < points; ++i) {
    const double a = a0 + (a1 - a0) * static_cast<double>(i) / static_cast<double>(points - 1);
    out.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
  }
  return out;
}

/// A track driving along +x at `speed` through `end` at the last step.
inline AgentTrack straight_track(std::int64_t id, Vec2 end, double yaw, double speed, std::size_t steps, double dt) {
  AgentTrack a;
  a.id = id;
  const Vec2 dir{std::cos(yaw), std::sin(yaw)};
  for (std::size_t t = 0; t < steps; ++t) {
    const double back = static_cast<double>(steps - 1 - t) * dt * speed;
    const Vec2 p = end - dir * back;
    a.states.push_back({p.x, p.y, speed, yaw});
    a.valid.push_back(true);
  }
  return a;
}

/// Three lanelets: 0 -> 1 chained along +x, 2 to the left of 1. Two agents.
/// History `hist` steps, future `fut` steps at 0.1 s.
inline Scene tiny_scene(std::size_t hist = 6, std::size_t fut = 5) {
  Scene s;
  s.scene_id = "tiny";
  s.horizon = {hist, fut, 0.1};
  auto& g = s.lane_graph;
  g.lanelets.emplace_back(0, straight({-6.0, 0.0}, {0.0, 0.0}, 4));
  g.lanelets.emplace_back(1, straight({0.0, 0.0}, {6.3, 0.2}, 5));
  g.lanelets.emplace_back(2, straight({0.0, 4.0}, {6.1, 4.1}, 3));
  g.connect(0, 1, map::Relation::successor);
  g.connect(1, 2, map::Relation::left);
  g.canonicalize();
  s.agents.push_back(straight_track(7, {-0.4, 0.1}, 0.03, 5.0, hist, 0.1));
  s.agents.push_back(straight_track(9, {-2.2, 4.3}, -0.02, 3.5, hist, 0.1));
  s.agents[1].valid[0] = false;
  s.target_index = 0;
  for (std::size_t t = 1; t <= fut; ++t) s.gt_future.push_back({-0.4 + 0.61 * static_cast<double>(t), 0.13});
  return s;
}

/// C = 8 on a 32 x 32 grid at 0.5 m/pixel; rasters 4 m x 2 m.
inline ModelConfig tiny_config(std::size_t hist = 6, std::size_t fut = 5) {
  ModelConfig c;
  c.channels = 8;
  c.lane_points = 4;
  c.graph_layers = 4;
  c.raster_length = 4.0;
  c.raster_width = 2.0;
  c.resolution = 0.5;
  c.output_range = 16.0;
  c.input_range = 0.0;
  c.top_k = 20;
  c.traj_hidden = 8;
  c.history_steps = hist;
  c.future_steps = fut;
  return c;
}

struct GradCheckResult {
  double max_relative = 0.0;  // worst per-tensor relative error
  std::string worst;
  double joint_relative = 0.0;  // relative error of all checked entries as one vector
};

/// Compares reverse-mode gradients of `loss()` with central differences for
/// each tensor in `params`. Per tensor, the error is ||g - g_fd|| divided by
/// max(||g||, ||g_fd||, floor), over at most `max_entries` entries picked
/// with a fixed stride. `joint_relative` treats every checked entry of every
/// tensor as one gradient vector.
inline GradCheckResult grad_check(const std::vector<std::pair<std::string, nn::Tensor>>& params,
                                  const std::function<nn::Tensor()>& loss, double step = 1e-6,
                                  std::size_t max_entries = 48, double floor = 1e-8) {
  for (const auto& [name, p] : params) {
    nn::Tensor t = p;
    t.zero_grad();
  }
  nn::backward(loss());
  GradCheckResult res;
  double all_diff2 = 0.0, all_a2 = 0.0, all_f2 = 0.0;
  for (const auto& [name, p] : params) {
    nn::Tensor t = p;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_values();
    const std::size_t n = values.size();
    const std::size_t stride = std::max<std::size_t>(1, n / max_entries);
    double diff2 = 0.0, a2 = 0.0, f2 = 0.0;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = values[i];
      double plus = 0.0, minus = 0.0;
      {
        nn::NoGradGuard guard;
        values[i] = orig + step;
        plus = loss().item();
        values[i] = orig - step;
        minus = loss().item();
      }
      values[i] = orig;
      const double fd = (plus - minus) / (2.0 * step);
      diff2 += (fd - analytic[i]) * (fd - analytic[i]);
      a2 += analytic[i] * analytic[i];
      f2 += fd * fd;
    }
    all_diff2 += diff2;
    all_a2 += a2;
    all_f2 += f2;
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(f2), floor});
    if (rel > res.max_relative) {
      res.max_relative = rel;
      res.worst = name;
    }
  }
  res.joint_relative = std::sqrt(all_diff2) / std::max({std::sqrt(all_a2), std::sqrt(all_f2), floor});
  return res;
}

/// Random tensor with values in [-1, 1).
inline nn::Tensor random_tensor(nn::Shape shape, nn::Rng& rng, bool requires_grad = true) {
  std::vector<double> v(nn::numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return nn::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Sum of out ⊙ fixed random weights, so every output entry gets a distinct
/// upstream gradient.
inline nn::Tensor weighted_sum(const nn::Tensor& out, std::uint64_t seed = 99) {
  nn::Rng rng(seed);
  std::vector<double> w(out.size());
  for (double& x : w) x = rng.uniform(-1.0, 1.0);
  return nn::sum(nn::mul(out, nn::Tensor::from(out.shape(), std::move(w))));
}

}  // namespace gohome::testing
