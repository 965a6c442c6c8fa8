// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Seeded synthetic scenes: a multi-lane road (straight, curved, with an exit
// fork or an on-ramp merge), lanes in both directions, a target vehicle that
// follows a lane route with constant acceleration, smooth lateral noise and
// optional lane change, and surrounding traffic.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gohome/error.hpp"
#include "gohome/geometry.hpp"
#include "gohome/map_core.hpp"
#include "gohome/nn/layers.hpp"
#include "gohome/scene.hpp"

namespace gohome::gen {

enum class Template : std::uint8_t { straight = 0, curve = 1, fork = 2, merge = 3 };

struct GeneratorConfig {
  std::uint64_t seed = 1;
  std::size_t scene_count = 100;
  /// straight / curve / fork / merge
  std::array<double, 4> template_mix = {0.25, 0.25, 0.3, 0.2};
  double speed_min = 4.0;   // m/s
  double speed_max = 16.0;  // m/s
  double accel_max = 1.5;   // m/s^2
  double lateral_noise = 0.2;  // m
  double lane_change_prob = 0.1;
  double lane_width = map::kDefaultLaneWidth;
  double road_length = 240.0;
  double lanelet_length = 10.0;
  std::size_t min_forward_lanes = 2, max_forward_lanes = 3;
  std::size_t min_backward_lanes = 1, max_backward_lanes = 3;
  std::size_t min_other_agents = 3, max_other_agents = 8;
  double masked_history_prob = 0.2;
  Horizon horizon;
  std::string id_prefix = "scene";

  void validate() const {
    double sum = 0.0;
    for (double f : template_mix) {
      if (f < 0.0) throw ConfigError("template fractions must be non-negative");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("template fractions must sum to 1");
    if (lateral_noise < 0.0) throw ConfigError("lateral noise sigma must be non-negative");
    if (!(speed_min > 0.0 && speed_max > speed_min)) throw ConfigError("speed range must satisfy 0 < min < max");
    if (accel_max < 0.0) throw ConfigError("accel_max must be non-negative");
    if (lane_change_prob < 0.0 || lane_change_prob > 1.0) throw ConfigError("lane change probability outside [0, 1]");
    if (min_forward_lanes == 0 || max_forward_lanes < min_forward_lanes) throw ConfigError("bad forward lane range");
    if (max_backward_lanes < min_backward_lanes) throw ConfigError("bad backward lane range");
    if (max_other_agents < min_other_agents) throw ConfigError("bad agent count range");
    if (horizon.history_steps == 0 || horizon.future_steps == 0 || !(horizon.dt > 0.0))
      throw ConfigError("horizon must have positive steps and dt");
  }
};

namespace detail {

using Polyline = std::vector<Vec2>;

inline Polyline offset_polyline(const Polyline& axis, double offset) {
  Polyline out(axis.size());
  for (std::size_t i = 0; i < axis.size(); ++i) {
    const Vec2 a = axis[i == 0 ? 0 : i - 1];
    const Vec2 b = axis[i + 1 == axis.size() ? i : i + 1];
    const Vec2 t = (b - a) * (1.0 / (b - a).norm());
    out[i] = axis[i] + t.left_normal() * offset;
  }
  return out;
}

/// Points every `step` metres along straight/arc pieces starting at `start`
/// with heading `yaw`. Each piece is (length, curvature).
inline Polyline trace(Vec2 start, double yaw, const std::vector<std::pair<double, double>>& pieces, double step = 1.0) {
  Polyline pts{start};
  Vec2 p = start;
  for (auto [len, kappa] : pieces) {
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / step)));
    const double ds = len / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (kappa == 0.0) {
        p = p + Vec2{std::cos(yaw), std::sin(yaw)} * ds;
      } else {
        const double dyaw = kappa * ds;
        const double r = 1.0 / kappa;
        p = p + Vec2{r * (std::sin(yaw + dyaw) - std::sin(yaw)), -r * (std::cos(yaw + dyaw) - std::cos(yaw))};
        yaw += dyaw;
      }
      pts.push_back(p);
    }
  }
  return pts;
}

/// Portion of `line` between two stations measured along `axis`; `line` has
/// one point per axis point (an offset curve), so stations map through the
/// fractional point index.
inline Polyline cut(const Polyline& line, const Polyline& axis, double s0, double s1) {
  std::vector<double> cum(axis.size(), 0.0);
  for (std::size_t i = 1; i < axis.size(); ++i) cum[i] = cum[i - 1] + distance(axis[i - 1], axis[i]);
  auto at = [&](double s) {
    const std::size_t k = std::min<std::size_t>(
        axis.size() - 2, static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), s) - cum.begin()) - 1);
    const double t = std::clamp((s - cum[k]) / (cum[k + 1] - cum[k]), 0.0, 1.0);
    return line[k] + (line[k + 1] - line[k]) * t;
  };
  Polyline out{at(s0)};
  for (std::size_t i = 0; i < line.size(); ++i)
    if (cum[i] > s0 + 1e-6 && cum[i] < s1 - 1e-6) out.push_back(line[i]);
  out.push_back(at(s1));
  return out;
}

inline double polyline_length(const Polyline& line) {
  double s = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) s += distance(line[i - 1], line[i]);
  return s;
}

struct RawMap {
  map::LaneGraph graph;  // unresampled lanes
  /// Candidate target routes: sequences of raw lanelet indices.
  std::vector<std::vector<std::size_t>> routes;
  /// Routes through a branching point (fork or merge) preferred for the target.
  std::vector<std::vector<std::size_t>> branch_routes;
  /// Station on the route where the branch happens, per branch route.
  std::vector<double> branch_stations;
  /// For each raw lanelet index: the lane (polyline per section) it belongs to, for lane changes.
  std::vector<std::optional<std::size_t>> left_of, right_of;
};

inline Polyline concat_route(const map::LaneGraph& g, const std::vector<std::size_t>& route) {
  Polyline pts;
  for (std::size_t idx : route)
    for (Vec2 p : g.lanelets[idx].centerline())
      if (pts.empty() || distance(pts.back(), p) > 1e-6) pts.push_back(p);
  return pts;
}

}  // namespace detail

/// Builds the unresampled road network for one template.
inline detail::RawMap build_road(Template kind, const GeneratorConfig& cfg, nn::Rng& rng) {
  using detail::Polyline;
  const double len = cfg.road_length;
  const double lw = cfg.lane_width;
  const std::size_t nf = cfg.min_forward_lanes + rng.index(cfg.max_forward_lanes - cfg.min_forward_lanes + 1);
  const std::size_t nb = cfg.min_backward_lanes + rng.index(cfg.max_backward_lanes - cfg.min_backward_lanes + 1);

  Polyline axis;
  if (kind == Template::curve) {
    const double lead = rng.uniform(50.0, 90.0);
    const double radius = rng.uniform(40.0, 110.0);
    const double angle = rng.uniform(0.5, 1.6);
    const double arc = std::min(radius * angle, len - lead - 10.0);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    axis = detail::trace({0, 0}, 0.0, {{lead, 0.0}, {arc, sign / radius}, {len - lead - arc, 0.0}});
  } else {
    axis = detail::trace({0, 0}, 0.0, {{len, 0.0}});
  }

  // Sections are split at the branch station so parallel lanes share breakpoints.
  const double axis_len = detail::polyline_length(axis);
  const double branch_station = rng.uniform(0.45, 0.6) * axis_len;
  std::vector<double> stations{0.0};
  if (kind == Template::fork || kind == Template::merge) stations.push_back(branch_station);
  stations.push_back(axis_len);
  const std::size_t nsec = stations.size() - 1;

  detail::RawMap raw;
  auto& g = raw.graph;
  // forward[k][sec], backward[k][sec] -> raw lanelet index
  std::vector<std::vector<std::size_t>> forward(nf), backward(nb);
  for (std::size_t k = 0; k < nf; ++k) {
    const Polyline lane = detail::offset_polyline(axis, -(static_cast<double>(k) + 0.5) * lw);
    for (std::size_t s = 0; s < nsec; ++s) {
      forward[k].push_back(g.lanelets.size());
      g.lanelets.emplace_back(static_cast<std::int64_t>(g.lanelets.size()), detail::cut(lane, axis, stations[s], stations[s + 1]), lw);
    }
  }
  for (std::size_t k = 0; k < nb; ++k) {
    Polyline lane = detail::offset_polyline(axis, (static_cast<double>(k) + 0.5) * lw);
    for (std::size_t s = 0; s < nsec; ++s) {
      Polyline piece = detail::cut(lane, axis, stations[s], stations[s + 1]);
      std::reverse(piece.begin(), piece.end());
      backward[k].push_back(g.lanelets.size());
      g.lanelets.emplace_back(static_cast<std::int64_t>(g.lanelets.size()), std::move(piece), lw);
    }
  }
  for (std::size_t k = 0; k < nf; ++k)
    for (std::size_t s = 0; s + 1 < nsec; ++s) g.connect(forward[k][s], forward[k][s + 1], map::Relation::successor);
  for (std::size_t k = 0; k < nb; ++k)
    for (std::size_t s = 0; s + 1 < nsec; ++s) g.connect(backward[k][s + 1], backward[k][s], map::Relation::successor);
  raw.left_of.assign(g.size(), std::nullopt);
  raw.right_of.assign(g.size(), std::nullopt);
  for (std::size_t s = 0; s < nsec; ++s) {
    // Forward lanes are numbered outward to the right of the axis; backward
    // lanes outward to the left, so in both directions lane k-1 is on the left.
    for (std::size_t k = 1; k < nf; ++k) {
      g.connect(forward[k][s], forward[k - 1][s], map::Relation::left);
      raw.left_of[forward[k][s]] = forward[k - 1][s];
      raw.right_of[forward[k - 1][s]] = forward[k][s];
    }
    for (std::size_t k = 1; k < nb; ++k) g.connect(backward[k][s], backward[k - 1][s], map::Relation::left);
  }

  for (std::size_t k = 0; k < nf; ++k) raw.routes.push_back(forward[k]);
  for (std::size_t k = 0; k < nb; ++k) raw.routes.emplace_back(backward[k].rbegin(), backward[k].rend());

  const std::size_t outer = nf - 1;
  if (kind == Template::fork) {
    const Polyline outer_lane = detail::concat_route(g, forward[outer]);
    const Vec2 start = g.lanelets[forward[outer][0]].centerline().back();
    const double radius = rng.uniform(30.0, 60.0);
    const double angle = rng.uniform(0.6, 1.1);
    const Polyline exit = detail::trace(start, 0.0, {{8.0, 0.0}, {radius * angle, -1.0 / radius}, {30.0, 0.0}});
    const std::size_t exit_idx = g.lanelets.size();
    g.lanelets.emplace_back(static_cast<std::int64_t>(exit_idx), exit, lw);
    g.connect(forward[outer][0], exit_idx, map::Relation::successor);
    raw.left_of.push_back(std::nullopt);
    raw.right_of.push_back(std::nullopt);
    raw.branch_routes.push_back(forward[outer]);
    raw.branch_routes.push_back({forward[outer][0], exit_idx});
    raw.branch_stations = {branch_station, branch_station};
  } else if (kind == Template::merge) {
    const Vec2 end = g.lanelets[forward[outer][1]].centerline().front();
    const double radius = rng.uniform(30.0, 60.0);
    const double angle = rng.uniform(0.5, 0.9);
    // Traced backwards from the merge point, then reversed.
    Polyline ramp = detail::trace(end, std::numbers::pi, {{8.0, 0.0}, {radius * angle, 1.0 / radius}, {60.0, 0.0}});
    std::reverse(ramp.begin(), ramp.end());
    const std::size_t ramp_idx = g.lanelets.size();
    const double ramp_len = detail::polyline_length(ramp);
    g.lanelets.emplace_back(static_cast<std::int64_t>(ramp_idx), std::move(ramp), lw);
    g.connect(ramp_idx, forward[outer][1], map::Relation::successor);
    raw.left_of.push_back(std::nullopt);
    raw.right_of.push_back(std::nullopt);
    raw.branch_routes.push_back({ramp_idx, forward[outer][1]});
    raw.branch_stations = {ramp_len};
  }
  g.canonicalize();
  return raw;
}

namespace detail {

struct Motion {
  double s0 = 0.0;     // route station at t = 0
  double v0 = 0.0;     // speed at t = 0
  double accel = 0.0;  // constant longitudinal acceleration
  double noise_amp = 0.0, noise_omega = 1.0, noise_phase = 0.0;
  double lc_offset = 0.0, lc_start = 0.0, lc_duration = 1.0;

  double station(double t) const { return s0 + v0 * t + 0.5 * accel * t * t; }
  double lateral(double t) const {
    double d = noise_amp * std::sin(noise_omega * t + noise_phase);
    if (lc_offset != 0.0) {
      const double u = std::clamp((t - lc_start) / lc_duration, 0.0, 1.0);
      d += lc_offset * u * u * (3.0 - 2.0 * u);
    }
    return d;
  }
};

inline Vec2 motion_point(const map::Lanelet& route, const Motion& m, double t) {
  return route.point_at(m.station(t), m.lateral(t));
}

inline TrackState motion_state(const map::Lanelet& route, const Motion& m, double t) {
  constexpr double h = 1e-3;
  const Vec2 p = motion_point(route, m, t);
  const Vec2 vel = (motion_point(route, m, t + h) - motion_point(route, m, t - h)) * (0.5 / h);
  return {p.x, p.y, vel.norm(), wrap_angle(std::atan2(vel.y, vel.x))};
}

}  // namespace detail

/// Generates one scene; `index` only affects the scene id.
inline Scene generate_scene(const GeneratorConfig& cfg, nn::Rng& rng, std::size_t index) {
  const Horizon& hz = cfg.horizon;
  const double t_hist = static_cast<double>(hz.history_steps - 1) * hz.dt;
  const double t_fut = static_cast<double>(hz.future_steps) * hz.dt;

  double pick = rng.uniform();
  Template kind = Template::merge;
  for (std::size_t i = 0; i < 4; ++i) {
    if (pick < cfg.template_mix[i]) {
      kind = static_cast<Template>(i);
      break;
    }
    pick -= cfg.template_mix[i];
  }
  detail::RawMap raw = build_road(kind, cfg, rng);
  const map::LaneGraph& rg = raw.graph;

  // Target route and motion.
  std::vector<std::size_t> route;
  std::optional<double> branch_station;
  const bool use_branch = !raw.branch_routes.empty() && rng.uniform() < 0.75;
  if (use_branch) {
    const std::size_t r = rng.index(raw.branch_routes.size());
    route = raw.branch_routes[r];
    branch_station = raw.branch_stations[r];
  } else {
    // Forward routes only: the first entries of `routes` are the forward lanes.
    route = raw.routes[rng.index(std::max<std::size_t>(1, cfg.min_forward_lanes))];
  }
  const map::Lanelet route_line(0, detail::concat_route(rg, route), cfg.lane_width);
  const double route_len = route_line.length();

  detail::Motion m;
  const double vmax_future = cfg.speed_max - 1.5;
  m.v0 = rng.uniform(cfg.speed_min, std::min(cfg.speed_max - 2.0, vmax_future));
  m.accel = rng.uniform(-cfg.accel_max, cfg.accel_max);
  // Keep speed within (0.5, vmax_future] over the whole window.
  m.accel = std::min(m.accel, (vmax_future - m.v0) / t_fut);
  m.accel = std::max(m.accel, (0.5 - m.v0) / t_fut);
  m.accel = std::min(m.accel, (m.v0 - 0.5) / t_hist);
  m.accel = std::max(m.accel, (m.v0 - vmax_future) / t_hist);
  const double back = m.v0 * t_hist - 0.5 * m.accel * t_hist * t_hist;
  const double ahead = m.v0 * t_fut + 0.5 * m.accel * t_fut * t_fut;
  double lo = back + 2.0, hi = route_len - ahead - 2.0;
  if (branch_station) {
    // Put the branching point inside the future window when possible.
    lo = std::max(lo, *branch_station - 0.9 * ahead);
    hi = std::min(hi, *branch_station - 3.0);
    if (hi < lo) {
      lo = back + 2.0;
      hi = route_len - ahead - 2.0;
    }
  }
  if (hi < lo) hi = lo;
  m.s0 = rng.uniform(lo, hi);
  m.noise_amp = cfg.lateral_noise * rng.uniform(0.5, 1.0);
  m.noise_omega = 2.0 * std::numbers::pi / rng.uniform(4.0, 8.0);
  m.noise_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  if (!use_branch && rng.uniform() < cfg.lane_change_prob) {
    // Change towards an existing neighbour on the same section chain.
    const std::size_t first = route.front();
    std::vector<double> sides;
    if (raw.left_of[first]) sides.push_back(cfg.lane_width);
    if (raw.right_of[first]) sides.push_back(-cfg.lane_width);
    if (!sides.empty()) {
      m.lc_offset = sides[rng.index(sides.size())];
      m.lc_duration = rng.uniform(2.0, 3.5);
      m.lc_start = rng.uniform(-1.0, t_fut - m.lc_duration);
    }
  }

  Scene scene;
  scene.horizon = hz;
  scene.scene_id = cfg.id_prefix + "_" + std::to_string(cfg.seed) + "_" + std::to_string(index);

  AgentTrack target;
  target.id = 0;
  for (std::size_t k = 0; k < hz.history_steps; ++k) {
    const double t = -t_hist + static_cast<double>(k) * hz.dt;
    target.states.push_back(detail::motion_state(route_line, m, t));
    target.valid.push_back(true);
  }
  for (std::size_t k = 1; k <= hz.future_steps; ++k)
    scene.gt_future.push_back(detail::motion_point(route_line, m, static_cast<double>(k) * hz.dt));

  // Surrounding traffic on random routes, constant speed, lane following.
  std::vector<AgentTrack> others;
  const std::size_t n_other =
      cfg.min_other_agents + rng.index(cfg.max_other_agents - cfg.min_other_agents + 1);
  for (std::size_t a = 0; a < n_other; ++a) {
    const auto& r = raw.routes[rng.index(raw.routes.size())];
    const map::Lanelet line(0, detail::concat_route(rg, r), cfg.lane_width);
    detail::Motion om;
    om.v0 = rng.uniform(2.0, cfg.speed_max - 2.0);
    om.s0 = rng.uniform(om.v0 * t_hist + 1.0, std::max(om.v0 * t_hist + 1.0, line.length() - 1.0));
    om.noise_amp = cfg.lateral_noise * rng.uniform(0.0, 1.0);
    om.noise_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    AgentTrack track;
    track.id = static_cast<std::int64_t>(a + 1);
    const std::size_t masked =
        rng.uniform() < cfg.masked_history_prob ? 1 + rng.index(hz.history_steps / 2) : 0;
    for (std::size_t k = 0; k < hz.history_steps; ++k) {
      const double t = -t_hist + static_cast<double>(k) * hz.dt;
      if (k < masked) {
        track.states.push_back({});
        track.valid.push_back(false);
      } else {
        track.states.push_back(detail::motion_state(line, om, t));
        track.valid.push_back(true);
      }
    }
    others.push_back(std::move(track));
  }

  // Target at a random position in the agent list.
  const std::size_t target_slot = rng.index(others.size() + 1);
  others.insert(others.begin() + static_cast<std::ptrdiff_t>(target_slot), std::move(target));
  scene.agents = std::move(others);
  scene.target_index = target_slot;

  scene.lane_graph = map::resample_lanelets(raw.graph, cfg.lanelet_length);

  // Random rigid placement of the whole scene.
  const Pose2 place{{rng.uniform(-500.0, 500.0), rng.uniform(-500.0, 500.0)},
                    rng.uniform(-std::numbers::pi, std::numbers::pi)};
  map::LaneGraph placed;
  for (const map::Lanelet& l : scene.lane_graph.lanelets) {
    std::vector<Vec2> pts;
    for (Vec2 p : l.centerline()) pts.push_back(place.to_parent(p));
    placed.lanelets.emplace_back(l.id(), std::move(pts), l.width());
  }
  placed.relations = scene.lane_graph.relations;
  scene.lane_graph = std::move(placed);
  for (AgentTrack& a : scene.agents)
    for (std::size_t k = 0; k < a.states.size(); ++k) {
      if (!a.valid[k]) continue;
      TrackState& st = a.states[k];
      const Vec2 p = place.to_parent(st.position());
      st.x = p.x;
      st.y = p.y;
      st.yaw = wrap_angle(st.yaw + place.yaw);
    }
  for (Vec2& p : scene.gt_future) p = place.to_parent(p);
  return scene;
}

inline std::vector<Scene> generate(const GeneratorConfig& cfg) {
  cfg.validate();
  nn::Rng rng(cfg.seed);
  std::vector<Scene> scenes;
  scenes.reserve(cfg.scene_count);
  for (std::size_t i = 0; i < cfg.scene_count; ++i) {
    // Independent stream per scene so scene i does not depend on earlier draws.
    nn::Rng scene_rng(rng.next());
    scenes.push_back(generate_scene(cfg, scene_rng, i));
  }
  return scenes;
}

}  // namespace gohome::gen
