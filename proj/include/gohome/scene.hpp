// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "gohome/error.hpp"
#include "gohome/geometry.hpp"
#include "gohome/map_core.hpp"

namespace gohome {

struct TrackState {
  double x = 0.0;
  double y = 0.0;
  double speed = 0.0;
  double yaw = 0.0;

  Vec2 position() const { return {x, y}; }
  bool operator==(const TrackState&) const = default;
};

/// Observed history of one agent; `valid[t]` is false for missing steps.
struct AgentTrack {
  std::int64_t id = 0;
  std::vector<TrackState> states;
  std::vector<bool> valid;

  std::size_t steps() const { return states.size(); }
  bool any_valid() const {
    for (bool v : valid)
      if (v) return true;
    return false;
  }
  /// Index of the last valid step; throws InputError when none is valid.
  std::size_t last_valid() const {
    for (std::size_t t = states.size(); t-- > 0;)
      if (valid[t]) return t;
    throw InputError("agent " + std::to_string(id) + " has no valid timestep");
  }
  Pose2 last_pose() const {
    const TrackState& s = states[last_valid()];
    return {s.position(), s.yaw};
  }
};

struct Horizon {
  std::size_t history_steps = 20;
  std::size_t future_steps = 30;
  double dt = 0.1;
  bool operator==(const Horizon&) const = default;
};

struct Scene {
  std::string scene_id;
  map::LaneGraph lane_graph;
  std::vector<AgentTrack> agents;
  std::size_t target_index = 0;
  std::vector<Vec2> gt_future;
  Horizon horizon;

  const AgentTrack& target() const { return agents.at(target_index); }
  Vec2 gt_endpoint() const { return gt_future.back(); }
};

/// Checks the scene invariants; throws InputError naming the violation.
inline void validate_scene(const Scene& s) {
  if (s.agents.empty()) throw InputError("scene " + s.scene_id + ": no agents");
  if (s.target_index >= s.agents.size())
    throw InputError("scene " + s.scene_id + ": target_index " + std::to_string(s.target_index) + " out of range");
  if (s.gt_future.size() != s.horizon.future_steps)
    throw InputError("scene " + s.scene_id + ": gt_future has " + std::to_string(s.gt_future.size()) +
                     " points, horizon says " + std::to_string(s.horizon.future_steps));
  for (const AgentTrack& a : s.agents) {
    if (a.states.size() != s.horizon.history_steps || a.valid.size() != a.states.size())
      throw InputError("scene " + s.scene_id + ": agent " + std::to_string(a.id) + " track length differs from history");
    if (!a.any_valid()) throw InputError("scene " + s.scene_id + ": agent " + std::to_string(a.id) + " has no valid step");
    for (std::size_t t = 0; t < a.states.size(); ++t)
      if (a.valid[t] && !(a.states[t].yaw > -std::numbers::pi && a.states[t].yaw <= std::numbers::pi))
        throw InputError("scene " + s.scene_id + ": agent " + std::to_string(a.id) + " yaw outside (-pi, pi]");
  }
  map::validate(s.lane_graph);
}

}  // namespace gohome
