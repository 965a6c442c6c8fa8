// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Scene encoder: lanelet sequence encoding, two stacks of relation-typed
// graph convolutions around lane/agent attention and the target broadcast.
//
// All inputs are expressed in the target agent frame (origin at its last
// valid position, +x along its last heading).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gohome/error.hpp"
#include "gohome/geometry.hpp"
#include "gohome/map_core.hpp"
#include "gohome/nn/layers.hpp"
#include "gohome/nn/ops.hpp"
#include "gohome/scene.hpp"

namespace gohome {

inline constexpr double kPositionScale = 0.05;  // 1/m, keeps map coordinates O(1)
inline constexpr double kSpeedScale = 0.1;      // s/m
inline constexpr std::size_t kLaneInputWidth = 4;
inline constexpr std::size_t kTrackInputWidth = 9;

struct ModelConfig {
  std::size_t channels = 64;
  std::size_t lane_points = 8;
  std::size_t graph_layers = 4;
  std::size_t raster_channels = 8;
  double raster_length = 20.0;  // m
  double raster_width = 4.0;    // m
  double resolution = 0.5;      // m/pixel, shared by rasters and heatmap
  double output_range = 192.0;  // m
  double input_range = 128.0;   // m; 0 keeps every lanelet
  std::size_t top_k = 20;
  double sigma_px = 2.0;
  double curvature_clip = 0.5;
  double ranking_weight = 1e-2;
  std::size_t traj_hidden = 64;
  std::size_t history_steps = 20;
  std::size_t future_steps = 30;

  std::size_t raster_h() const { return static_cast<std::size_t>(std::llround(raster_length / resolution)); }
  std::size_t raster_w() const { return static_cast<std::size_t>(std::llround(raster_width / resolution)); }
  std::size_t grid_size() const { return static_cast<std::size_t>(std::llround(output_range / resolution)); }

  void validate() const {
    if (channels == 0) throw ConfigError("channels must be positive");
    if (lane_points < 2) throw ConfigError("lane_points must be at least 2");
    if (raster_channels == 0) throw ConfigError("raster_channels must be positive");
    if (!(resolution > 0.0)) throw ConfigError("resolution must be positive");
    if (!(output_range > 0.0)) throw ConfigError("output_range must be positive");
    if (input_range < 0.0) throw ConfigError("input_range must be non-negative");
    if (raster_h() == 0 || raster_w() == 0) throw ConfigError("raster smaller than one pixel");
    if (std::abs(static_cast<double>(grid_size()) * resolution - output_range) > 1e-9 * output_range)
      throw ConfigError("output_range must be a multiple of resolution");
    if (top_k == 0) throw ConfigError("top_k must be at least 1");
    if (!(sigma_px > 0.0)) throw ConfigError("sigma_px must be positive");
    if (history_steps == 0 || future_steps < 2) throw ConfigError("horizon too short");
  }
};

using EdgeLists = std::vector<std::vector<std::pair<std::size_t, std::size_t>>>;

/// Network inputs for one scene. Holds pointers into the scene's lanelets,
/// so the scene must outlive it.
struct SceneInputs {
  Pose2 frame;                                // target agent frame in scene coordinates
  std::vector<std::size_t> lane_index;        // kept lanelets (scene indices, ascending)
  std::vector<const map::Lanelet*> lanelets;  // same order
  EdgeLists edges;                            // per relation, in kept-lanelet rows
  nn::Tensor lane_input;                      // (L*P, 4)
  nn::Tensor track_input;                     // (N*T, 9), masked steps zero
  std::vector<double> track_mask;             // (N*T)
  std::size_t steps = 0;
  std::size_t target_row = 0;

  std::size_t num_lanes() const { return lanelets.size(); }
  std::size_t num_agents() const { return track_mask.size() / steps; }
};

/// Appends the T rows of one track: offsets in the agent's own last pose,
/// speed, relative heading, then that pose in the target frame.
inline void append_track_rows(const AgentTrack& track, const Pose2& frame, std::vector<double>& rows,
                              std::vector<double>& mask) {
  const Pose2 own = track.last_pose();
  const Vec2 own_in_target = frame.to_local(own.origin);
  const double own_yaw = own.yaw - frame.yaw;
  for (std::size_t t = 0; t < track.steps(); ++t) {
    if (!track.valid[t]) {
      rows.insert(rows.end(), kTrackInputWidth, 0.0);
      mask.push_back(0.0);
      continue;
    }
    const TrackState& s = track.states[t];
    const Vec2 rel = own.to_local(s.position());
    const double dyaw = s.yaw - own.yaw;
    rows.insert(rows.end(), {rel.x * kPositionScale, rel.y * kPositionScale, s.speed * kSpeedScale, std::cos(dyaw),
                             std::sin(dyaw), own_in_target.x * kPositionScale, own_in_target.y * kPositionScale,
                             std::cos(own_yaw), std::sin(own_yaw)});
    mask.push_back(1.0);
  }
}

/// Builds the encoder inputs in the target frame, dropping lanelets with no
/// sampled point inside the input-range square.
inline SceneInputs prepare_inputs(const Scene& scene, const ModelConfig& cfg) {
  if (scene.lane_graph.size() == 0) throw EncodeError("scene " + scene.scene_id + ": empty lane graph");
  if (scene.target_index >= scene.agents.size())
    throw InputError("scene " + scene.scene_id + ": target_index out of range");
  SceneInputs in;
  in.frame = scene.target().last_pose();
  const std::size_t p = cfg.lane_points;
  const double half = 0.5 * cfg.input_range;

  std::vector<double> lane_rows;
  std::vector<std::int64_t> remap(scene.lane_graph.size(), -1);
  for (std::size_t li = 0; li < scene.lane_graph.size(); ++li) {
    const map::Lanelet& l = scene.lane_graph.lanelets[li];
    const std::vector<Vec2> pts = map::sample_uniform(l, 0.0, l.length(), p);
    std::vector<Vec2> local(p);
    bool keep = cfg.input_range == 0.0;
    for (std::size_t k = 0; k < p; ++k) {
      local[k] = in.frame.to_local(pts[k]);
      keep = keep || (std::abs(local[k].x) <= half && std::abs(local[k].y) <= half);
    }
    if (!keep) continue;
    remap[li] = static_cast<std::int64_t>(in.lanelets.size());
    in.lane_index.push_back(li);
    in.lanelets.push_back(&l);
    for (std::size_t k = 0; k < p; ++k) {
      const double s = l.length() * static_cast<double>(k) / static_cast<double>(p - 1);
      const double heading = l.heading_at(s) - in.frame.yaw;
      lane_rows.insert(lane_rows.end(), {local[k].x * kPositionScale, local[k].y * kPositionScale, std::cos(heading),
                                         std::sin(heading)});
    }
  }
  if (in.lanelets.empty()) throw EncodeError("scene " + scene.scene_id + ": no lanelet within the input range");
  in.lane_input = nn::Tensor::from({in.lanelets.size() * p, kLaneInputWidth}, std::move(lane_rows));

  in.edges.resize(map::kNumRelations);
  for (map::Relation r : map::kRelations)
    for (auto [i, j] : scene.lane_graph.edges(r))
      if (remap[i] >= 0 && remap[j] >= 0)
        in.edges[static_cast<std::size_t>(r)].emplace_back(remap[i], remap[j]);

  in.steps = scene.target().steps();
  std::vector<double> track_rows;
  for (const AgentTrack& a : scene.agents) {
    if (a.steps() != in.steps) throw InputError("scene " + scene.scene_id + ": agent tracks differ in length");
    append_track_rows(a, in.frame, track_rows, in.track_mask);
  }
  in.track_input = nn::Tensor::from({scene.agents.size() * in.steps, kTrackInputWidth}, std::move(track_rows));
  in.target_row = scene.target_index;
  return in;
}

struct SceneFeatures {
  nn::Tensor lane_features;   // (L, C) after GraphEncoder1
  nn::Tensor agent_features;  // (N, C) after Agents2Agents
  nn::Tensor graph_encoding;  // (L, C) after GraphEncoder2
  std::size_t target_index = 0;
};

class SceneEncoder {
 public:
  SceneEncoder() = default;
  SceneEncoder(nn::ParameterStore& store, const ModelConfig& cfg, nn::Rng& rng) : channels_(cfg.channels) {
    const std::size_t c = cfg.channels;
    lane_encoder = nn::SequenceEncoder(store, "encoder.lane", kLaneInputWidth, c, rng);
    for (std::size_t i = 0; i < cfg.graph_layers; ++i)
      graph1.emplace_back(store, "encoder.graph1." + std::to_string(i), c, rng);
    traj_encoder = nn::SequenceEncoder(store, "encoder.traj", kTrackInputWidth, c, rng);
    lanes_to_agents = nn::AttentionBlock(store, "encoder.lanes2agents", c, rng);
    agents_to_agents = nn::AttentionBlock(store, "encoder.agents2agents", c, rng);
    ego = nn::Linear(store, "encoder.ego", 2 * c, c, rng);
    for (std::size_t i = 0; i < cfg.graph_layers; ++i)
      graph2.emplace_back(store, "encoder.graph2." + std::to_string(i), c, rng);
  }

  std::size_t channels() const { return channels_; }

  /// (N, C) final hidden states of the trajectory encoder.
  nn::Tensor encode_tracks(const nn::Tensor& rows, const std::vector<double>& mask, std::size_t steps) const {
    return traj_encoder(rows, mask.size() / steps, steps, mask);
  }

  SceneFeatures operator()(const SceneInputs& in) const {
    const std::size_t l = in.num_lanes();
    nn::Tensor lanes = lane_encoder(in.lane_input, l, in.lane_input.rows() / l);
    for (const auto& layer : graph1) lanes = layer(lanes, in.edges);

    nn::Tensor agents = encode_tracks(in.track_input, in.track_mask, in.steps);
    agents = lanes_to_agents(agents, lanes);
    agents = agents_to_agents(agents, agents);

    const nn::Tensor target = nn::gather_rows(agents, {static_cast<std::int64_t>(in.target_row)});
    nn::Tensor g = nn::relu(ego(nn::concat_cols({lanes, nn::broadcast_rows(target, l)})));
    for (const auto& layer : graph2) g = layer(g, in.edges);
    return {lanes, agents, g, in.target_row};
  }

  nn::SequenceEncoder lane_encoder;
  std::vector<nn::GraphConvLayer> graph1;
  nn::SequenceEncoder traj_encoder;
  nn::AttentionBlock lanes_to_agents;
  nn::AttentionBlock agents_to_agents;
  nn::Linear ego;
  std::vector<nn::GraphConvLayer> graph2;

 private:
  std::size_t channels_ = 0;
};

/// Encodes a single track in `frame` (default: the track's own last pose).
/// Leading masked steps have no effect on the result.
inline nn::Tensor encode_track(const AgentTrack& track, const SceneEncoder& encoder,
                               const std::optional<Pose2>& frame = std::nullopt) {
  if (!track.any_valid()) throw InputError("agent " + std::to_string(track.id) + " has no valid timestep");
  std::vector<double> rows, mask;
  append_track_rows(track, frame.value_or(track.last_pose()), rows, mask);
  const nn::Tensor x = nn::Tensor::from({track.steps(), kTrackInputWidth}, std::move(rows));
  return nn::reshape(encoder.encode_tracks(x, mask, track.steps()), {encoder.channels()});
}

}  // namespace gohome
