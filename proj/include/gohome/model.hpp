// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Full model: encoder, heatmap decoder and trajectory decoder sharing one
// parameter store, plus the per-scene forward pass, loss and prediction.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gohome/error.hpp"
#include "gohome/heatmap_decoder.hpp"
#include "gohome/map_core.hpp"
#include "gohome/nn/checkpoint.hpp"
#include "gohome/nn/flops.hpp"
#include "gohome/nn/layers.hpp"
#include "gohome/predictor.hpp"
#include "gohome/scene.hpp"
#include "gohome/scene_encoder.hpp"

namespace gohome {

class GohomeModel {
 public:
  GohomeModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    cfg.validate();
    nn::Rng rng(seed);
    encoder = SceneEncoder(store_, cfg, rng);
    decoder = HeatmapDecoder(store_, cfg, rng);
    trajectory = TrajectoryDecoder(store_, cfg.history_steps, cfg.future_steps, cfg.traj_hidden, rng);
  }
  GohomeModel(const GohomeModel&) = delete;
  GohomeModel& operator=(const GohomeModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  std::size_t parameter_count() const { return store_.count(); }

  SceneEncoder encoder;
  HeatmapDecoder decoder;
  TrajectoryDecoder trajectory;

 private:
  ModelConfig cfg_;
  std::uint64_t seed_ = 0;
  nn::ParameterStore store_;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"channels", c.channels},
          {"lane_points", c.lane_points},
          {"graph_layers", c.graph_layers},
          {"raster_channels", c.raster_channels},
          {"raster_length", c.raster_length},
          {"raster_width", c.raster_width},
          {"resolution", c.resolution},
          {"output_range", c.output_range},
          {"input_range", c.input_range},
          {"top_k", c.top_k},
          {"sigma_px", c.sigma_px},
          {"curvature_clip", c.curvature_clip},
          {"ranking_weight", c.ranking_weight},
          {"traj_hidden", c.traj_hidden},
          {"history_steps", c.history_steps},
          {"future_steps", c.future_steps}};
}

/// Reads the keys present in `j` over `base`; unknown keys are a ConfigError.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  if (!j.is_object()) throw ConfigError("model config must be an object");
  nlohmann::json merged = to_json(base);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!merged.contains(it.key())) throw ConfigError("unknown model config key '" + it.key() + "'");
    merged[it.key()] = it.value();
  }
  ModelConfig c;
  try {
    c.channels = merged.at("channels").get<std::size_t>();
    c.lane_points = merged.at("lane_points").get<std::size_t>();
    c.graph_layers = merged.at("graph_layers").get<std::size_t>();
    c.raster_channels = merged.at("raster_channels").get<std::size_t>();
    c.raster_length = merged.at("raster_length").get<double>();
    c.raster_width = merged.at("raster_width").get<double>();
    c.resolution = merged.at("resolution").get<double>();
    c.output_range = merged.at("output_range").get<double>();
    c.input_range = merged.at("input_range").get<double>();
    c.top_k = merged.at("top_k").get<std::size_t>();
    c.sigma_px = merged.at("sigma_px").get<double>();
    c.curvature_clip = merged.at("curvature_clip").get<double>();
    c.ranking_weight = merged.at("ranking_weight").get<double>();
    c.traj_hidden = merged.at("traj_hidden").get<std::size_t>();
    c.history_steps = merged.at("history_steps").get<std::size_t>();
    c.future_steps = merged.at("future_steps").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

inline void save_model(const std::string& path, const GohomeModel& model, nlohmann::json extra = nlohmann::json::object()) {
  extra["model"] = to_json(model.config());
  extra["seed"] = model.seed();
  nn::save_checkpoint(path, model.parameters(), extra);
}

/// Rebuilds a model from the configuration stored in the checkpoint, then
/// loads its weights.
inline std::unique_ptr<GohomeModel> load_model(const std::string& path) {
  const nlohmann::json header = nn::read_checkpoint_header(path);
  const nlohmann::json meta = header.value("meta", nlohmann::json::object());
  if (!meta.contains("model")) throw ParseError("/meta/model", "checkpoint carries no model configuration");
  auto model = std::make_unique<GohomeModel>(model_config_from_json(meta.at("model")), meta.value("seed", 0ULL));
  nn::load_checkpoint(path, model->parameters());
  return model;
}

/// Encodes a scene with the model (inputs prepared in the target frame).
inline SceneFeatures encode_scene(const Scene& scene, const GohomeModel& model) {
  return model.encoder(prepare_inputs(scene, model.config()));
}

/// Lane labels: 1 where the lanelet polygon contains the gt endpoint.
inline std::vector<double> lane_labels(const SceneInputs& in, Vec2 gt) {
  std::vector<double> labels;
  for (const map::Lanelet* l : in.lanelets) labels.push_back(map::contains(*l, gt) ? 1.0 : 0.0);
  return labels;
}

/// Analytical multiply-adds of ranking `lanelets` rows and decoding `decoded`
/// of them onto `touched_cells` grid cells.
inline nn::flops::Count decoder_macs(const ModelConfig& cfg, std::size_t lanelets, std::size_t decoded,
                                     std::size_t touched_cells) {
  namespace f = nn::flops;
  const std::size_t c = cfg.channels, rc = cfg.raster_channels, h = cfg.raster_h(), w = cfg.raster_w();
  return f::linear(lanelets, c, 1) + f::linear(decoded, c, (h + w) * rc) + f::linear(touched_cells, rc + 1, rc) +
         f::linear(decoded * h * w, 2 * rc + kGeometricChannels, 1);
}

/// Multiply-adds of a HOME-style dense decoder producing the (H, W) heatmap
/// with `layers` 3x3 convolutions of `channels` width at full resolution and
/// a 1x1 output convolution. Only used as the scaling reference.
inline nn::flops::Count dense_decoder_macs(std::size_t grid_size, std::size_t channels, std::size_t layers = 4) {
  const nn::flops::Count pixels = nn::flops::Count{grid_size} * grid_size;
  return pixels * (layers * 9 * channels * channels + channels);
}

struct ScenePass {
  SceneInputs inputs;
  SceneFeatures features;
  HeatmapGrid grid;             // metadata; values left zero
  nn::Tensor scores;            // (L, 1)
  HeatmapDecoder::Output decoded;
  std::uint64_t decode_macs = 0;  // ranking + raster decoding multiply-adds
};

/// Encodes the scene and decodes the top_k best-ranked lanelets (0: all).
inline ScenePass run_scene(const Scene& scene, const GohomeModel& model, std::size_t top_k) {
  const ModelConfig& cfg = model.config();
  ScenePass pass;
  pass.inputs = prepare_inputs(scene, cfg);
  pass.features = model.encoder(pass.inputs);
  pass.grid = HeatmapGrid::centered(pass.inputs.frame, cfg.output_range, cfg.resolution);

  const std::uint64_t before = nn::MacCounter::value();
  pass.scores = model.decoder.scores(pass.features.graph_encoding);
  const std::size_t l = pass.inputs.num_lanes();
  std::vector<std::size_t> rows(l);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (top_k != 0 && top_k < l) {
    std::vector<std::int64_t> ids(l);
    std::iota(ids.begin(), ids.end(), std::int64_t{0});
    const auto chosen = select_top_k(rank_lanes(pass.scores, ids), top_k);
    rows.assign(chosen.begin(), chosen.end());
  }
  pass.decoded = model.decoder.decode(pass.features.graph_encoding, rows, pass.inputs.lanelets, pass.grid,
                                      pass.inputs.frame);
  pass.decode_macs = nn::MacCounter::value() - before;
  return pass;
}

/// Analytical multiply-adds of run_scene: encoder on `in`, then ranking and
/// raster decoding of `decoded_lanelets` rasters touching `touched_cells`
/// grid cells. Matches the runtime counter when both see the same inputs.
inline nn::flops::Count analytical_scene_macs(const SceneInputs& in, const ModelConfig& cfg,
                                              std::size_t decoded_lanelets, std::size_t touched_cells) {
  namespace f = nn::flops;
  const std::size_t l = in.num_lanes(), n = in.num_agents(), c = cfg.channels, p = cfg.lane_points;
  const std::size_t t = in.steps, taps = 3;
  std::size_t active = 0;
  for (std::size_t s = 0; s < t; ++s) {
    bool any = false;
    for (std::size_t a = 0; a < n; ++a) any = any || in.track_mask[a * t + s] != 0.0;
    active += any ? 1 : 0;
  }
  f::Count total = f::conv1d(l, p, taps, kLaneInputWidth, c) + f::gru(l, p, p, c);
  total += 2 * cfg.graph_layers * f::graph_conv(l, c, in.edges);
  total += f::conv1d(n, t, taps, kTrackInputWidth, c) + f::gru(n, active, t, c);
  total += 2 * f::linear(n, c, c) + 2 * f::linear(l, c, c) + f::attention(n, l, c, c);  // lanes to agents
  total += 4 * f::linear(n, c, c) + f::attention(n, n, c, c);                          // agents to agents
  total += f::linear(l, 2 * c, c);                                                     // ego broadcast
  total += decoder_macs(cfg, l, decoded_lanelets, touched_cells);
  return total;
}

/// Combined training loss of one decoded scene; nullopt when the gt endpoint
/// falls outside the grid.
inline std::optional<LossTerms> scene_loss(const Scene& scene, const GohomeModel& model, const ScenePass& pass) {
  const Vec2 gt = scene.gt_endpoint();
  if (pass.grid.cell_of(gt) < 0) return std::nullopt;
  const ModelConfig& cfg = model.config();
  return sparse_combined_loss(pass.decoded.cell_proba, pass.decoded.index.cells, pass.grid, gt,
                              cfg.sigma_px * cfg.resolution, pass.scores, lane_labels(pass.inputs, gt),
                              cfg.ranking_weight);
}

/// Trajectory decoder loss (mean squared waypoint error, m²) conditioned on
/// the gt endpoint.
inline nn::Tensor trajectory_loss(const Scene& scene, const GohomeModel& model, const Pose2& frame) {
  const Vec2 end_local = frame.to_local(scene.gt_endpoint());
  const std::vector<double> row = model.trajectory.input_row(scene.target(), frame, end_local);
  const nn::Tensor x = nn::Tensor::from({1, row.size()}, row);
  return nn::mse(model.trajectory.forward(x, {end_local}), intermediate_targets(scene, frame));
}

struct PredictOptions {
  std::size_t k = 6;
  double radius = 1.8;
  std::size_t top_k = 20;  // 0 decodes every lanelet
};

struct Prediction {
  HeatmapGrid heatmap;
  EndpointSet endpoints;
  std::vector<PredictedTrajectory> trajectories;
  std::uint64_t decode_macs = 0;
};

/// Heatmap of one scene without gradient recording.
inline std::pair<HeatmapGrid, std::uint64_t> predict_heatmap(const Scene& scene, const GohomeModel& model,
                                                             std::size_t top_k) {
  nn::NoGradGuard guard;
  const ScenePass pass = run_scene(scene, model, top_k);
  return {densify(pass.grid, pass.decoded.index.cells, pass.decoded.cell_proba), pass.decode_macs};
}

/// Samples endpoints from `heatmap` and completes them into trajectories.
inline Prediction complete_prediction(const Scene& scene, const GohomeModel& model, HeatmapGrid heatmap,
                                      const PredictOptions& opt) {
  Prediction p;
  p.heatmap = std::move(heatmap);
  p.endpoints = sample_endpoints(p.heatmap, opt.k, opt.radius);
  const Pose2 frame = scene.target().last_pose();
  for (Vec2 e : p.endpoints.points) p.trajectories.push_back(model.trajectory.decode(scene.target(), frame, e));
  return p;
}

inline Prediction predict(const Scene& scene, const GohomeModel& model, const PredictOptions& opt = {}) {
  auto [heatmap, macs] = predict_heatmap(scene, model, opt.top_k);
  Prediction p = complete_prediction(scene, model, std::move(heatmap), opt);
  p.decode_macs = macs;
  return p;
}

inline ScenePrediction to_scene_prediction(const Scene& scene, const Prediction& p) {
  ScenePrediction out;
  out.scene_id = scene.scene_id;
  out.endpoints = p.endpoints.points;
  out.masses = p.endpoints.masses;
  for (const PredictedTrajectory& t : p.trajectories) out.trajectories.push_back(t.waypoints);
  return out;
}

}  // namespace gohome
