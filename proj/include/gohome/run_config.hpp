// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Command configuration: one JSON document with a section per command.
// Every key has a default; user documents and dotted-key overrides may only
// set keys that exist in the defaults.

#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gohome/bench.hpp"
#include "gohome/error.hpp"
#include "gohome/generator.hpp"
#include "gohome/model.hpp"
#include "gohome/nn/train_config.hpp"
#include "gohome/train.hpp"

namespace gohome {

using nlohmann::json;

inline json default_run_config() {
  const gen::GeneratorConfig g;
  const nn::TrainConfig t;
  const BenchConfig b;
  return {
      {"data_dir", "data"},
      {"generate",
       {{"seed", g.seed},
        {"scene_count", g.scene_count},
        {"template_mix", g.template_mix},
        {"speed_min", g.speed_min},
        {"speed_max", g.speed_max},
        {"accel_max", g.accel_max},
        {"lateral_noise", g.lateral_noise},
        {"lane_change_prob", g.lane_change_prob},
        {"lane_width", g.lane_width},
        {"road_length", g.road_length},
        {"lanelet_length", g.lanelet_length},
        {"forward_lanes", {g.min_forward_lanes, g.max_forward_lanes}},
        {"backward_lanes", {g.min_backward_lanes, g.max_backward_lanes}},
        {"other_agents", {g.min_other_agents, g.max_other_agents}},
        {"masked_history_prob", g.masked_history_prob},
        {"history_steps", g.horizon.history_steps},
        {"future_steps", g.horizon.future_steps},
        {"dt", g.horizon.dt},
        {"id_prefix", g.id_prefix},
        {"train_fraction", 0.8},
        {"split_seed", 1}}},
      {"model", to_json(ModelConfig{})},
      {"model_seed", 1},
      {"train",
       {{"split", "train"},
        {"validation_split", "val"},
        {"batch_size", t.batch_size},
        {"initial_lr", t.initial_lr},
        {"lr_halving_epochs", t.lr_halving_epochs},
        {"total_epochs", t.total_epochs},
        {"seed", t.seed},
        {"validate_every", 1},
        {"checkpoint", "model.ckpt"},
        {"log", "train_log.jsonl"}}},
      {"predict",
       {{"checkpoint", "model.ckpt"},
        {"split", "val"},
        {"out_dir", "predictions"},
        {"k", 6},
        {"radius", 1.8},
        {"top_k", 20},
        {"write_heatmaps", true}}},
      {"eval",
       {{"split", "val"},
        {"predictions", "predictions/predictions.jsonl"},
        {"baseline", ""},
        {"ks", {1, 6}},
        {"threshold", 2.0},
        {"out", "metrics.json"}}},
      {"ensemble",
       {{"inputs", json::array()},
        {"weights", json::array()},
        {"checkpoint", ""},
        {"split", "val"},
        {"out_dir", "ensemble"},
        {"k", 6},
        {"radius", 1.8},
        {"threshold", 2.0}}},
      {"bench",
       {{"scenes", 20},
        {"scene_seed", 99},
        {"output_ranges", b.output_ranges},
        {"pixels_per_meter", b.pixels_per_meter},
        {"base_range", b.base_range},
        {"base_resolution", b.base_resolution},
        {"input_range", b.input_range},
        {"top_k", b.top_k},
        {"dense_layers", b.dense_layers},
        {"seed", b.seed},
        {"csv", "bench.csv"},
        {"plot", "bench.svg"}}},
  };
}

namespace detail {

/// Recursively writes `patch` over `base`, rejecting keys absent from `base`.
inline void merge_known(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config " + (where.empty() ? "root" : where) + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object())
      merge_known(slot, it.value(), path);
    else
      slot = it.value();
  }
}

}  // namespace detail

/// Defaults overlaid with `user`; unknown keys are a ConfigError.
inline json resolve_config(const json& user) {
  json cfg = default_run_config();
  detail::merge_known(cfg, user, "");
  return cfg;
}

inline json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

/// Applies "a.b.c=value". The value is read as JSON when it parses, as a
/// plain string otherwise. The key must already exist.
inline void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json* node = &cfg;
  std::stringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
  }
  if (node->is_object()) throw ConfigError("config key '" + key + "' names a section, not a value");
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  *node = std::move(value);
}

template <typename T>
T config_get(const json& section, const char* key, const std::string& where) {
  try {
    return section.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config " + where + "." + key + ": " + e.what());
  }
}

inline gen::GeneratorConfig generator_config(const json& cfg) {
  const json& s = cfg.at("generate");
  gen::GeneratorConfig g;
  g.seed = config_get<std::uint64_t>(s, "seed", "generate");
  g.scene_count = config_get<std::size_t>(s, "scene_count", "generate");
  g.template_mix = config_get<std::array<double, 4>>(s, "template_mix", "generate");
  g.speed_min = config_get<double>(s, "speed_min", "generate");
  g.speed_max = config_get<double>(s, "speed_max", "generate");
  g.accel_max = config_get<double>(s, "accel_max", "generate");
  g.lateral_noise = config_get<double>(s, "lateral_noise", "generate");
  g.lane_change_prob = config_get<double>(s, "lane_change_prob", "generate");
  g.lane_width = config_get<double>(s, "lane_width", "generate");
  g.road_length = config_get<double>(s, "road_length", "generate");
  g.lanelet_length = config_get<double>(s, "lanelet_length", "generate");
  const auto fwd = config_get<std::array<std::size_t, 2>>(s, "forward_lanes", "generate");
  const auto bwd = config_get<std::array<std::size_t, 2>>(s, "backward_lanes", "generate");
  const auto oth = config_get<std::array<std::size_t, 2>>(s, "other_agents", "generate");
  g.min_forward_lanes = fwd[0];
  g.max_forward_lanes = fwd[1];
  g.min_backward_lanes = bwd[0];
  g.max_backward_lanes = bwd[1];
  g.min_other_agents = oth[0];
  g.max_other_agents = oth[1];
  g.masked_history_prob = config_get<double>(s, "masked_history_prob", "generate");
  g.horizon.history_steps = config_get<std::size_t>(s, "history_steps", "generate");
  g.horizon.future_steps = config_get<std::size_t>(s, "future_steps", "generate");
  g.horizon.dt = config_get<double>(s, "dt", "generate");
  g.id_prefix = config_get<std::string>(s, "id_prefix", "generate");
  g.validate();
  return g;
}

inline ModelConfig model_config(const json& cfg) { return model_config_from_json(cfg.at("model")); }

inline PredictOptions predict_options(const json& cfg) {
  const json& s = cfg.at("predict");
  PredictOptions p;
  p.k = config_get<std::size_t>(s, "k", "predict");
  p.radius = config_get<double>(s, "radius", "predict");
  p.top_k = config_get<std::size_t>(s, "top_k", "predict");
  if (p.k == 0) throw ConfigError("predict.k must be at least 1");
  if (!(p.radius > 0.0)) throw ConfigError("predict.radius must be positive");
  return p;
}

inline TrainOptions train_options(const json& cfg) {
  const json& s = cfg.at("train");
  TrainOptions opt;
  opt.schedule.batch_size = config_get<std::size_t>(s, "batch_size", "train");
  opt.schedule.initial_lr = config_get<double>(s, "initial_lr", "train");
  opt.schedule.lr_halving_epochs = config_get<std::vector<std::size_t>>(s, "lr_halving_epochs", "train");
  opt.schedule.total_epochs = config_get<std::size_t>(s, "total_epochs", "train");
  opt.schedule.seed = config_get<std::uint64_t>(s, "seed", "train");
  opt.schedule.channels = model_config(cfg).channels;
  opt.validate_every = config_get<std::size_t>(s, "validate_every", "train");
  opt.predict = predict_options(cfg);
  opt.schedule.validate();
  return opt;
}

inline BenchConfig bench_config(const json& cfg) {
  const json& s = cfg.at("bench");
  BenchConfig b;
  b.output_ranges = config_get<std::vector<double>>(s, "output_ranges", "bench");
  b.pixels_per_meter = config_get<std::vector<double>>(s, "pixels_per_meter", "bench");
  b.base_range = config_get<double>(s, "base_range", "bench");
  b.base_resolution = config_get<double>(s, "base_resolution", "bench");
  b.input_range = config_get<double>(s, "input_range", "bench");
  b.top_k = config_get<std::size_t>(s, "top_k", "bench");
  b.dense_layers = config_get<std::size_t>(s, "dense_layers", "bench");
  b.seed = config_get<std::uint64_t>(s, "seed", "bench");
  b.validate();
  return b;
}

}  // namespace gohome
