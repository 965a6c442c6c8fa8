// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Scene JSON documents (schema "gohome-scene-1", see docs/scene_schema.md),
// dataset directories and train/validation splitting.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gohome/error.hpp"
#include "gohome/map_core.hpp"
#include "gohome/nn/layers.hpp"
#include "gohome/scene.hpp"

namespace gohome::io {

using nlohmann::json;

inline constexpr const char* kSceneSchema = "gohome-scene-1";

inline json point_json(Vec2 p) { return json::array({p.x, p.y}); }

inline json to_json(const Scene& s) {
  json lanelets = json::array();
  for (const map::Lanelet& l : s.lane_graph.lanelets) {
    json pts = json::array();
    for (Vec2 p : l.centerline()) pts.push_back(point_json(p));
    lanelets.push_back({{"id", l.id()}, {"width", l.width()}, {"centerline", std::move(pts)}});
  }
  json relations = json::object();
  for (map::Relation r : map::kRelations) {
    json edges = json::array();
    for (auto [i, j] : s.lane_graph.edges(r)) edges.push_back(json::array({i, j}));
    relations[map::relation_name(r)] = std::move(edges);
  }
  json agents = json::array();
  for (const AgentTrack& a : s.agents) {
    json states = json::array();
    json valid = json::array();
    for (std::size_t t = 0; t < a.states.size(); ++t) {
      const TrackState& st = a.states[t];
      states.push_back(json::array({st.x, st.y, st.speed, st.yaw}));
      valid.push_back(static_cast<bool>(a.valid[t]));
    }
    agents.push_back({{"id", a.id}, {"states", std::move(states)}, {"valid", std::move(valid)}});
  }
  json future = json::array();
  for (Vec2 p : s.gt_future) future.push_back(point_json(p));
  return {{"schema", kSceneSchema},
          {"scene_id", s.scene_id},
          {"horizon",
           {{"history_steps", s.horizon.history_steps}, {"future_steps", s.horizon.future_steps}, {"dt", s.horizon.dt}}},
          {"lane_graph", {{"lanelets", std::move(lanelets)}, {"relations", std::move(relations)}}},
          {"agents", std::move(agents)},
          {"target_index", s.target_index},
          {"gt_future", std::move(future)}};
}

namespace detail {

inline const json& field(const json& obj, const std::string& where, const char* key) {
  if (!obj.is_object()) throw ParseError(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + "/" + key, std::string("missing required field '") + key + "'");
  return *it;
}

inline double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ParseError(where, "expected a number");
  return v.get<double>();
}

inline std::size_t count(const json& v, const std::string& where) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ParseError(where, "expected a non-negative integer");
  return v.get<std::size_t>();
}

inline const json& array(const json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError(where, "expected an array");
  return v;
}

inline Vec2 point(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2) throw ParseError(where, "expected [x, y]");
  return {number(v[0], where + "/0"), number(v[1], where + "/1")};
}

}  // namespace detail

/// Decodes and validates a scene document. Errors carry a JSON-pointer
/// location of the offending value.
inline Scene scene_from_json(const json& doc) {
  using namespace detail;
  Scene s;
  const json& schema = field(doc, "", "schema");
  if (schema != kSceneSchema) throw ParseError("/schema", "unsupported schema, expected " + std::string(kSceneSchema));
  const json& id = field(doc, "", "scene_id");
  if (!id.is_string()) throw ParseError("/scene_id", "expected a string");
  s.scene_id = id.get<std::string>();

  const json& hz = field(doc, "", "horizon");
  s.horizon.history_steps = count(field(hz, "/horizon", "history_steps"), "/horizon/history_steps");
  s.horizon.future_steps = count(field(hz, "/horizon", "future_steps"), "/horizon/future_steps");
  s.horizon.dt = number(field(hz, "/horizon", "dt"), "/horizon/dt");

  const json& graph = field(doc, "", "lane_graph");
  const json& lanelets = array(field(graph, "/lane_graph", "lanelets"), "/lane_graph/lanelets");
  for (std::size_t i = 0; i < lanelets.size(); ++i) {
    const std::string where = "/lane_graph/lanelets/" + std::to_string(i);
    const json& l = lanelets[i];
    const json& lid = field(l, where, "id");
    if (!lid.is_number_integer()) throw ParseError(where + "/id", "expected an integer");
    const double width = number(field(l, where, "width"), where + "/width");
    const json& pts = array(field(l, where, "centerline"), where + "/centerline");
    std::vector<Vec2> centerline;
    for (std::size_t p = 0; p < pts.size(); ++p) centerline.push_back(point(pts[p], where + "/centerline/" + std::to_string(p)));
    try {
      s.lane_graph.lanelets.emplace_back(lid.get<std::int64_t>(), std::move(centerline), width);
    } catch (const MalformedMapError& e) {
      throw ParseError(where, e.what());
    }
  }
  const json& rel = field(graph, "/lane_graph", "relations");
  for (map::Relation r : map::kRelations) {
    const std::string where = std::string("/lane_graph/relations/") + map::relation_name(r);
    const json& edges = array(field(rel, "/lane_graph/relations", map::relation_name(r)), where);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const std::string ew = where + "/" + std::to_string(e);
      if (!edges[e].is_array() || edges[e].size() != 2) throw ParseError(ew, "expected [i, j]");
      const std::size_t a = count(edges[e][0], ew + "/0"), b = count(edges[e][1], ew + "/1");
      if (a >= s.lane_graph.size() || b >= s.lane_graph.size()) throw ParseError(ew, "lanelet index out of range");
      s.lane_graph.edges(r).emplace_back(a, b);
    }
  }
  try {
    map::validate(s.lane_graph);
  } catch (const MalformedMapError& e) {
    throw ParseError("/lane_graph/relations", e.what());
  }

  const json& agents = array(field(doc, "", "agents"), "/agents");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string where = "/agents/" + std::to_string(i);
    AgentTrack a;
    const json& aid = field(agents[i], where, "id");
    if (!aid.is_number_integer()) throw ParseError(where + "/id", "expected an integer");
    a.id = aid.get<std::int64_t>();
    const json& states = array(field(agents[i], where, "states"), where + "/states");
    const json& valid = array(field(agents[i], where, "valid"), where + "/valid");
    if (valid.size() != states.size()) throw ParseError(where + "/valid", "length differs from states");
    for (std::size_t t = 0; t < states.size(); ++t) {
      const std::string sw = where + "/states/" + std::to_string(t);
      if (!states[t].is_array() || states[t].size() != 4) throw ParseError(sw, "expected [x, y, speed, yaw]");
      a.states.push_back({number(states[t][0], sw + "/0"), number(states[t][1], sw + "/1"),
                          number(states[t][2], sw + "/2"), number(states[t][3], sw + "/3")});
      if (!valid[t].is_boolean()) throw ParseError(where + "/valid/" + std::to_string(t), "expected a boolean");
      a.valid.push_back(valid[t].get<bool>());
    }
    s.agents.push_back(std::move(a));
  }
  s.target_index = count(field(doc, "", "target_index"), "/target_index");
  const json& fut = array(field(doc, "", "gt_future"), "/gt_future");
  for (std::size_t t = 0; t < fut.size(); ++t) s.gt_future.push_back(point(fut[t], "/gt_future/" + std::to_string(t)));
  try {
    validate_scene(s);
  } catch (const Error& e) {
    throw ParseError("", e.what());
  }
  return s;
}

inline std::string scene_to_string(const Scene& s) { return to_json(s).dump(1) + "\n"; }

inline Scene scene_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("invalid JSON: ") + e.what());
  }
  return scene_from_json(doc);
}

inline void save_scene(const Scene& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << scene_to_string(s);
  if (!out) throw IoError("short write on " + path.string());
}

inline Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return scene_from_string(buf.str());
}

/// Deterministic shuffled split; the first round(fraction * n) shuffled
/// scenes form the training part.
inline std::pair<std::vector<Scene>, std::vector<Scene>> split(std::vector<Scene> scenes, double train_fraction,
                                                               std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  nn::Rng rng(seed);
  for (std::size_t i = scenes.size(); i > 1; --i) std::swap(scenes[i - 1], scenes[rng.index(i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(scenes.size())));
  std::vector<Scene> train(std::make_move_iterator(scenes.begin()),
                           std::make_move_iterator(scenes.begin() + static_cast<std::ptrdiff_t>(n_train)));
  std::vector<Scene> val(std::make_move_iterator(scenes.begin() + static_cast<std::ptrdiff_t>(n_train)),
                         std::make_move_iterator(scenes.end()));
  return {std::move(train), std::move(val)};
}

/// Writes {root}/{split}/{scene_id}.json and {root}/manifest.json.
inline void write_dataset(const std::filesystem::path& root,
                          const std::vector<std::pair<std::string, const std::vector<Scene>*>>& splits) {
  std::filesystem::create_directories(root);
  json manifest;
  manifest["schema"] = kSceneSchema;
  manifest["splits"] = json::object();
  for (const auto& [name, scenes] : splits) {
    std::filesystem::create_directories(root / name);
    json ids = json::array();
    for (const Scene& s : *scenes) {
      save_scene(s, root / name / (s.scene_id + ".json"));
      ids.push_back(s.scene_id);
    }
    manifest["splits"][name] = std::move(ids);
    if (!scenes->empty()) {
      const Horizon& h = scenes->front().horizon;
      manifest["horizon"] = {{"history_steps", h.history_steps}, {"future_steps", h.future_steps}, {"dt", h.dt}};
    }
  }
  std::ofstream out(root / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write manifest in " + root.string());
  out << manifest.dump(1) << "\n";
}

/// Loads one split listed in the dataset manifest, in manifest order.
inline std::vector<Scene> read_split(const std::filesystem::path& root, const std::string& name) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw IoError("cannot open " + (root / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("", std::string("manifest: ") + e.what());
  }
  const json& splits = detail::field(manifest, "", "splits");
  if (!splits.contains(name)) throw ParseError("/splits/" + name, "split not listed in manifest");
  std::vector<Scene> out;
  for (const json& id : splits[name]) out.push_back(load_scene(root / name / (id.get<std::string>() + ".json")));
  return out;
}

}  // namespace gohome::io
