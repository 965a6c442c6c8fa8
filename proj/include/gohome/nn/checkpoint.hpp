// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Checkpoint file: one line of JSON terminated by '\n', then the parameter
// values as consecutive 64-bit little-endian IEEE-754 doubles.
//
//   {"version":"gohome-ckpt-1","meta":{...},"params":[{"name":..,"shape":[..],"offset":..},..],"count":N}
//
// `offset` counts doubles from the first byte after the newline.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gohome/error.hpp"
#include "gohome/nn/layers.hpp"

namespace gohome::nn {

inline constexpr const char* kCheckpointVersion = "gohome-ckpt-1";

namespace detail {
inline void put_le(std::vector<char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}
inline double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return std::bit_cast<double>(bits);
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const ParameterStore& store,
                            const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["meta"] = meta;
  header["params"] = nlohmann::json::array();
  std::vector<char> data;
  std::size_t offset = 0;
  for (const auto& [name, t] : store.entries()) {
    header["params"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    for (double v : t.values()) detail::put_le(data, v);
    offset += t.size();
  }
  header["count"] = offset;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  const std::string text = header.dump() + "\n";
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write on checkpoint " + path);
}

inline nlohmann::json read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("", std::string("checkpoint header is not JSON: ") + e.what());
  }
  if (!header.contains("version") || header["version"] != kCheckpointVersion)
    throw ParseError("/version", "expected " + std::string(kCheckpointVersion));
  return header;
}

/// Copies stored values into the parameters of `store` by name; every
/// parameter must be present with a matching shape.
inline nlohmann::json load_checkpoint(const std::string& path, ParameterStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::string line;
  std::getline(in, line);
  const nlohmann::json header = read_checkpoint_header(path);
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t count = header.at("count").get<std::size_t>();
  if (data.size() != count * 8) throw ParseError("/count", "payload holds " + std::to_string(data.size() / 8) + " values");
  for (const auto& [name, t] : store.entries()) {
    const nlohmann::json* entry = nullptr;
    for (const auto& p : header.at("params"))
      if (p.at("name") == name) entry = &p;
    if (!entry) throw ParseError("/params", "missing parameter '" + name + "'");
    const auto shape = entry->at("shape").get<Shape>();
    if (shape != t.shape())
      throw ParseError("/params/" + name, "shape " + shape_str(shape) + " differs from model " + shape_str(t.shape()));
    const std::size_t off = entry->at("offset").get<std::size_t>();
    if (off + t.size() > count) throw ParseError("/params/" + name, "offset beyond payload");
    Tensor target = t;
    auto dst = target.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = detail::get_le(data.data() + (off + i) * 8);
  }
  return header.value("meta", nlohmann::json::object());
}

}  // namespace gohome::nn
