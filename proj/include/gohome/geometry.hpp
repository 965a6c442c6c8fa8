// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numbers>

namespace gohome {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double k) const { return {x * k, y * k}; }
  constexpr bool operator==(const Vec2&) const = default;

  constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
  constexpr double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  /// Counter-clockwise perpendicular.
  constexpr Vec2 left_normal() const { return {-y, x}; }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Pose with its rotation precomputed, for transforming many points. Gives
/// the same results as the Pose2 methods bit for bit.
struct RigidTransform {
  Vec2 origin;
  double c = 1.0;
  double s = 0.0;

  Vec2 to_parent(Vec2 p) const { return {origin.x + c * p.x - s * p.y, origin.y + s * p.x + c * p.y}; }
  Vec2 to_local(Vec2 p) const {
    const Vec2 d = p - origin;
    return {c * d.x + s * d.y, -s * d.x + c * d.y};
  }
};

/// Rigid 2D transform mapping local coordinates into a parent frame.
struct Pose2 {
  Vec2 origin;
  double yaw = 0.0;

  RigidTransform transform() const { return {origin, std::cos(yaw), std::sin(yaw)}; }
  Vec2 to_parent(Vec2 p) const { return transform().to_parent(p); }
  Vec2 to_local(Vec2 p) const { return transform().to_local(p); }
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

}  // namespace gohome
