// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Lanelet graph data model and curvilinear (Frenet) coordinates.
//
// The Frenet frame attached to a lanelet is the "mitered quad" frame of its
// piecewise-linear centerline: inside segment k the lateral offset d is the
// signed perpendicular distance to the segment line, and the longitudinal
// coordinate moves along lines that interpolate between the miter directions
// of the segment's two vertices. Constant-d curves are therefore exact
// parallel offsets of each segment, the corridor |d| <= width/2 is the mitered
// offset polygon, and project/unproject are exact inverses wherever the quads
// of neighbouring segments do not overlap (|d| below the local radius).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gohome/error.hpp"
#include "gohome/geometry.hpp"

namespace gohome::map {

inline constexpr double kDefaultLaneWidth = 4.0;

enum class Relation : std::uint8_t { predecessor = 0, successor = 1, left = 2, right = 3 };
inline constexpr std::array<Relation, 4> kRelations = {Relation::predecessor, Relation::successor,
                                                       Relation::left, Relation::right};
inline constexpr std::size_t kNumRelations = 4;

inline const char* relation_name(Relation r) {
  switch (r) {
    case Relation::predecessor: return "predecessor";
    case Relation::successor: return "successor";
    case Relation::left: return "left";
    case Relation::right: return "right";
  }
  return "?";
}

inline Relation converse(Relation r) {
  switch (r) {
    case Relation::predecessor: return Relation::successor;
    case Relation::successor: return Relation::predecessor;
    case Relation::left: return Relation::right;
    case Relation::right: return Relation::left;
  }
  return r;
}

struct FrenetCoord {
  double s = 0.0;  ///< arclength along the centerline (m)
  double d = 0.0;  ///< signed lateral offset, positive to the left (m)
};

class Lanelet {
 public:
  Lanelet() = default;

  /// Throws MalformedMapError on fewer than two points or repeated
  /// consecutive points.
  Lanelet(std::int64_t id, std::vector<Vec2> centerline, double width = kDefaultLaneWidth)
      : id_(id), centerline_(std::move(centerline)), width_(width) {
    if (centerline_.size() < 2)
      throw MalformedMapError("lanelet " + std::to_string(id_) + " has fewer than 2 centerline points");
    if (!(width_ > 0.0)) throw MalformedMapError("lanelet " + std::to_string(id_) + " has non-positive width");
    arclength_.resize(centerline_.size());
    arclength_[0] = 0.0;
    for (std::size_t i = 1; i < centerline_.size(); ++i) {
      const double seg = distance(centerline_[i - 1], centerline_[i]);
      if (!(seg > 0.0))
        throw MalformedMapError("lanelet " + std::to_string(id_) + " has duplicate consecutive points at index " +
                                std::to_string(i));
      arclength_[i] = arclength_[i - 1] + seg;
    }
    build_frame();
  }

  std::int64_t id() const { return id_; }
  void set_id(std::int64_t id) { id_ = id; }
  const std::vector<Vec2>& centerline() const { return centerline_; }
  const std::vector<double>& cumulative_arclength() const { return arclength_; }
  double width() const { return width_; }
  double length() const { return arclength_.back(); }
  std::size_t num_segments() const { return centerline_.size() - 1; }

  /// Index of the segment containing arclength s (s clamped to the lanelet).
  std::size_t segment_at(double s) const {
    if (s <= 0.0) return 0;
    if (s >= length()) return num_segments() - 1;
    auto it = std::upper_bound(arclength_.begin(), arclength_.end(), s);
    return static_cast<std::size_t>(std::distance(arclength_.begin(), it)) - 1;
  }

  /// Unit tangent of segment k.
  Vec2 tangent(std::size_t k) const { return tangents_[k]; }
  double heading_at(double s) const {
    const Vec2 t = tangents_[segment_at(s)];
    return std::atan2(t.y, t.x);
  }

  /// Signed curvature (1/m) near arclength s: turning angle at the nearest
  /// interior vertex spread over the mean length of its two segments.
  double curvature_at(double s) const {
    if (num_segments() < 2) return 0.0;
    std::size_t best = 1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t v = 1; v + 1 < centerline_.size(); ++v) {
      const double dv = std::abs(arclength_[v] - s);
      if (dv < best_dist) {
        best_dist = dv;
        best = v;
      }
    }
    const Vec2 t0 = tangents_[best - 1], t1 = tangents_[best];
    const double turn = std::atan2(t0.cross(t1), t0.dot(t1));
    const double span = 0.5 * (arclength_[best + 1] - arclength_[best - 1]);
    return turn / span;
  }

  /// Point at (s, d) in the lanelet frame, extending the first and last
  /// segments straight for s outside [0, length].
  Vec2 point_at(double s, double d) const {
    const std::size_t k = segment_at(s);
    const double seg_len = arclength_[k + 1] - arclength_[k];
    const double t = (s - arclength_[k]) / seg_len;
    const Vec2 a = centerline_[k], b = centerline_[k + 1];
    // Outside the lanelet the frame is the straight extension of the end segment.
    const Vec2 n = (t < 0.0 || t > 1.0) ? normals_[k] : miters_[k] * (1.0 - t) + miters_[k + 1] * t;
    return a + (b - a) * t + n * d;
  }

  /// Unclamped Frenet coordinates: s may fall outside [0, length] for points
  /// beyond the ends.
  FrenetCoord project_unclamped(Vec2 p) const {
    FrenetCoord best{};
    double best_abs_d = std::numeric_limits<double>::infinity();
    bool found = false;
    const std::size_t nseg = num_segments();
    for (std::size_t k = 0; k < nseg; ++k) {
      const Vec2 a = centerline_[k];
      const Vec2 u = tangents_[k];
      const Vec2 n = normals_[k];
      const double seg_len = arclength_[k + 1] - arclength_[k];
      const double d = (p - a).dot(n);
      const Vec2 ma = miters_[k], mb = miters_[k + 1];
      const double denom = seg_len + d * (mb.dot(u) - ma.dot(u));
      if (!(std::abs(denom) > 1e-12)) continue;
      const double t = ((p - a).dot(u) - d * ma.dot(u)) / denom;
      const bool lo_ok = (k == 0) || t >= 0.0;
      const bool hi_ok = (k + 1 == nseg) || t <= 1.0;
      if (!lo_ok || !hi_ok) continue;
      double s = 0.0;
      if (k == 0 && t < 0.0) {
        // Beyond the start: straight extension of the first segment.
        s = (p - a).dot(u);
      } else if (k + 1 == nseg && t > 1.0) {
        s = arclength_[k + 1] + (p - centerline_[k + 1]).dot(u);
      } else {
        s = arclength_[k] + t * seg_len;
      }
      if (std::abs(d) < best_abs_d) {
        best_abs_d = std::abs(d);
        best = {s, d};
        found = true;
      }
    }
    if (!found) {
      // No quad contains p (inner side of a sharp bend): closest centerline point.
      double best_dist = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < nseg; ++k) {
        const Vec2 a = centerline_[k];
        const double seg_len = arclength_[k + 1] - arclength_[k];
        const double t = std::clamp((p - a).dot(tangents_[k]) / seg_len, 0.0, 1.0);
        const Vec2 foot = a + (centerline_[k + 1] - a) * t;
        const double dist = distance(p, foot);
        if (dist < best_dist) {
          best_dist = dist;
          best = {arclength_[k] + t * seg_len, (p - foot).dot(normals_[k])};
        }
      }
    }
    return best;
  }

 private:
  void build_frame() {
    const std::size_t nseg = num_segments();
    tangents_.resize(nseg);
    normals_.resize(nseg);
    for (std::size_t k = 0; k < nseg; ++k) {
      const Vec2 e = centerline_[k + 1] - centerline_[k];
      tangents_[k] = e * (1.0 / e.norm());
      normals_[k] = tangents_[k].left_normal();
    }
    miters_.resize(centerline_.size());
    miters_.front() = normals_.front();
    miters_.back() = normals_.back();
    for (std::size_t v = 1; v + 1 < centerline_.size(); ++v) {
      const Vec2 n1 = normals_[v - 1], n2 = normals_[v];
      const double c = 1.0 + n1.dot(n2);
      // m . n1 = m . n2 = 1 keeps constant-d curves parallel to both segments.
      miters_[v] = (c > 1e-6) ? (n1 + n2) * (1.0 / c) : n1;
    }
  }

  std::int64_t id_ = 0;
  std::vector<Vec2> centerline_;
  std::vector<double> arclength_;
  double width_ = kDefaultLaneWidth;
  std::vector<Vec2> tangents_;
  std::vector<Vec2> normals_;
  std::vector<Vec2> miters_;
};

using Edge = std::pair<std::size_t, std::size_t>;

struct LaneGraph {
  std::vector<Lanelet> lanelets;
  /// relations[r] holds (i, j): lanelet j is the r-neighbour of lanelet i.
  std::array<std::vector<Edge>, kNumRelations> relations;

  std::size_t size() const { return lanelets.size(); }
  std::vector<Edge>& edges(Relation r) { return relations[static_cast<std::size_t>(r)]; }
  const std::vector<Edge>& edges(Relation r) const { return relations[static_cast<std::size_t>(r)]; }

  /// Adds (i, j) under r and the converse edge (j, i), skipping duplicates.
  void connect(std::size_t i, std::size_t j, Relation r) {
    auto add = [](std::vector<Edge>& list, Edge e) {
      if (std::find(list.begin(), list.end(), e) == list.end()) list.push_back(e);
    };
    add(edges(r), {i, j});
    add(edges(converse(r)), {j, i});
  }

  /// Sorts every edge list; adjacency-driven computations iterate edges in
  /// this canonical order.
  void canonicalize() {
    for (auto& list : relations) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
    }
  }
};

/// Throws MalformedMapError when an edge is out of range or the
/// successor/predecessor and left/right relations are not mutual converses.
inline void validate(const LaneGraph& g) {
  const std::size_t n = g.size();
  for (Relation r : kRelations) {
    std::set<Edge> conv(g.edges(converse(r)).begin(), g.edges(converse(r)).end());
    for (const Edge& e : g.edges(r)) {
      if (e.first >= n || e.second >= n)
        throw MalformedMapError(std::string(relation_name(r)) + " edge (" + std::to_string(e.first) + ", " +
                                std::to_string(e.second) + ") references a missing lanelet");
      if (!conv.contains({e.second, e.first}))
        throw MalformedMapError(std::string(relation_name(r)) + " edge (" + std::to_string(e.first) + ", " +
                                std::to_string(e.second) + ") has no converse " + relation_name(converse(r)) +
                                " edge");
    }
  }
}

/// Dense {0,1} adjacency matrix in row-major order.
struct AdjacencyMatrix {
  std::size_t n = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t operator()(std::size_t i, std::size_t j) const { return bits[i * n + j]; }
  bool operator==(const AdjacencyMatrix&) const = default;

  AdjacencyMatrix transposed() const {
    AdjacencyMatrix t{n, std::vector<std::uint8_t>(n * n, 0)};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) t.bits[j * n + i] = bits[i * n + j];
    return t;
  }
};

/// A[i][j] = 1 iff (i, j) is an r-edge, so (A F)[i] sums the features of
/// the r-neighbours of lanelet i.
inline AdjacencyMatrix adjacency(const LaneGraph& g, Relation r) {
  AdjacencyMatrix a{g.size(), std::vector<std::uint8_t>(g.size() * g.size(), 0)};
  for (const Edge& e : g.edges(r)) a.bits[e.first * a.n + e.second] = 1;
  return a;
}

/// Clamps s to [0, length].
inline FrenetCoord frenet_project(const Lanelet& lanelet, Vec2 p) {
  FrenetCoord c = lanelet.project_unclamped(p);
  c.s = std::clamp(c.s, 0.0, lanelet.length());
  return c;
}

/// Throws DomainError for s outside [0, length].
inline Vec2 frenet_unproject(const Lanelet& lanelet, FrenetCoord c) {
  if (!(c.s >= 0.0 && c.s <= lanelet.length()))
    throw DomainError("arclength " + std::to_string(c.s) + " outside lanelet " + std::to_string(lanelet.id()) +
                      " of length " + std::to_string(lanelet.length()));
  return lanelet.point_at(c.s, c.d);
}

inline bool contains(const Lanelet& lanelet, Vec2 p) {
  const FrenetCoord c = lanelet.project_unclamped(p);
  return c.s >= 0.0 && c.s <= lanelet.length() && std::abs(c.d) <= 0.5 * lanelet.width();
}

/// Point at arclength s along a polyline with precomputed cumulative arclength.
inline Vec2 interpolate_polyline(std::span<const Vec2> pts, std::span<const double> cum, double s) {
  if (s <= 0.0) return pts.front();
  if (s >= cum.back()) return pts.back();
  auto it = std::upper_bound(cum.begin(), cum.end(), s);
  const std::size_t k = static_cast<std::size_t>(std::distance(cum.begin(), it)) - 1;
  const double t = (s - cum[k]) / (cum[k + 1] - cum[k]);
  return pts[k] + (pts[k + 1] - pts[k]) * t;
}

/// `count` points uniformly spaced in arclength over [s0, s1].
inline std::vector<Vec2> sample_uniform(const Lanelet& l, double s0, double s1, std::size_t count) {
  std::vector<Vec2> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double s = (i + 1 == count) ? s1 : s0 + (s1 - s0) * static_cast<double>(i) / static_cast<double>(count - 1);
    out[i] = interpolate_polyline(l.centerline(), l.cumulative_arclength(), s);
  }
  return out;
}

/// Splits lanelets into pieces of roughly `target_length`, keeping the
/// original point density. Pieces of one lanelet are chained by successor
/// edges; successor/predecessor relations attach to the end pieces and
/// left/right relations pair pieces whose normalized arclength ranges overlap
/// the most. Output lanelet ids equal their index.
inline LaneGraph resample_lanelets(const LaneGraph& graph, double target_length) {
  if (!(target_length > 0.0)) throw DomainError("resample target length must be positive");
  for (const Lanelet& l : graph.lanelets)
    if (l.centerline().size() < 2)
      throw MalformedMapError("lanelet " + std::to_string(l.id()) + " has fewer than 2 centerline points");

  LaneGraph out;
  std::vector<std::size_t> first_piece(graph.size()), piece_count(graph.size());
  for (std::size_t li = 0; li < graph.size(); ++li) {
    const Lanelet& l = graph.lanelets[li];
    const double len = l.length();
    const std::size_t pieces = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(len / target_length)));
    const double spacing = len / static_cast<double>(l.centerline().size() - 1);
    first_piece[li] = out.lanelets.size();
    piece_count[li] = pieces;
    for (std::size_t p = 0; p < pieces; ++p) {
      const double s0 = len * static_cast<double>(p) / static_cast<double>(pieces);
      const double s1 = (p + 1 == pieces) ? len : len * static_cast<double>(p + 1) / static_cast<double>(pieces);
      const std::size_t npts = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround((s1 - s0) / spacing)) + 1);
      const std::size_t id = out.lanelets.size();
      out.lanelets.emplace_back(static_cast<std::int64_t>(id), sample_uniform(l, s0, s1, npts), l.width());
      if (p > 0) out.connect(id - 1, id, Relation::successor);
    }
  }

  for (const Edge& e : graph.edges(Relation::successor))
    out.connect(first_piece[e.first] + piece_count[e.first] - 1, first_piece[e.second], Relation::successor);
  for (const Edge& e : graph.edges(Relation::predecessor))
    out.connect(first_piece[e.first], first_piece[e.second] + piece_count[e.second] - 1, Relation::predecessor);

  for (Relation r : {Relation::left, Relation::right}) {
    for (const Edge& e : graph.edges(r)) {
      const std::size_t na = piece_count[e.first], nb = piece_count[e.second];
      for (std::size_t a = 0; a < na; ++a) {
        const double mid = (static_cast<double>(a) + 0.5) / static_cast<double>(na);
        const std::size_t b = std::min(nb - 1, static_cast<std::size_t>(mid * static_cast<double>(nb)));
        out.connect(first_piece[e.first] + a, first_piece[e.second] + b, r);
      }
    }
  }
  out.canonicalize();
  return out;
}

/// Total centerline arclength over all lanelets.
inline double total_length(const LaneGraph& g) {
  double sum = 0.0;
  for (const Lanelet& l : g.lanelets) sum += l.length();
  return sum;
}

}  // namespace gohome::map
