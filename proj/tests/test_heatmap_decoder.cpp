// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <vector>

#include "gohome/generator.hpp"
#include "gohome/heatmap_decoder.hpp"
#include "gohome/model.hpp"
#include "support/fixtures.hpp"

namespace gohome {
namespace {

using testing::tiny_config;
using testing::tiny_scene;

void fill(nn::Tensor t, double v) {
  for (double& x : t.mutable_values()) x = v;
}

std::vector<std::int64_t> ids_of(std::size_t n) {
  std::vector<std::int64_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::int64_t{0});
  return ids;
}

// ---------------------------------------------------------------- ranking

TEST(RankLanes, ZeroWeightsGiveHalfEverywhere) {
  const ModelConfig cfg = tiny_config();
  nn::ParameterStore store;
  nn::Rng rng(1);
  HeatmapDecoder dec(store, cfg, rng);
  fill(dec.rank.weight, 0.0);
  fill(dec.rank.bias, 0.0);
  nn::Rng data(2);
  const nn::Tensor enc = testing::random_tensor({7, cfg.channels}, data, false);
  const nn::Tensor s = dec.scores(enc);
  ASSERT_EQ(s.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(s[i], 0.5);
}

TEST(RankLanes, EqualScoresRankByAscendingId) {
  const nn::Tensor s = nn::Tensor::from({5, 1}, {0.3, 0.7, 0.3, 0.7, 0.3});
  const auto ranked = rank_lanes(s, {40, 12, 5, 3, 21});
  std::vector<std::int64_t> order;
  for (const LaneScore& r : ranked) order.push_back(r.lanelet_id);
  EXPECT_EQ(order, (std::vector<std::int64_t>{3, 12, 5, 21, 40}));
  EXPECT_EQ(select_top_k(ranked, 3), (std::vector<std::int64_t>{3, 12, 5}));
}

TEST(RankLanes, CountMismatchIsShapeError) {
  EXPECT_THROW(rank_lanes(nn::Tensor::zeros({3, 1}), {1, 2}), ShapeError);
}

TEST(SelectTopK, SizesAndErrors) {
  nn::Rng rng(3);
  const nn::Tensor s140 = testing::random_tensor({140, 1}, rng, false);
  const auto ranked = rank_lanes(s140, ids_of(140));
  const auto top = select_top_k(ranked, 20);
  ASSERT_EQ(top.size(), 20u);
  for (std::size_t i = 1; i < top.size(); ++i) EXPECT_GE(s140[top[i - 1]], s140[top[i]]);
  EXPECT_EQ(select_top_k(ranked, 140).size(), 140u);
  EXPECT_EQ(select_top_k(ranked, 500).size(), 140u);
  const auto single = rank_lanes(nn::Tensor::from({1, 1}, {0.2}), {17});
  for (std::size_t k : {1u, 6u, 20u}) EXPECT_EQ(select_top_k(single, k), (std::vector<std::int64_t>{17}));
  EXPECT_THROW(select_top_k(ranked, 0), ConfigError);
}

// ---------------------------------------------------------------- lane raster

TEST(LaneRaster, DefaultResolutionGives40By8) {
  const ModelConfig cfg;
  EXPECT_EQ(cfg.raster_h(), 40u);
  EXPECT_EQ(cfg.raster_w(), 8u);
}

TEST(LaneRaster, BroadcastStructureIsExact) {
  const ModelConfig cfg;
  nn::ParameterStore store;
  nn::Rng rng(4);
  HeatmapDecoder dec(store, cfg, rng);
  const std::size_t h = cfg.raster_h(), w = cfg.raster_w(), rc = cfg.raster_channels;
  const nn::Tensor enc = testing::random_tensor({3, cfg.channels}, rng, false);
  const nn::Tensor f = build_lane_raster(dec.lon, dec.lat, enc, h, w, rc);
  ASSERT_EQ(f.shape(), (nn::Shape{3 * h * w, rc}));
  const nn::Tensor lon = dec.lon(enc), lat = dec.lat(enc);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t c = 0; c < rc; ++c) {
          const std::size_t row = (r * h + i) * w + j;
          ASSERT_EQ(f.at(row, c), lon.at(r, i * rc + c) + lat.at(r, j * rc + c));
        }
  // With dyadic weights and inputs every sum is exact, so the rank-1 identity
  // f[i][j] - f[i][0] - f[0][j] + f[0][0] = 0 holds bit-exactly.
  for (nn::Tensor t : {dec.lon.weight, dec.lon.bias, dec.lat.weight, dec.lat.bias})
    for (double& v : t.mutable_values()) v = static_cast<double>(static_cast<int>(rng.index(17)) - 8) / 8.0;
  std::vector<double> e(cfg.channels);
  for (double& v : e) v = static_cast<double>(static_cast<int>(rng.index(9)) - 4) / 4.0;
  const nn::Tensor g = build_lane_raster(dec.lon, dec.lat, nn::Tensor::from({1, cfg.channels}, e), h, w, rc);
  const auto at = [&](std::size_t i, std::size_t j, std::size_t c) { return g.at(i * w + j, c); };
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t c = 0; c < rc; ++c) ASSERT_EQ(at(i, j, c) - at(i, 0, c) - at(0, j, c) + at(0, 0, c), 0.0);
}

TEST(LaneRaster, BroadcastCostsHPlusWTimesChannels) {
  const ModelConfig cfg;
  nn::ParameterStore store;
  nn::Rng rng(5);
  HeatmapDecoder dec(store, cfg, rng);
  const std::size_t h = cfg.raster_h(), w = cfg.raster_w(), rc = cfg.raster_channels, c = cfg.channels;
  const nn::Linear dense(store, "dense", c, h * w * rc, rng);
  const nn::Tensor enc = testing::random_tensor({1, c}, rng, false);
  std::uint64_t before = nn::MacCounter::value();
  const nn::Tensor f = build_lane_raster(dec.lon, dec.lat, enc, h, w, rc);
  EXPECT_EQ(nn::MacCounter::value() - before, (h + w) * rc * c);
  before = nn::MacCounter::value();
  const nn::Tensor d = build_lane_raster_dense(dense, enc, h, w, rc);
  EXPECT_EQ(nn::MacCounter::value() - before, h * w * rc * c);
  EXPECT_EQ(f.shape(), d.shape());
}

// ---------------------------------------------------------------- cartesian connection

/// Naive per-cell accumulation: sums rows per cell in input order, divides by count.
std::map<std::int64_t, std::vector<double>> scatter_oracle(const nn::Tensor& f, const std::vector<std::int64_t>& cells) {
  std::map<std::int64_t, std::vector<double>> sum;
  std::map<std::int64_t, double> count;
  for (std::size_t p = 0; p < cells.size(); ++p) {
    if (cells[p] < 0) continue;
    auto& s = sum[cells[p]];
    s.resize(f.cols(), 0.0);
    for (std::size_t c = 0; c < f.cols(); ++c) s[c] += f.at(p, c);
    count[cells[p]] += 1.0;
  }
  for (auto& [cell, s] : sum)
    for (double& v : s) v /= count[cell];
  return sum;
}

/// relu(connect([x, count])) evaluated by hand.
std::vector<double> connect_by_hand(const nn::Linear& l, const std::vector<double>& x, double count) {
  std::vector<double> out(l.out_features());
  for (std::size_t o = 0; o < out.size(); ++o) {
    double acc = l.bias[o];
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * l.weight.at(i, o);
    acc += count * l.weight.at(x.size(), o);
    out[o] = std::max(acc, 0.0);
  }
  return out;
}

TEST(CartesianConnection, NoOverlapActsPerPixel) {
  nn::ParameterStore store;
  nn::Rng rng(6);
  const nn::Linear connect(store, "c", 9, 8, rng);
  const nn::Tensor f = testing::random_tensor({6, 8}, rng, false);
  const std::vector<std::int64_t> cells{40, 3, 17, 8, 100, 55};
  const CellIndex idx = build_cell_index(cells);
  const nn::Tensor out = cartesian_connection(f, idx, connect);
  for (std::size_t p = 0; p < cells.size(); ++p) {
    std::vector<double> x(f.values().begin() + p * 8, f.values().begin() + (p + 1) * 8);
    const auto ref = connect_by_hand(connect, x, 1.0);
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out.at(p, c), ref[c], 1e-14);
  }
}

TEST(CartesianConnection, EqualVectorsInSharedPixelAverageToThemselves) {
  nn::ParameterStore store;
  nn::Rng rng(7);
  const nn::Linear connect(store, "c", 9, 8, rng);
  std::vector<double> v{0.25, -0.5, 1.0, 0.125, -2.0, 0.75, 3.0, -0.0625};
  std::vector<double> both(v);
  both.insert(both.end(), v.begin(), v.end());
  const nn::Tensor f = nn::Tensor::from({2, 8}, both);
  const CellIndex idx = build_cell_index({12, 12});
  ASSERT_EQ(idx.cells.size(), 1u);
  EXPECT_EQ(idx.counts[0], 2.0);
  const nn::Tensor buffer = nn::scatter_mean_rows(f, idx.compact, 1);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(buffer.at(0, c), v[c]);
  const nn::Tensor out = cartesian_connection(f, idx, connect);
  const auto ref = connect_by_hand(connect, v, 2.0);
  for (std::size_t p = 0; p < 2; ++p)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out.at(p, c), ref[c], 1e-14);
}

TEST(CartesianConnection, RandomOverlapMatchesNaiveAccumulation) {
  nn::Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.index(200), span = 1 + rng.index(60);
    std::vector<std::int64_t> cells(n);
    for (auto& c : cells) c = rng.uniform(0.0, 1.0) < 0.1 ? -1 : static_cast<std::int64_t>(rng.index(span));
    const nn::Tensor f = testing::random_tensor({n, 8}, rng, false);
    const CellIndex idx = build_cell_index(cells);
    const nn::Tensor buffer = nn::scatter_mean_rows(f, idx.compact, idx.cells.size());
    const auto oracle = scatter_oracle(f, cells);
    ASSERT_EQ(idx.cells.size(), oracle.size());
    std::size_t g = 0;
    for (const auto& [cell, vals] : oracle) {
      ASSERT_EQ(idx.cells[g], cell);
      for (std::size_t c = 0; c < 8; ++c) ASSERT_EQ(buffer.at(g, c), vals[c]);
      ++g;
    }
    for (std::size_t p = 0; p < n; ++p)
      if (cells[p] < 0) {
        EXPECT_EQ(idx.compact[p], -1);
      }
  }
}

TEST(CartesianConnection, PixelsOutsideGridGatherZeros) {
  nn::ParameterStore store;
  nn::Rng rng(9);
  const nn::Linear connect(store, "c", 9, 8, rng);
  fill(connect.bias, 1.0);  // nonzero output for every touched cell
  const nn::Tensor f = testing::random_tensor({3, 8}, rng, false);
  const nn::Tensor out = cartesian_connection(f, build_cell_index({-1, 4, -1}), connect);
  for (std::size_t c = 0; c < 8; ++c) {
    EXPECT_EQ(out.at(0, c), 0.0);
    EXPECT_EQ(out.at(2, c), 0.0);
  }
}

// ---------------------------------------------------------------- finalize

/// A straight lanelet along +x starting at `start`, long enough for a full raster.
map::Lanelet straight_lanelet(std::int64_t id, Vec2 start, double length = 20.0) {
  return map::Lanelet(id, testing::straight(start, {start.x + length, start.y}, 6));
}

TEST(FinalizeProba, ZeroHeadGivesHalfWithDefaultShape) {
  ModelConfig cfg;
  cfg.channels = 8;
  nn::ParameterStore store;
  nn::Rng rng(10);
  HeatmapDecoder dec(store, cfg, rng);
  fill(dec.head.weight, 0.0);
  fill(dec.head.bias, 0.0);
  const map::Lanelet lane = straight_lanelet(0, {-3.1, 0.3});
  const Pose2 frame{{0.0, 0.0}, 0.0};
  const HeatmapGrid grid = HeatmapGrid::centered(frame, cfg.output_range, cfg.resolution);
  const nn::Tensor enc = testing::random_tensor({1, cfg.channels}, rng, false);
  const auto out = dec.decode(enc, {0}, {&lane}, grid, frame);
  ASSERT_EQ(out.raster_proba.shape(), (nn::Shape{40 * 8, 1}));
  for (std::size_t p = 0; p < out.raster_proba.size(); ++p) EXPECT_EQ(out.raster_proba[p], 0.5);
}

TEST(FinalizeProba, RaisingBiasRaisesEveryPixel) {
  nn::ParameterStore store;
  nn::Rng rng(11);
  const nn::Linear head(store, "h", 21, 1, rng);
  const nn::Tensor x = testing::random_tensor({50, 21}, rng, false);
  const nn::Tensor lo = finalize_proba(x, head);
  head.bias.node()->value[0] += 0.3;
  const nn::Tensor hi = finalize_proba(x, head);
  for (std::size_t p = 0; p < 50; ++p) {
    EXPECT_GT(hi[p], lo[p]);
    EXPECT_GT(lo[p], 0.0);
    EXPECT_LT(hi[p], 1.0);
  }
}

// ---------------------------------------------------------------- projection

TEST(ProjectHeatmap, NoRastersGiveZeroGrid) {
  HeatmapGrid grid = HeatmapGrid::centered({{1.0, 2.0}, 0.3}, 16.0, 0.5);
  std::fill(grid.values.begin(), grid.values.end(), 0.9);
  const HeatmapGrid out = project_heatmap({}, grid);
  for (double v : out.values) EXPECT_EQ(v, 0.0);
}

TEST(ProjectHeatmap, ConstantRasterFillsExactlyTheCorridor) {
  const ModelConfig cfg;
  const Pose2 frame{{0.0, 0.0}, 0.0};
  const HeatmapGrid grid = HeatmapGrid::centered(frame, 16.0, 0.5);  // origin (-8, -8)
  const Vec2 start{-5.1, 0.3};
  const map::Lanelet lane = straight_lanelet(3, start);
  const RasterGeometry geo = raster_geometry(lane, grid, frame, cfg);
  // Corridor enumeration: pixel (i, j) centre at start + ((i+.5) res, -2 + (j+.5) res).
  std::set<std::int64_t> corridor;
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      const double x = start.x + (i + 0.5) * 0.5, y = start.y - 2.0 + (j + 0.5) * 0.5;
      const double cx = std::floor((x + 8.0) / 0.5), cy = std::floor((y + 8.0) / 0.5);
      const bool inside = cx >= 0 && cy >= 0 && cx < 32 && cy < 32;
      const std::int64_t cell = inside ? static_cast<std::int64_t>(cy * 32 + cx) : -1;
      EXPECT_EQ(geo.cells[i * 8 + j], cell) << i << "," << j;
      if (cell >= 0) corridor.insert(cell);
    }
  LaneRaster r{3, 40, 8, geo.cells, std::vector<double>(320, 0.375)};
  const HeatmapGrid out = project_heatmap({r}, grid);
  for (std::size_t c = 0; c < out.size(); ++c)
    EXPECT_EQ(out.values[c], corridor.count(static_cast<std::int64_t>(c)) ? 0.375 : 0.0);
}

TEST(ProjectHeatmap, OverlapAverages) {
  const HeatmapGrid grid = HeatmapGrid::centered({{0, 0}, 0.0}, 4.0, 0.5);
  const LaneRaster a{1, 1, 2, {5, 9}, {0.2, 0.6}};
  const LaneRaster b{2, 1, 2, {5, -1}, {0.7, 0.1}};
  const HeatmapGrid out = project_heatmap({a, b}, grid);
  EXPECT_EQ(out.values[5], (0.2 + 0.7) / 2.0);
  EXPECT_EQ(out.values[9], 0.6);
  double rest = 0.0;
  for (std::size_t c = 0; c < out.size(); ++c)
    if (c != 5 && c != 9) rest += out.values[c];
  EXPECT_EQ(rest, 0.0);
}

TEST(ProjectHeatmap, SparseProjectionMatchesDenseProjection) {
  nn::Rng rng(12);
  const HeatmapGrid grid = HeatmapGrid::centered({{0, 0}, 0.0}, 16.0, 0.5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LaneRaster> rasters;
    std::vector<std::int64_t> all_cells;
    std::vector<double> all_proba;
    for (std::size_t r = 0, k = 1 + rng.index(5); r < k; ++r) {
      LaneRaster lr{static_cast<std::int64_t>(r), 4, 2, {}, {}};
      for (int p = 0; p < 8; ++p) {
        lr.cells.push_back(rng.uniform(0, 1) < 0.1 ? -1 : static_cast<std::int64_t>(rng.index(40)));
        lr.proba.push_back(rng.uniform(0, 1));
      }
      all_cells.insert(all_cells.end(), lr.cells.begin(), lr.cells.end());
      all_proba.insert(all_proba.end(), lr.proba.begin(), lr.proba.end());
      rasters.push_back(lr);
    }
    const CellIndex idx = build_cell_index(all_cells);
    const nn::Tensor sparse = project_sparse(nn::Tensor::from({all_proba.size(), 1}, all_proba), idx);
    const HeatmapGrid dense = project_heatmap(rasters, grid);
    const HeatmapGrid back = densify(grid, idx.cells, sparse);
    for (std::size_t c = 0; c < grid.size(); ++c) ASSERT_EQ(back.values[c], dense.values[c]);
  }
}

TEST(ProjectHeatmap, SizeMismatchIsShapeError) {
  const HeatmapGrid grid = HeatmapGrid::centered({{0, 0}, 0.0}, 4.0, 0.5);
  EXPECT_THROW(project_heatmap({LaneRaster{1, 1, 2, {1, 2}, {0.5}}}, grid), ShapeError);
}

// ---------------------------------------------------------------- target

TEST(TargetHeatmap, PeakAndOneSigmaValue) {
  const HeatmapGrid grid = HeatmapGrid::centered({{0, 0}, 0.0}, 16.0, 0.5);
  const Vec2 gt = grid.pixel_center(10, 12);
  const auto y = target_heatmap(gt, grid, 1.0);
  ASSERT_TRUE(y.has_value());
  EXPECT_EQ(y->at(10, 12), 1.0);
  EXPECT_DOUBLE_EQ(y->at(10, 14), std::exp(-0.5));
  EXPECT_NEAR(y->at(10, 14), 0.6065, 1e-4);
  for (double v : y->values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(TargetHeatmap, OffCentreGtStillHasUnitPeak) {
  const HeatmapGrid grid = HeatmapGrid::centered({{0.4, -0.2}, 0.7}, 16.0, 0.5);
  const Vec2 gt{1.13, 0.91};
  const auto y = target_heatmap(gt, grid, 1.0);
  ASSERT_TRUE(y.has_value());
  const auto cell = static_cast<std::size_t>(grid.cell_of(gt));
  EXPECT_EQ(y->values[cell], 1.0);
  EXPECT_EQ(*std::max_element(y->values.begin(), y->values.end()), 1.0);
}

TEST(TargetHeatmap, MassMatchesGaussianIntegral) {
  const HeatmapGrid grid = HeatmapGrid::centered({{0, 0}, 0.0}, 64.0, 0.5);
  const double sigma = 2.0;
  const auto y = target_heatmap(grid.pixel_center(64, 64), grid, sigma);
  ASSERT_TRUE(y.has_value());
  const double mass = std::accumulate(y->values.begin(), y->values.end(), 0.0);
  const double expected = 2.0 * std::numbers::pi * sigma * sigma / (0.5 * 0.5);
  EXPECT_NEAR(mass / expected, 1.0, 1e-3);
}

TEST(TargetHeatmap, OutsideGridAndBadSigma) {
  const HeatmapGrid grid = HeatmapGrid::centered({{0, 0}, 0.0}, 16.0, 0.5);
  EXPECT_FALSE(target_heatmap({9.0, 0.0}, grid, 1.0).has_value());
  EXPECT_THROW(target_heatmap({0.0, 0.0}, grid, 0.0), ConfigError);
}

// ---------------------------------------------------------------- loss

TEST(CombinedLoss, SinglePositivePixelAndRankingTerm) {
  const nn::Tensor yhat = nn::Tensor::from({1, 1}, {0.5}, true);
  const nn::Tensor scores = nn::Tensor::from({2, 1}, {0.5, 0.5}, true);
  const LossTerms t = combined_loss(yhat, {1.0}, scores, {1.0, 0.0});
  EXPECT_NEAR(t.focal, -0.25 * std::log(0.5), 1e-15);
  EXPECT_NEAR(t.focal, 0.1733, 1e-4);
  EXPECT_NEAR(t.ranking, std::log(2.0), 1e-15);
  EXPECT_NEAR(t.total.item(), t.focal + 1e-2 * std::log(2.0), 1e-15);
}

TEST(CombinedLoss, SparseEvaluationEqualsDenseLoss) {
  const ModelConfig cfg = tiny_config();
  const GohomeModel model(cfg, 13);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Scene s = tiny_scene();
    for (auto& p : s.gt_future) p.y += 0.37 * static_cast<double>(seed);
    const ScenePass pass = run_scene(s, model, 0);
    const auto sparse = scene_loss(s, model, pass);
    ASSERT_TRUE(sparse.has_value());
    const HeatmapGrid dense = densify(pass.grid, pass.decoded.index.cells, pass.decoded.cell_proba);
    const double sigma = cfg.sigma_px * cfg.resolution;
    const auto y = target_heatmap(s.gt_endpoint(), pass.grid, sigma);
    ASSERT_TRUE(y.has_value());
    const nn::Tensor yhat = nn::Tensor::from({dense.size(), 1}, dense.values);
    const LossTerms full = combined_loss(yhat, y->values, pass.scores, lane_labels(pass.inputs, s.gt_endpoint()));
    EXPECT_NEAR(sparse->focal, full.focal, 1e-12 * std::abs(full.focal));
    EXPECT_NEAR(sparse->total.item(), full.total.item(), 1e-12 * std::abs(full.total.item()));
  }
}

// ---------------------------------------------------------------- decode

TEST(Decode, SkippedRastersLeaveOtherCellsUnchanged) {
  ModelConfig cfg;
  cfg.channels = 16;
  cfg.input_range = 0.0;
  const GohomeModel model(cfg, 14);
  gen::GeneratorConfig g;
  g.scene_count = 3;
  g.seed = 21;
  for (const Scene& s : gen::generate(g)) {
    nn::NoGradGuard guard;
    const ScenePass all = run_scene(s, model, 0);
    const std::size_t l = all.inputs.num_lanes();
    ASSERT_GT(l, 6u);
    const ScenePass top = run_scene(s, model, 6);
    ASSERT_EQ(top.decoded.rows.size(), 6u);
    // Cells touched by the rasters that top-k dropped.
    std::set<std::size_t> kept(top.decoded.rows.begin(), top.decoded.rows.end());
    std::set<std::int64_t> dropped_cells;
    const std::size_t px = cfg.raster_h() * cfg.raster_w();
    for (std::size_t k = 0; k < all.decoded.rows.size(); ++k) {
      if (kept.count(all.decoded.rows[k])) continue;
      for (std::size_t p = k * px; p < (k + 1) * px; ++p) {
        const std::int64_t c = all.decoded.index.compact[p];
        if (c >= 0) dropped_cells.insert(all.decoded.index.cells[static_cast<std::size_t>(c)]);
      }
    }
    const HeatmapGrid full = densify(all.grid, all.decoded.index.cells, all.decoded.cell_proba);
    const HeatmapGrid part = densify(top.grid, top.decoded.index.cells, top.decoded.cell_proba);
    std::size_t compared = 0;
    for (std::int64_t c : top.decoded.index.cells) {
      if (dropped_cells.count(c)) continue;
      ASSERT_EQ(part.values[static_cast<std::size_t>(c)], full.values[static_cast<std::size_t>(c)]);
      ++compared;
    }
    EXPECT_GT(compared, 0u);
    EXPECT_LT(top.decode_macs, all.decode_macs);
  }
}

TEST(Decode, RuntimeMacsMatchAnalyticalCount) {
  const ModelConfig cfg = tiny_config();
  const GohomeModel model(cfg, 15);
  const Scene s = tiny_scene();
  for (std::size_t k : {0u, 1u, 2u}) {
    const std::uint64_t before = nn::MacCounter::value();
    const ScenePass pass = run_scene(s, model, k);
    const std::uint64_t total = nn::MacCounter::value() - before;
    const std::size_t decoded = pass.decoded.rows.size();
    EXPECT_EQ(pass.decode_macs, decoder_macs(cfg, 3, decoded, pass.decoded.index.cells.size()));
    EXPECT_EQ(total, analytical_scene_macs(pass.inputs, cfg, decoded, pass.decoded.index.cells.size()));
  }
}

TEST(Decode, ProbabilitiesStayInUnitInterval) {
  const ModelConfig cfg = tiny_config();
  const GohomeModel model(cfg, 16);
  const auto [hm, macs] = predict_heatmap(tiny_scene(), model, 0);
  EXPECT_GT(macs, 0u);
  EXPECT_EQ(hm.rows, 32u);
  for (double v : hm.values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Decode, EndToEndGradientsMatchFiniteDifferences) {
  const ModelConfig cfg = tiny_config();
  const GohomeModel model(cfg, 17);
  const Scene s = tiny_scene();
  std::vector<std::pair<std::string, nn::Tensor>> params;
  for (const auto& [name, t] : model.parameters().entries())
    if (name.rfind("trajectory", 0) != 0) params.emplace_back(name, t);
  ASSERT_FALSE(params.empty());
  const auto loss = [&] {
    const ScenePass pass = run_scene(s, model, 0);
    return scene_loss(s, model, pass)->total;
  };
  const auto r = testing::grad_check(params, loss, 1e-6, 8);
  EXPECT_LT(r.joint_relative, 1e-4) << "worst tensor " << r.worst << " at " << r.max_relative;
}

// ---------------------------------------------------------------- export

TEST(Export, PgmAndSidecarRoundTrip) {
  HeatmapGrid grid = HeatmapGrid::centered({{3.25, -1.5}, 0.4}, 8.0, 0.5);
  nn::Rng rng(18);
  for (double& v : grid.values) v = rng.uniform(0.0, 1.0);
  grid.values[0] = 0.0;
  grid.values[1] = 1.0;
  const auto dir = std::filesystem::temp_directory_path() / "gohome_export_test";
  std::filesystem::create_directories(dir);
  export_heatmap(dir / "scene_a", grid);
  const HeatmapGrid back = import_heatmap(dir / "scene_a");
  EXPECT_TRUE(back.same_geometry(grid));
  ASSERT_EQ(back.values.size(), grid.values.size());
  for (std::size_t c = 0; c < grid.size(); ++c) EXPECT_LE(std::abs(back.values[c] - grid.values[c]), 0.5 / 65535.0);
  EXPECT_EQ(back.values[0], 0.0);
  EXPECT_EQ(back.values[1], 1.0);
  EXPECT_THROW(import_heatmap(dir / "missing"), IoError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace gohome
