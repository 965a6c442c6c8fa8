// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Single-threaded deterministic training: per-epoch shuffle, mini-batches
// with gradients summed over scenes and divided by the batch size, Adam with
// the step-halving learning-rate schedule.

#include <chrono>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gohome/error.hpp"
#include "gohome/model.hpp"
#include "gohome/nn/adam.hpp"
#include "gohome/nn/layers.hpp"
#include "gohome/nn/train_config.hpp"
#include "gohome/predictor.hpp"
#include "gohome/scene.hpp"

namespace gohome {

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;     // mean combined loss over supervised scenes
  double focal = 0.0;
  double ranking = 0.0;
  double trajectory = 0.0;  // mean squared waypoint error, m²
  std::size_t scenes = 0;
  std::size_t skipped = 0;  // gt endpoint outside the grid
  std::size_t clamped = 0;  // predictions clamped away from 0/1
  double seconds = 0.0;
  std::optional<MetricReport> validation;
};

struct TrainOptions {
  nn::TrainConfig schedule;
  /// Validation scenes evaluated after every `validate_every` epochs (0: never).
  std::size_t validate_every = 0;
  PredictOptions predict;
};

/// Predicts and evaluates a scene set at MR/minFDE/minADE for k in {1, predict.k}.
inline MetricReport evaluate_model(const GohomeModel& model, const std::vector<Scene>& scenes,
                                   const PredictOptions& opt, double threshold = 2.0) {
  std::vector<ScenePrediction> preds;
  std::vector<std::vector<Vec2>> gts;
  for (const Scene& s : scenes) {
    preds.push_back(to_scene_prediction(s, predict(s, model, opt)));
    gts.push_back(s.gt_future);
  }
  std::vector<std::size_t> ks{1};
  if (opt.k > 1) ks.push_back(opt.k);
  return evaluate(preds, gts, ks, threshold);
}

/// Keeps large freed buffers in the heap instead of returning them to the
/// system, so per-scene tensors of a few MB stop page-faulting on every pass.
/// Process-wide; a no-op outside glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

/// Trains in place. `on_epoch` receives each epoch's statistics. A
/// non-finite loss aborts with NumericError naming the scene.
inline std::vector<EpochStats> train(GohomeModel& model, const std::vector<Scene>& train_set,
                                     const std::vector<Scene>* validation, const TrainOptions& opt,
                                     const std::function<void(const EpochStats&)>& on_epoch = {}) {
  opt.schedule.validate();
  if (train_set.empty()) throw InputError("training set is empty");
  tune_allocator();
  nn::Adam adam(model.parameters().tensors());
  nn::Rng shuffle_rng(opt.schedule.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<EpochStats> history;

  for (std::size_t epoch = 0; epoch < opt.schedule.total_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochStats st;
    st.epoch = epoch;
    st.lr = nn::scheduled_lr(opt.schedule.initial_lr, opt.schedule.lr_halving_epochs, epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);

    const std::size_t batch = opt.schedule.batch_size;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      const std::size_t b1 = std::min(order.size(), b0 + batch);
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      model.parameters().zero_grad();
      for (std::size_t b = b0; b < b1; ++b) {
        const Scene& scene = train_set[order[b]];
        const ScenePass pass = run_scene(scene, model, 0);
        const std::optional<LossTerms> loss = scene_loss(scene, model, pass);
        const nn::Tensor traj = trajectory_loss(scene, model, pass.inputs.frame);
        if (!std::isfinite(traj.item()) || (loss && !std::isfinite(loss->total.item())))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " on scene " + scene.scene_id +
                             " (combined " + (loss ? std::to_string(loss->total.item()) : std::string("n/a")) +
                             ", trajectory " + std::to_string(traj.item()) + ")");
        nn::Tensor total = nn::scale(traj, inv);
        if (loss) {
          total = nn::add_scalars(total, loss->total, 1.0, inv);
          st.loss += loss->total.item();
          st.focal += loss->focal;
          st.ranking += loss->ranking;
          st.clamped += loss->clamped;
          ++st.scenes;
        } else {
          ++st.skipped;
        }
        st.trajectory += traj.item();
        nn::backward(total);
      }
      adam.step(st.lr);
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, st.scenes));
    st.loss /= n;
    st.focal /= n;
    st.ranking /= n;
    st.trajectory /= static_cast<double>(train_set.size());
    if (validation && opt.validate_every != 0 && (epoch + 1) % opt.validate_every == 0)
      st.validation = evaluate_model(model, *validation, opt.predict);
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_epoch) on_epoch(st);
    history.push_back(st);
  }
  return history;
}

}  // namespace gohome
