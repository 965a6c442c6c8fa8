// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gohome/error.hpp"

namespace gohome::nn {

struct TrainConfig {
  std::size_t batch_size = 32;
  double initial_lr = 1e-3;
  std::vector<std::size_t> lr_halving_epochs = {3, 6, 9, 13};
  std::size_t total_epochs = 16;
  std::size_t channels = 64;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(initial_lr > 0.0)) throw ConfigError("initial_lr must be positive");
    if (total_epochs == 0) throw ConfigError("total_epochs must be positive");
    if (channels == 0) throw ConfigError("channels must be positive");
    if (!std::is_sorted(lr_halving_epochs.begin(), lr_halving_epochs.end()))
      throw ConfigError("lr_halving_epochs must be sorted");
    for (std::size_t e : lr_halving_epochs)
      if (e >= total_epochs)
        throw ConfigError("lr halving epoch " + std::to_string(e) + " outside [0, " + std::to_string(total_epochs) + ")");
  }
};

}  // namespace gohome::nn
