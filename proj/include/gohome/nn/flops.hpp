// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Analytical multiply-add counts. Only contraction work is counted (the same
// loops that feed MacCounter at runtime); elementwise ops, normalizations and
// activations count as zero.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

namespace gohome::nn::flops {

using Count = std::uint64_t;

inline Count linear(std::size_t batch, std::size_t in, std::size_t out) { return Count{batch} * in * out; }

inline Count conv1d(std::size_t batch, std::size_t steps, std::size_t taps, std::size_t cin, std::size_t cout) {
  return Count{batch} * steps * taps * cin * cout;
}

/// Input projection over all steps plus one hidden projection per step in
/// which at least one sequence is valid.
inline Count gru(std::size_t batch, std::size_t active_steps, std::size_t all_steps, std::size_t c) {
  return linear(batch * all_steps, c, 3 * c) + Count{active_steps} * linear(batch, c, 3 * c);
}

/// Scores plus weighted sum; projections are separate linear layers.
inline Count attention(std::size_t queries, std::size_t keys, std::size_t d, std::size_t dv) {
  return Count{queries} * keys * (d + dv);
}

/// F W over all rows, F W_r over the distinct sources of each relation, and
/// one C-wide accumulation per edge.
inline Count graph_conv(std::size_t l, std::size_t c,
                        const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& edges) {
  Count total = Count{l} * c * c;
  for (const auto& rel : edges) {
    std::set<std::pair<std::size_t, std::size_t>> unique(rel.begin(), rel.end());
    std::set<std::size_t> sources;
    for (auto [i, j] : unique) sources.insert(j);
    total += Count{sources.size()} * c * c + Count{unique.size()} * c;
  }
  return total;
}

}  // namespace gohome::nn::flops
