// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gohome/error.hpp"
#include "gohome/nn/ops.hpp"
#include "gohome/nn/tensor.hpp"

namespace gohome::nn {

/// Seeded generator with a portable uniform draw (libstdc++'s distributions
/// are not specified bit-for-bit).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    // Box-Muller; avoids log(0).
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Ordered, named collection of trainable tensors.
class ParameterStore {
 public:
  Tensor create(const std::string& name, Shape shape, std::vector<double> values) {
    for (const auto& [n, t] : params_)
      if (n == name) throw StateError("parameter '" + name + "' registered twice");
    Tensor t = Tensor::from(std::move(shape), std::move(values), true);
    params_.emplace_back(name, t);
    return t;
  }
  /// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
  Tensor uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(numel(shape));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return create(name, std::move(shape), std::move(v));
  }
  Tensor constant(const std::string& name, Shape shape, double value) {
    const std::size_t n = numel(shape);
    return create(name, std::move(shape), std::vector<double>(n, value));
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return params_; }
  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : params_) out.push_back(t);
    return out;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
  }
  void zero_grad() {
    for (auto& [n, t] : params_) t.zero_grad();
  }
  Tensor find(const std::string& name) const {
    for (const auto& [n, t] : params_)
      if (n == name) return t;
    throw InputError("no parameter named '" + name + "'");
  }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
};

struct Linear {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out)
  std::string name;

  Linear() = default;
  Linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
         bool with_bias = true)
      : name(prefix) {
    weight = store.uniform(prefix + ".weight", {in, out}, in, rng);
    if (with_bias) bias = store.uniform(prefix + ".bias", {out}, in, rng);
  }
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias, name.c_str()); }
};

struct LayerNorm {
  Tensor gamma, beta;
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& prefix, std::size_t width) {
    gamma = store.constant(prefix + ".gamma", {width}, 1.0);
    beta = store.constant(prefix + ".beta", {width}, 0.0);
  }
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

/// Shared 1D convolution followed by a gated recurrent cell; summarizes each
/// of `batch` sequences into its final hidden state.
struct SequenceEncoder {
  std::size_t taps = 3;
  std::size_t channels = 0;
  Tensor conv_weight, conv_bias;
  Linear input_proj;   // C -> 3C
  Linear hidden_proj;  // C -> 3C

  SequenceEncoder() = default;
  SequenceEncoder(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t c, Rng& rng)
      : channels(c) {
    conv_weight = store.uniform(prefix + ".conv.weight", {taps * in, c}, taps * in, rng);
    conv_bias = store.uniform(prefix + ".conv.bias", {c}, taps * in, rng);
    input_proj = Linear(store, prefix + ".gru.input", c, 3 * c, rng);
    hidden_proj = Linear(store, prefix + ".gru.hidden", c, 3 * c, rng);
  }

  /// x is (batch*steps, in) with masked steps zeroed; mask (batch*steps) in
  /// {0,1}, empty for all-valid. Masked steps leave the hidden state intact.
  Tensor operator()(const Tensor& x, std::size_t batch, std::size_t steps, const std::vector<double>& mask = {}) const {
    const Tensor conv = relu(conv1d(x, batch, steps, conv_weight, conv_bias));
    const Tensor gx = input_proj(conv);
    Tensor h = Tensor::zeros({batch, channels});
    for (std::size_t t = 0; t < steps; ++t) {
      std::vector<std::int64_t> rows(batch);
      std::vector<double> m(batch, 1.0);
      bool any = mask.empty();
      for (std::size_t b = 0; b < batch; ++b) {
        rows[b] = static_cast<std::int64_t>(b * steps + t);
        if (!mask.empty()) {
          m[b] = mask[b * steps + t];
          any = any || m[b] != 0.0;
        }
      }
      if (!any) continue;
      const Tensor gxt = gather_rows(gx, std::move(rows));
      const Tensor hn = gru_gates(gxt, hidden_proj(h), h);
      h = mask.empty() ? hn : blend_rows(std::move(m), hn, h);
    }
    return h;
  }
};

/// Single-head attention with a residual connection, layer norm and ReLU:
/// relu(LN(query + Wo · attn(Wq query, Wk context, Wv context))).
struct AttentionBlock {
  Linear q, k, v, o;
  LayerNorm norm;

  AttentionBlock() = default;
  AttentionBlock(ParameterStore& store, const std::string& prefix, std::size_t c, Rng& rng)
      : q(store, prefix + ".q", c, c, rng),
        k(store, prefix + ".k", c, c, rng),
        v(store, prefix + ".v", c, c, rng),
        o(store, prefix + ".o", c, c, rng),
        norm(store, prefix + ".norm", c) {}

  Tensor operator()(const Tensor& query, const Tensor& context) const {
    const Tensor att = attention(q(query), k(context), v(context), canonical_row_order(context));
    return relu(norm(add(query, o(att))));
  }
};

/// F <- relu(LN(F W + Σ_r A_r F W_r)).
struct GraphConvLayer {
  Tensor w;
  std::vector<Tensor> w_rel;  // predecessor, successor, left, right
  LayerNorm norm;

  GraphConvLayer() = default;
  GraphConvLayer(ParameterStore& store, const std::string& prefix, std::size_t c, Rng& rng) {
    w = store.uniform(prefix + ".w", {c, c}, c, rng);
    static constexpr const char* kNames[] = {"w_pred", "w_succ", "w_left", "w_right"};
    for (const char* n : kNames) w_rel.push_back(store.uniform(prefix + "." + n, {c, c}, c, rng));
    norm = LayerNorm(store, prefix + ".norm", c);
  }
  std::size_t channels() const { return w.dim(0); }

  Tensor convolve(const Tensor& f, const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& edges) const {
    return graph_conv(f, w, w_rel, edges);
  }
  Tensor operator()(const Tensor& f, const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& edges) const {
    return relu(norm(convolve(f, edges)));
  }
};

}  // namespace gohome::nn
