// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gohome/nn/tensor.hpp"

namespace gohome::nn {

namespace detail {

inline void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// out(m, n) += a(m, k) * b(k, n); counts m*k*n multiply-adds. Each output
// element accumulates its k products in ascending p.
inline void gemm_acc(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  if (n == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double acc = out[i];
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p];
      out[i] = acc;
    }
    MacCounter::add(m * k);
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  MacCounter::add(m * k * n);
}

// ga(m, k) += g(m, n) * b(k, n)^T
inline void gemm_grad_a(const double* g, const double* b, double* ga, std::size_t m, std::size_t k, std::size_t n) {
  if (m < 4) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* grow = g + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
        ga[i * k + p] += acc;
      }
    }
    return;
  }
  // Transposed copy of b turns the row update into contiguous axpy passes.
  std::vector<double> bt(k * n);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* garow = ga + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double gv = grow[j];
      if (gv == 0.0) continue;
      const double* btrow = bt.data() + j * k;
      for (std::size_t p = 0; p < k; ++p) garow[p] += gv * btrow[p];
    }
  }
}

// gb(k, n) += a(m, k)^T * g(m, n)
inline void gemm_grad_b(const double* a, const double* g, double* gb, std::size_t m, std::size_t k, std::size_t n) {
  if (n == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      const double gv = g[i];
      if (gv == 0.0) continue;
      const double* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) gb[p] += arow[p] * gv;
    }
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* gbrow = gb + p * n;
      for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------- structure

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  std::vector<double> v(a.values().begin(), a.values().end());
  return detail::make_result(std::move(shape), std::move(v), {a}, [](Node& self) {
    if (double* ga = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

/// Concatenates matrices with equal row counts along columns.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const Tensor& p : parts) {
    detail::require_rank2(p, "concat_cols");
    if (p.rows() != m) throw ShapeError("concat_cols: row count mismatch");
    n += p.cols();
  }
  std::vector<double> v(m * n);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(p.values().data() + i * c, c, v.data() + i * n + off);
    off += c;
  }
  return detail::make_result({m, n}, std::move(v), parts, [m, n](Node& self) {
    std::size_t off = 0;
    for (auto& in : self.inputs) {
      const std::size_t c = in->shape.back();
      if (double* g = detail::grad_of(in))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * n + off + j];
      off += c;
    }
  });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const Tensor& p : parts) {
    detail::require_rank2(p, "concat_rows");
    if (p.cols() != n) throw ShapeError("concat_rows: column count mismatch");
    m += p.rows();
  }
  std::vector<double> v;
  v.reserve(m * n);
  for (const Tensor& p : parts) v.insert(v.end(), p.values().begin(), p.values().end());
  return detail::make_result({m, n}, std::move(v), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& in : self.inputs) {
      if (double* g = detail::grad_of(in))
        for (std::size_t i = 0; i < in->value.size(); ++i) g[i] += self.grad[off + i];
      off += in->value.size();
    }
  });
}

inline Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  detail::require_rank2(a, "slice_cols");
  if (start + count > a.cols()) throw ShapeError("slice_cols: range exceeds " + shape_str(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> v(m * count);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(a.values().data() + i * n + start, count, v.data() + i * count);
  return detail::make_result({m, count}, std::move(v), {a}, [m, n, start, count](Node& self) {
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) g[i * n + start + j] += self.grad[i * count + j];
  });
}

/// Row i of the result is row index[i] of `a`, or zeros for a negative index.
inline Tensor gather_rows(const Tensor& a, std::vector<std::int64_t> index) {
  detail::require_rank2(a, "gather_rows");
  const std::size_t n = a.cols(), m = index.size();
  std::vector<double> v(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (index[i] < 0) continue;
    if (static_cast<std::size_t>(index[i]) >= a.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy_n(a.values().data() + static_cast<std::size_t>(index[i]) * n, n, v.data() + i * n);
  }
  return detail::make_result({m, n}, std::move(v), {a}, [idx = std::move(index), n](Node& self) {
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0) continue;
        double* grow = g + static_cast<std::size_t>(idx[i]) * n;
        for (std::size_t j = 0; j < n; ++j) grow[j] += self.grad[i * n + j];
      }
  });
}

/// Mean of the rows of `a` grouped by index (negative index: dropped), in
/// input row order. Rows of groups that receive nothing are zero.
inline Tensor scatter_mean_rows(const Tensor& a, std::vector<std::int64_t> index, std::size_t groups) {
  detail::require_rank2(a, "scatter_mean_rows");
  if (index.size() != a.rows()) throw ShapeError("scatter_mean_rows: index length differs from row count");
  const std::size_t n = a.cols();
  std::vector<double> v(groups * n, 0.0);
  std::vector<double> count(groups, 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0) continue;
    const auto gi = static_cast<std::size_t>(index[i]);
    if (gi >= groups) throw ShapeError("scatter_mean_rows: group index out of range");
    count[gi] += 1.0;
    for (std::size_t j = 0; j < n; ++j) v[gi * n + j] += a.values()[i * n + j];
  }
  for (std::size_t g = 0; g < groups; ++g)
    if (count[g] > 0.0)
      for (std::size_t j = 0; j < n; ++j) v[g * n + j] /= count[g];
  return detail::make_result({groups, n}, std::move(v), {a},
                             [idx = std::move(index), cnt = std::move(count), n](Node& self) {
                               if (double* g = detail::grad_of(self.inputs[0]))
                                 for (std::size_t i = 0; i < idx.size(); ++i) {
                                   if (idx[i] < 0) continue;
                                   const auto gi = static_cast<std::size_t>(idx[i]);
                                   for (std::size_t j = 0; j < n; ++j)
                                     g[i * n + j] += self.grad[gi * n + j] / cnt[gi];
                                 }
                             });
}

/// Repeats a (1, C) row n times.
inline Tensor broadcast_rows(const Tensor& a, std::size_t n) {
  detail::require_rank2(a, "broadcast_rows");
  if (a.rows() != 1) throw ShapeError("broadcast_rows: expected a single row, got " + shape_str(a.shape()));
  const std::size_t c = a.cols();
  std::vector<double> v(n * c);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(a.values().data(), c, v.data() + i * c);
  return detail::make_result({n, c}, std::move(v), {a}, [n, c](Node& self) {
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
  });
}

/// For each of k rasters, sums a longitudinal (h, c) component and a lateral
/// (w, c) component with broadcast: out[(r*h + i)*w + j][ch] =
/// lon[r][i*c + ch] + lat[r][j*c + ch]. Inputs are (k, h*c) and (k, w*c).
inline Tensor broadcast_sum_raster(const Tensor& lon, const Tensor& lat, std::size_t h, std::size_t w,
                                   std::size_t c) {
  detail::require_rank2(lon, "broadcast_sum_raster");
  detail::require_rank2(lat, "broadcast_sum_raster");
  const std::size_t k = lon.rows();
  if (lat.rows() != k || lon.cols() != h * c || lat.cols() != w * c)
    throw ShapeError("broadcast_sum_raster: expected (k, h*c) and (k, w*c), got " + shape_str(lon.shape()) + " and " +
                     shape_str(lat.shape()));
  std::vector<double> v(k * h * w * c);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double* lo = lon.values().data() + r * h * c + i * c;
        const double* la = lat.values().data() + r * w * c + j * c;
        double* o = v.data() + ((r * h + i) * w + j) * c;
        for (std::size_t ch = 0; ch < c; ++ch) o[ch] = lo[ch] + la[ch];
      }
  return detail::make_result({k * h * w, c}, std::move(v), {lon, lat}, [k, h, w, c](Node& self) {
    double* glon = detail::grad_of(self.inputs[0]);
    double* glat = detail::grad_of(self.inputs[1]);
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const double* g = self.grad.data() + ((r * h + i) * w + j) * c;
          for (std::size_t ch = 0; ch < c; ++ch) {
            if (glon) glon[r * h * c + i * c + ch] += g[ch];
            if (glat) glat[r * w * c + j * c + ch] += g[ch];
          }
        }
  });
}

// ---------------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  return detail::make_result(a.shape(), std::move(v), {a, b}, [](Node& self) {
    for (auto& in : self.inputs)
      if (double* g = detail::grad_of(in))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  return detail::make_result(a.shape(), std::move(v), {a, b}, [](Node& self) {
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = detail::grad_of(self.inputs[1]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  return detail::make_result(a.shape(), std::move(v), {a, b}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (double* g = detail::grad_of(self.inputs[1]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

inline Tensor scale(const Tensor& a, double k) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * k;
  return detail::make_result(a.shape(), std::move(v), {a}, [k](Node& self) {
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * k;
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] > 0.0 ? a[i] : 0.0;
  return detail::make_result(a.shape(), std::move(v), {a}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (av[i] > 0.0) g[i] += self.grad[i];
  });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = sigmoid_scalar(a[i]);
  return detail::make_result(a.shape(), v, {a}, [y = v](Node& self) {
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * y[i] * (1.0 - y[i]);
  });
}

inline Tensor tanh(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a[i]);
  return detail::make_result(a.shape(), v, {a}, [y = v](Node& self) {
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * (1.0 - y[i] * y[i]);
  });
}

/// mask ⊙ a + (1 - mask) ⊙ b with a constant per-row mask in {0, 1}.
inline Tensor blend_rows(std::vector<double> row_mask, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "blend_rows");
  detail::require_rank2(a, "blend_rows");
  if (row_mask.size() != a.rows()) throw ShapeError("blend_rows: mask length differs from row count");
  const std::size_t n = a.cols();
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* src = row_mask[i] != 0.0 ? a.values().data() : b.values().data();
    std::copy_n(src + i * n, n, v.data() + i * n);
  }
  return detail::make_result(a.shape(), std::move(v), {a, b}, [mask = std::move(row_mask), n](Node& self) {
    double* ga = detail::grad_of(self.inputs[0]);
    double* gb = detail::grad_of(self.inputs[1]);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      double* g = mask[i] != 0.0 ? ga : gb;
      if (!g) continue;
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j];
    }
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return detail::make_result({1}, {s}, {a}, [](Node& self) {
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < self.inputs[0]->value.size(); ++i) g[i] += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

inline Tensor add_scalars(const Tensor& a, const Tensor& b, double wa = 1.0, double wb = 1.0) {
  if (a.size() != 1 || b.size() != 1) throw ShapeError("add_scalars: expected scalars");
  return detail::make_result({1}, {wa * a[0] + wb * b[0]}, {a, b}, [wa, wb](Node& self) {
    if (double* g = detail::grad_of(self.inputs[0])) g[0] += wa * self.grad[0];
    if (double* g = detail::grad_of(self.inputs[1])) g[0] += wb * self.grad[0];
  });
}

// ---------------------------------------------------------------- contractions

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> v(m * n, 0.0);
  detail::gemm_acc(a.values().data(), b.values().data(), v.data(), m, k, n);
  return detail::make_result({m, n}, std::move(v), {a, b}, [m, k, n](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (double* ga = detail::grad_of(self.inputs[0])) detail::gemm_grad_a(self.grad.data(), bv.data(), ga, m, k, n);
    if (double* gb = detail::grad_of(self.inputs[1])) detail::gemm_grad_b(av.data(), self.grad.data(), gb, m, k, n);
  });
}

/// x (m, in) * weight (in, out) + bias (out); bias may be undefined.
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias, const char* name = "linear") {
  if (x.rank() != 2 || weight.rank() != 2 || x.cols() != weight.rows())
    throw ShapeError(std::string(name) + ": input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  const std::size_t m = x.rows(), k = x.cols(), n = weight.cols();
  if (bias.defined() && bias.size() != n)
    throw ShapeError(std::string(name) + ": bias " + shape_str(bias.shape()) + " does not match output width");
  std::vector<double> v(m * n, 0.0);
  detail::gemm_acc(x.values().data(), weight.values().data(), v.data(), m, k, n);
  if (bias.defined())
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) v[i * n + j] += bias[j];
  return detail::make_result({m, n}, std::move(v), {x, weight, bias}, [m, k, n](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    if (double* gx = detail::grad_of(self.inputs[0])) detail::gemm_grad_a(self.grad.data(), wv.data(), gx, m, k, n);
    if (double* gw = detail::grad_of(self.inputs[1])) detail::gemm_grad_b(xv.data(), self.grad.data(), gw, m, k, n);
    if (double* gb = detail::grad_of(self.inputs[2]))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
  });
}

/// 'Same'-padded 1D convolution over `batch` sequences of length `steps`
/// stored as rows of x (batch*steps, cin). weight is (taps*cin, cout) with
/// tap q reading position t + q - taps/2; positions outside a sequence read
/// zero.
inline Tensor conv1d(const Tensor& x, std::size_t batch, std::size_t steps, const Tensor& weight, const Tensor& bias) {
  detail::require_rank2(x, "conv1d");
  detail::require_rank2(weight, "conv1d");
  const std::size_t cin = x.cols(), cout = weight.cols();
  if (x.rows() != batch * steps) throw ShapeError("conv1d: input rows " + std::to_string(x.rows()) + " != batch*steps");
  if (weight.rows() % cin != 0) throw ShapeError("conv1d: weight " + shape_str(weight.shape()) + " incompatible with input width");
  const std::size_t taps = weight.rows() / cin;
  const auto half = static_cast<std::ptrdiff_t>(taps / 2);
  std::vector<double> v(batch * steps * cout, 0.0);
  const double* xv = x.values().data();
  const double* wv = weight.values().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < steps; ++t) {
      double* o = v.data() + (b * steps + t) * cout;
      for (std::size_t q = 0; q < taps; ++q) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(q) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) {
          MacCounter::add(cin * cout);  // zero padding still costs a tap
          continue;
        }
        detail::gemm_acc(xv + (b * steps + static_cast<std::size_t>(src)) * cin, wv + q * cin * cout, o, 1, cin, cout);
      }
      if (bias.defined())
        for (std::size_t j = 0; j < cout; ++j) o[j] += bias[j];
    }
  return detail::make_result(
      {batch * steps, cout}, std::move(v), {x, weight, bias}, [batch, steps, cin, cout, taps, half](Node& self) {
        const auto& xv = self.inputs[0]->value;
        const auto& wv = self.inputs[1]->value;
        double* gx = detail::grad_of(self.inputs[0]);
        double* gw = detail::grad_of(self.inputs[1]);
        double* gb = detail::grad_of(self.inputs[2]);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t t = 0; t < steps; ++t) {
            const double* g = self.grad.data() + (b * steps + t) * cout;
            for (std::size_t q = 0; q < taps; ++q) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(q) - half;
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
              const std::size_t row = b * steps + static_cast<std::size_t>(src);
              if (gx) detail::gemm_grad_a(g, wv.data() + q * cin * cout, gx + row * cin, 1, cin, cout);
              if (gw) detail::gemm_grad_b(xv.data() + row * cin, g, gw + q * cin * cout, 1, cin, cout);
            }
            if (gb)
              for (std::size_t j = 0; j < cout; ++j) gb[j] += g[j];
          }
      });
}

/// Gated recurrent update from precomputed input projections gx = x Wx + bx
/// and hidden projections gh = h Wh + bh, both (B, 3C) laid out as
/// [reset | update | candidate]:
///   r = σ(gx_r + gh_r), z = σ(gx_z + gh_z), n = tanh(gx_n + r ⊙ gh_n),
///   h' = (1 - z) ⊙ n + z ⊙ h.
inline Tensor gru_gates(const Tensor& gx, const Tensor& gh, const Tensor& h) {
  detail::require_rank2(h, "gru_cell");
  const std::size_t bsz = h.rows(), c = h.cols();
  if (gx.rank() != 2 || gh.rank() != 2 || gx.rows() != bsz || gh.rows() != bsz || gx.cols() != 3 * c || gh.cols() != 3 * c)
    throw ShapeError("gru_cell: gate projections must be (B, 3C) for hidden " + shape_str(h.shape()));
  std::vector<double> out(bsz * c), r(bsz * c), z(bsz * c), nn(bsz * c);
  for (std::size_t i = 0; i < bsz; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t o = i * c + j, g = i * 3 * c;
      r[o] = sigmoid_scalar(gx[g + j] + gh[g + j]);
      z[o] = sigmoid_scalar(gx[g + c + j] + gh[g + c + j]);
      nn[o] = std::tanh(gx[g + 2 * c + j] + r[o] * gh[g + 2 * c + j]);
      out[o] = (1.0 - z[o]) * nn[o] + z[o] * h[o];
    }
  return detail::make_result({bsz, c}, std::move(out), {gx, gh, h},
                             [bsz, c, r = std::move(r), z = std::move(z), nn = std::move(nn)](Node& self) {
                               const auto& ghv = self.inputs[1]->value;
                               const auto& hv = self.inputs[2]->value;
                               double* ggx = detail::grad_of(self.inputs[0]);
                               double* ggh = detail::grad_of(self.inputs[1]);
                               double* gh0 = detail::grad_of(self.inputs[2]);
                               for (std::size_t i = 0; i < bsz; ++i)
                                 for (std::size_t j = 0; j < c; ++j) {
                                   const std::size_t o = i * c + j, g = i * 3 * c;
                                   const double go = self.grad[o];
                                   const double dn = go * (1.0 - z[o]);
                                   const double dz = go * (hv[o] - nn[o]);
                                   const double dn_pre = dn * (1.0 - nn[o] * nn[o]);
                                   const double dr = dn_pre * ghv[g + 2 * c + j];
                                   const double dr_pre = dr * r[o] * (1.0 - r[o]);
                                   const double dz_pre = dz * z[o] * (1.0 - z[o]);
                                   if (ggx) {
                                     ggx[g + j] += dr_pre;
                                     ggx[g + c + j] += dz_pre;
                                     ggx[g + 2 * c + j] += dn_pre;
                                   }
                                   if (ggh) {
                                     ggh[g + j] += dr_pre;
                                     ggh[g + c + j] += dz_pre;
                                     ggh[g + 2 * c + j] += dn_pre * r[o];
                                   }
                                   if (gh0) gh0[o] += go * z[o];
                                 }
                             });
}

/// Per-row layer normalization followed by an affine rescale.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-10) {
  detail::require_rank2(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.size() != n || beta.size() != n) throw ShapeError("layer_norm: affine parameters do not match width");
  std::vector<double> xhat(m * n), inv_std(m), out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = gamma[j] * xhat[i * n + j] + beta[j];
    }
  }
  return detail::make_result({m, n}, std::move(out), {x, gamma, beta},
                             [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                               const auto& gv = self.inputs[1]->value;
                               double* gx = detail::grad_of(self.inputs[0]);
                               double* gg = detail::grad_of(self.inputs[1]);
                               double* gb = detail::grad_of(self.inputs[2]);
                               std::vector<double> dxhat(n);
                               for (std::size_t i = 0; i < m; ++i) {
                                 const double* g = self.grad.data() + i * n;
                                 double sum_d = 0.0, sum_dx = 0.0;
                                 for (std::size_t j = 0; j < n; ++j) {
                                   dxhat[j] = g[j] * gv[j];
                                   sum_d += dxhat[j];
                                   sum_dx += dxhat[j] * xhat[i * n + j];
                                   if (gg) gg[j] += g[j] * xhat[i * n + j];
                                   if (gb) gb[j] += g[j];
                                 }
                                 if (gx) {
                                   const double inv_n = 1.0 / static_cast<double>(n);
                                   for (std::size_t j = 0; j < n; ++j)
                                     gx[i * n + j] +=
                                         inv_std[i] * (dxhat[j] - inv_n * sum_d - xhat[i * n + j] * inv_n * sum_dx);
                                 }
                               }
                             });
}

/// Row order of `a` sorted lexicographically by value. Summing over rows in
/// this order makes reductions independent of how the rows are labelled.
inline std::vector<std::size_t> canonical_row_order(const Tensor& a) {
  detail::require_rank2(a, "canonical_row_order");
  const std::size_t n = a.cols();
  std::vector<std::size_t> order(a.rows());
  std::iota(order.begin(), order.end(), 0);
  const double* v = a.values().data();
  std::stable_sort(order.begin(), order.end(), [v, n](std::size_t x, std::size_t y) {
    return std::lexicographical_compare(v + x * n, v + x * n + n, v + y * n, v + y * n + n);
  });
  return order;
}

/// Single-head scaled dot-product attention softmax(q k^T / sqrt(d)) v.
/// Reductions over keys follow `key_order` (identity when empty).
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::vector<std::size_t> key_order = {}) {
  detail::require_rank2(q, "attention");
  detail::require_rank2(k, "attention");
  detail::require_rank2(v, "attention");
  const std::size_t nq = q.rows(), nk = k.rows(), d = q.cols(), dv = v.cols();
  if (k.cols() != d || v.rows() != nk || nk == 0)
    throw ShapeError("attention: incompatible q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                     shape_str(v.shape()));
  if (key_order.empty()) {
    key_order.resize(nk);
    std::iota(key_order.begin(), key_order.end(), 0);
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> p(nq * nk), out(nq * dv, 0.0);
  for (std::size_t i = 0; i < nq; ++i) {
    double* prow = p.data() + i * nk;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nk; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += q.values()[i * d + c] * k.values()[j * d + c];
      prow[j] = s * inv_sqrt_d;
      mx = std::max(mx, prow[j]);
    }
    MacCounter::add(nk * d);
    double denom = 0.0;
    for (std::size_t j = 0; j < nk; ++j) prow[j] = std::exp(prow[j] - mx);
    for (std::size_t j : key_order) denom += prow[j];
    for (std::size_t j = 0; j < nk; ++j) prow[j] /= denom;
    double* orow = out.data() + i * dv;
    for (std::size_t j : key_order) {
      const double* vrow = v.values().data() + j * dv;
      for (std::size_t c = 0; c < dv; ++c) orow[c] += prow[j] * vrow[c];
    }
    MacCounter::add(nk * dv);
  }
  return detail::make_result({nq, dv}, std::move(out), {q, k, v},
                             [nq, nk, d, dv, inv_sqrt_d, p = std::move(p)](Node& self) {
                               const auto& qv = self.inputs[0]->value;
                               const auto& kv = self.inputs[1]->value;
                               const auto& vv = self.inputs[2]->value;
                               double* gq = detail::grad_of(self.inputs[0]);
                               double* gk = detail::grad_of(self.inputs[1]);
                               double* gvv = detail::grad_of(self.inputs[2]);
                               std::vector<double> dp(nk), ds(nk);
                               for (std::size_t i = 0; i < nq; ++i) {
                                 const double* g = self.grad.data() + i * dv;
                                 const double* prow = p.data() + i * nk;
                                 double dot = 0.0;
                                 for (std::size_t j = 0; j < nk; ++j) {
                                   double acc = 0.0;
                                   for (std::size_t c = 0; c < dv; ++c) acc += g[c] * vv[j * dv + c];
                                   dp[j] = acc;
                                   dot += acc * prow[j];
                                   if (gvv)
                                     for (std::size_t c = 0; c < dv; ++c) gvv[j * dv + c] += prow[j] * g[c];
                                 }
                                 for (std::size_t j = 0; j < nk; ++j) ds[j] = prow[j] * (dp[j] - dot) * inv_sqrt_d;
                                 for (std::size_t j = 0; j < nk; ++j) {
                                   if (gq)
                                     for (std::size_t c = 0; c < d; ++c) gq[i * d + c] += ds[j] * kv[j * d + c];
                                   if (gk)
                                     for (std::size_t c = 0; c < d; ++c) gk[j * d + c] += ds[j] * qv[i * d + c];
                                 }
                               }
                             });
}

/// Relation-typed graph convolution out = F W + Σ_r A_r F W_r with A_r given
/// as edge lists (i, j). F W_r is only evaluated for rows that are the source
/// of an r-edge; each row's neighbour contributions are summed in ascending
/// neighbour index before being added to F W.
inline Tensor graph_conv(const Tensor& f, const Tensor& w, const std::vector<Tensor>& w_rel,
                         const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& edges) {
  detail::require_rank2(f, "graph_conv");
  const std::size_t l = f.rows(), c = f.cols();
  if (w.rank() != 2 || w.rows() != c || w.cols() != c)
    throw ShapeError("graph_conv: weight " + shape_str(w.shape()) + " does not match features " + shape_str(f.shape()));
  if (w_rel.size() != edges.size()) throw ShapeError("graph_conv: one weight per relation required");
  for (const Tensor& wr : w_rel)
    if (wr.rank() != 2 || wr.rows() != c || wr.cols() != c)
      throw ShapeError("graph_conv: relation weight " + shape_str(wr.shape()) + " is not (C, C)");

  struct RelationPlan {
    std::vector<std::size_t> sources;                            // unique source rows, ascending
    std::vector<std::vector<std::size_t>> incoming;              // per target row: positions in sources
    std::vector<double> projected;                               // (|sources|, c)
  };
  std::vector<RelationPlan> plans(edges.size());
  std::vector<double> out(l * c, 0.0);
  detail::gemm_acc(f.values().data(), w.values().data(), out.data(), l, c, c);

  for (std::size_t r = 0; r < edges.size(); ++r) {
    RelationPlan& plan = plans[r];
    if (edges[r].empty()) continue;
    std::vector<std::pair<std::size_t, std::size_t>> sorted = edges[r];
    for (auto [i, j] : sorted)
      if (i >= l || j >= l) throw ShapeError("graph_conv: adjacency edge outside (L, L) with L=" + std::to_string(l));
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (auto [i, j] : sorted) plan.sources.push_back(j);
    std::sort(plan.sources.begin(), plan.sources.end());
    plan.sources.erase(std::unique(plan.sources.begin(), plan.sources.end()), plan.sources.end());
    std::vector<double> gathered(plan.sources.size() * c);
    for (std::size_t s = 0; s < plan.sources.size(); ++s)
      std::copy_n(f.values().data() + plan.sources[s] * c, c, gathered.data() + s * c);
    plan.projected.assign(plan.sources.size() * c, 0.0);
    detail::gemm_acc(gathered.data(), w_rel[r].values().data(), plan.projected.data(), plan.sources.size(), c, c);
    plan.incoming.assign(l, {});
    for (auto [i, j] : sorted) {
      const auto pos = static_cast<std::size_t>(
          std::lower_bound(plan.sources.begin(), plan.sources.end(), j) - plan.sources.begin());
      plan.incoming[i].push_back(pos);
    }
    std::vector<double> agg(c);
    for (std::size_t i = 0; i < l; ++i) {
      if (plan.incoming[i].empty()) continue;
      std::fill(agg.begin(), agg.end(), 0.0);
      for (std::size_t pos : plan.incoming[i]) {
        for (std::size_t ch = 0; ch < c; ++ch) agg[ch] += plan.projected[pos * c + ch];
        MacCounter::add(c);
      }
      for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] += agg[ch];
    }
  }

  std::vector<Tensor> inputs{f, w};
  inputs.insert(inputs.end(), w_rel.begin(), w_rel.end());
  return detail::make_result({l, c}, std::move(out), inputs, [l, c, plans = std::move(plans)](Node& self) {
    const auto& fv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    double* gf = detail::grad_of(self.inputs[0]);
    if (gf) detail::gemm_grad_a(self.grad.data(), wv.data(), gf, l, c, c);
    if (double* gw = detail::grad_of(self.inputs[1])) detail::gemm_grad_b(fv.data(), self.grad.data(), gw, l, c, c);
    for (std::size_t r = 0; r < plans.size(); ++r) {
      const auto& plan = plans[r];
      if (plan.sources.empty()) continue;
      const std::size_t ns = plan.sources.size();
      std::vector<double> dproj(ns * c, 0.0);
      for (std::size_t i = 0; i < l; ++i)
        for (std::size_t pos : plan.incoming[i])
          for (std::size_t ch = 0; ch < c; ++ch) dproj[pos * c + ch] += self.grad[i * c + ch];
      const auto& wrv = self.inputs[2 + r]->value;
      if (double* gwr = detail::grad_of(self.inputs[2 + r])) {
        std::vector<double> gathered(ns * c);
        for (std::size_t s = 0; s < ns; ++s) std::copy_n(fv.data() + plan.sources[s] * c, c, gathered.data() + s * c);
        detail::gemm_grad_b(gathered.data(), dproj.data(), gwr, ns, c, c);
      }
      if (gf) {
        std::vector<double> dg(ns * c, 0.0);
        detail::gemm_grad_a(dproj.data(), wrv.data(), dg.data(), ns, c, c);
        for (std::size_t s = 0; s < ns; ++s)
          for (std::size_t ch = 0; ch < c; ++ch) gf[plan.sources[s] * c + ch] += dg[s * c + ch];
      }
    }
  });
}

// ---------------------------------------------------------------- losses

inline constexpr double kProbClamp = 1e-7;

/// Pixel-wise focal loss -(1/P) Σ_p (Y_p - Ŷ_p)^2 f(Y_p, Ŷ_p) with
/// f = log Ŷ where Y = 1 and (1 - Y)^4 log(1 - Ŷ) otherwise, over the pixels
/// present in `pred` (P is the full pixel count; absent pixels are treated
/// by the caller). Predictions are clamped to [1e-7, 1 - 1e-7]; `clamped`
/// receives the number of clamped entries.
inline Tensor focal_loss(const Tensor& pred, std::vector<double> target, double pixel_count,
                         std::size_t* clamped = nullptr) {
  if (target.size() != pred.size()) throw ShapeError("focal_loss: target size differs from prediction size");
  double total = 0.0;
  std::size_t nclamp = 0;
  std::vector<double> dldp(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double yh = pred[i];
    bool was_clamped = false;
    if (yh < kProbClamp) {
      yh = kProbClamp;
      was_clamped = true;
    } else if (yh > 1.0 - kProbClamp) {
      yh = 1.0 - kProbClamp;
      was_clamped = true;
    }
    nclamp += was_clamped;
    const double y = target[i];
    const double diff = y - yh;
    double term = 0.0, dterm = 0.0;
    if (y == 1.0) {
      term = diff * diff * std::log(yh);
      dterm = -2.0 * diff * std::log(yh) + diff * diff / yh;
    } else {
      const double w4 = std::pow(1.0 - y, 4);
      term = diff * diff * w4 * std::log(1.0 - yh);
      dterm = -2.0 * diff * w4 * std::log(1.0 - yh) - diff * diff * w4 / (1.0 - yh);
    }
    total += term;
    dldp[i] = was_clamped ? 0.0 : -dterm / pixel_count;
  }
  if (clamped) *clamped = nclamp;
  return detail::make_result({1}, {-total / pixel_count}, {pred}, [d = std::move(dldp)](Node& self) {
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += self.grad[0] * d[i];
  });
}

/// Mean binary cross-entropy of probabilities against {0,1} labels.
inline Tensor bce_mean(const Tensor& prob, const std::vector<double>& labels) {
  if (labels.size() != prob.size()) throw ShapeError("bce: label count differs from score count");
  double total = 0.0;
  const double n = static_cast<double>(prob.size());
  std::vector<double> d(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const double p = std::clamp(prob[i], kProbClamp, 1.0 - kProbClamp);
    total += -(labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
    d[i] = (prob[i] == p) ? (-(labels[i] / p) + (1.0 - labels[i]) / (1.0 - p)) / n : 0.0;
  }
  return detail::make_result({1}, {total / n}, {prob}, [d = std::move(d)](Node& self) {
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += self.grad[0] * d[i];
  });
}

/// Mean squared error against a constant target.
inline Tensor mse(const Tensor& pred, const std::vector<double>& target) {
  if (target.size() != pred.size()) throw ShapeError("mse: target size differs from prediction size");
  double total = 0.0;
  const double n = static_cast<double>(pred.size());
  std::vector<double> d(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = pred[i] - target[i];
    total += diff * diff;
    d[i] = 2.0 * diff / n;
  }
  return detail::make_result({1}, {total / n}, {pred}, [d = std::move(d)](Node& self) {
    if (double* g = detail::grad_of(self.inputs[0]))
      for (std::size_t i = 0; i < d.size(); ++i) g[i] += self.grad[0] * d[i];
  });
}

}  // namespace gohome::nn
