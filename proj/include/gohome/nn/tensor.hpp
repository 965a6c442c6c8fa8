// SPDX-FileCopyrightText: Copyright (c) 2026 The gohome Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dense float64 tensors with reverse-mode differentiation.
//
// Every op allocates a fresh node holding its value; when gradient recording
// is enabled and an input requires grad, the node keeps its inputs and a
// closure that pushes the output gradient back into them. `backward(loss)`
// walks the recorded graph once in reverse topological order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gohome/error.hpp"

namespace gohome::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
  return out + ")";
}

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same size as value
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
inline std::uint64_t& mac_count() {
  thread_local std::uint64_t count = 0;
  return count;
}
}  // namespace detail

/// Disables graph recording for its lifetime (inference on frozen weights).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

/// Multiply-adds executed by contraction loops on this thread.
struct MacCounter {
  static std::uint64_t value() { return detail::mac_count(); }
  static void reset() { detail::mac_count() = 0; }
  static void add(std::uint64_t n) { detail::mac_count() += n; }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (numel(shape) != values.size())
      throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t count = numel(shape);
    return from(std::move(shape), std::vector<double>(count, 0.0), requires_grad);
  }
  static Tensor scalar(double v) { return from({1}, {v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return rank() == 1 ? 1 : node_->shape[0]; }
  std::size_t cols() const { return node_->shape.back(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double item() const {
    if (size() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
  }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

/// Creates an output node; records inputs and the backward closure only when
/// an input needs a gradient and recording is on.
inline Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                          std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_mode()) {
    for (const Tensor& t : inputs)
      if (t.defined() && t.requires_grad()) n->requires_grad = true;
    if (n->requires_grad) {
      for (const Tensor& t : inputs) n->inputs.push_back(t.node_ptr());
      n->backward_fn = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

inline Tensor make_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                          std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_mode()) {
    for (const Tensor& t : inputs)
      if (t.defined() && t.requires_grad()) n->requires_grad = true;
    if (n->requires_grad) {
      for (const Tensor& t : inputs) n->inputs.push_back(t.node_ptr());
      n->backward_fn = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

/// Gradient buffer of an input, or nullptr when it does not need one.
inline double* grad_of(const std::shared_ptr<Node>& n) {
  if (!n || !n->requires_grad) return nullptr;
  n->ensure_grad();
  return n->grad.data();
}

}  // namespace detail

/// Runs reverse-mode accumulation from a scalar loss into every reachable
/// node that requires grad. Parameter gradients accumulate across calls on
/// different losses; calling twice on the same loss is a StateError.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ShapeError("backward: loss must be a scalar, got shape " + (loss.defined() ? shape_str(loss.shape()) : "()"));
  Node* root = loss.node();
  if (root->backward_done) throw StateError("backward: graph already consumed; build a new loss first");
  if (!root->requires_grad) throw StateError("backward: loss does not depend on any parameter");

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && !seen.contains(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
  root->backward_done = true;
  // Release intermediate graph memory; leaves keep their gradients.
  for (Node* n : order) {
    if (n->backward_fn) {
      n->backward_fn = nullptr;
      n->inputs.clear();
    }
  }
}

}  // namespace gohome::nn
