// Copyright 2026 The DMamba Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

/**
 * @file tensor.hpp
 * @brief Dense row-major tensor with a reverse-mode autodiff tape.
 *
 * Every op that consumes a tensor requiring gradients records a node holding
 * its parents and a backward closure. Nodes carry a monotonically increasing
 * sequence number, so replaying the reachable nodes in descending sequence
 * order is a valid reverse topological order (the tape, replayed backwards).
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace dmamba {

using Shape = std::vector<std::int64_t>;

/// Raised for any shape or argument contract violation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
class Tensor;

namespace autograd {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

inline std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

/// Disables graph recording for its lifetime (evaluation, finite differences).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace autograd

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;

  // Graph record. Leaves have no backward_fn.
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  T* grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad.data();
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Impl = TensorImpl<T>;

  Tensor() : impl_(std::make_shared<Impl>()) {}

  Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " +
                       std::to_string(values.size()) + " values");
    }
    for (auto d : shape) {
      if (d < 0) throw ShapeError("tensor: negative extent in " + shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }
  static Tensor full(Shape shape, T value) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value));
  }
  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T* ptr() { return impl_->data.data(); }
  const T* ptr() const { return impl_->data.data(); }
  std::vector<T>& values() { return impl_->data; }
  const std::vector<T>& values() const { return impl_->data; }

  T item() const {
    if (impl_->data.size() != 1) {
      throw ShapeError("item: tensor has " + std::to_string(impl_->data.size()) + " elements");
    }
    return impl_->data[0];
  }

  bool has_grad() const { return impl_->grad.size() == impl_->data.size() && !impl_->data.empty(); }
  std::span<T> grad() { return std::span<T>(impl_->grad_buffer(), impl_->data.size()); }
  std::span<const T> grad() const {
    return std::span<const T>(impl_->grad_buffer(), impl_->data.size());
  }
  void zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), T(0)); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool flag = true) {
    impl_->requires_grad = flag;
    return *this;
  }
  bool is_leaf() const { return !impl_->backward_fn; }
  const char* op_name() const { return impl_->op; }

  /// Deep copy of the values; the copy is a fresh leaf.
  Tensor clone() const { return Tensor(impl_->shape, impl_->data); }
  /// Leaf sharing nothing with the graph (values copied).
  Tensor detach() const { return clone(); }

  const std::shared_ptr<Impl>& impl() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  void backward();

 private:
  std::shared_ptr<Impl> impl_;
};

/// Records `out` as produced by `inputs` when any of them requires gradients.
/// `fn` receives the output node and must accumulate into the parents' grads.
template <typename T>
Tensor<T> record(Tensor<T> out, const std::vector<Tensor<T>>& inputs, const char* op,
                 std::function<void(TensorImpl<T>&)> fn) {
  if (!autograd::grad_mode()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& impl = *out.impl();
  impl.requires_grad = true;
  impl.op = op;
  impl.seq = autograd::next_sequence();
  impl.parents.reserve(inputs.size());
  for (const auto& in : inputs) impl.parents.push_back(in.impl());
  impl.backward_fn = std::move(fn);
  return out;
}

template <typename T>
Tensor<T> record(Tensor<T> out, std::initializer_list<Tensor<T>> inputs, const char* op,
                 std::function<void(TensorImpl<T>&)> fn) {
  return record(std::move(out), std::vector<Tensor<T>>(inputs), op, std::move(fn));
}

/// Gradient buffer of parent `i` if it participates in differentiation,
/// otherwise nullptr.
template <typename T>
T* parent_grad(TensorImpl<T>& node, std::size_t i) {
  auto& p = *node.parents.at(i);
  return p.requires_grad ? p.grad_buffer() : nullptr;
}

template <typename T>
void Tensor<T>::backward() {
  if (impl_->data.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(impl_->shape));
  }
  if (!impl_->requires_grad) {
    throw std::runtime_error("backward: loss is detached from every differentiable leaf");
  }
  std::vector<Impl*> order;
  std::vector<Impl*> stack{impl_.get()};
  std::unordered_set<const Impl*> seen;
  auto visited = [&](const Impl* p) { return seen.count(p) != 0; };
  while (!stack.empty()) {
    Impl* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (n->backward_fn) order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && !visited(p.get())) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const Impl* a, const Impl* b) { return a->seq > b->seq; });
  impl_->grad_buffer()[0] += T(1);
  for (Impl* n : order) {
    n->grad_buffer();
    n->backward_fn(*n);
  }
  // Release the recorded graph. Parent links are moved out first so no node
  // is destroyed while the loop still refers to it.
  std::vector<std::shared_ptr<Impl>> released;
  for (Impl* n : order) {
    n->backward_fn = nullptr;
    for (auto& p : n->parents) released.push_back(std::move(p));
    n->parents.clear();
  }
}

template <typename T>
Tensor<T> make_tensor(Shape shape, std::vector<T> values) {
  return Tensor<T>(std::move(shape), std::move(values));
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

/// Converts values between precisions (leaf result).
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> v(t.data().begin(), t.data().end());
  return Tensor<To>(t.shape(), std::move(v));
}

}  // namespace dmamba
