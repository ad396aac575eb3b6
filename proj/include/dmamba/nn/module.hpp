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
 * @file module.hpp
 * @brief Parameter containers: a Module base with named, hierarchical
 * parameters, weight initializers, and the Conv2d / Linear / LayerNorm layers.
 *
 * Modules are neither copyable nor movable; children are registered by
 * reference (members) or owned through unique_ptr, and a parent stores plain
 * pointers to them.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dmamba/core/conv.hpp"
#include "dmamba/core/norm.hpp"
#include "dmamba/core/tensor.hpp"
#include "dmamba/core/tensor_io.hpp"

namespace dmamba::nn {

using Rng = std::mt19937_64;

namespace init {

template <typename T>
Tensor<T> uniform(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v));
}

/// Normal(0, std) redrawn until it falls inside +-2 std.
template <typename T>
Tensor<T> trunc_normal(Shape shape, double std, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std);
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) {
    double s;
    do s = dist(rng);
    while (std::abs(s) > 2 * std);
    x = static_cast<T>(s);
  }
  return Tensor<T>(std::move(shape), std::move(v));
}

}  // namespace init

/// Weight initialization scheme for Conv2d and Linear.
enum class Init {
  kFanInUniform,  // U(+-1/sqrt(fan_in)) for weight and bias
  kTruncNormal,   // weight ~ truncated N(0, 0.02), bias 0
  kZeros,         // weight and bias 0
};

template <typename T>
class Module {
 public:
  using NamedTensors = io::NamedTensors<T>;

  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  /// Every parameter, prefixed by its module path ("stage1.conv.weight").
  NamedTensors named_parameters() const {
    NamedTensors out;
    collect("", out);
    return out;
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  std::int64_t num_parameters() const {
    std::int64_t n = 0;
    for (auto& [name, t] : named_parameters()) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& t : parameters()) t.zero_grad();
  }

  /// Copies values in by name. Missing, extra, or mis-shaped entries throw.
  void load_parameters(const NamedTensors& entries) {
    std::unordered_map<std::string, const Tensor<T>*> by_name;
    for (auto& [name, t] : entries) by_name[name] = &t;
    auto mine = named_parameters();
    if (mine.size() != entries.size()) {
      throw std::runtime_error("load_parameters: expected " + std::to_string(mine.size()) + " tensors, got " +
                               std::to_string(entries.size()));
    }
    for (auto& [name, t] : mine) {
      auto it = by_name.find(name);
      if (it == by_name.end()) throw std::runtime_error("load_parameters: missing " + name);
      if (it->second->shape() != t.shape()) {
        throw std::runtime_error("load_parameters: " + name + " has shape " + shape_str(it->second->shape()) +
                                 ", expected " + shape_str(t.shape()));
      }
      std::copy(it->second->data().begin(), it->second->data().end(), t.data().begin());
    }
  }

 protected:
  Tensor<T> register_parameter(std::string name, Tensor<T> t) {
    t.set_requires_grad(true);
    params_.emplace_back(std::move(name), t);
    return t;
  }

  template <typename M>
  M& register_module(std::string name, M& child) {
    children_.emplace_back(std::move(name), &child);
    return child;
  }

  template <typename M>
  M& register_module(std::string name, std::unique_ptr<M> child) {
    M& ref = *child;
    owned_.push_back(std::move(child));
    return register_module(std::move(name), ref);
  }

 private:
  void collect(const std::string& prefix, NamedTensors& out) const {
    for (auto& [name, t] : params_) out.emplace_back(prefix + name, t);
    for (auto& [name, child] : children_) child->collect(prefix + name + ".", out);
  }

  NamedTensors params_;
  std::vector<std::pair<std::string, Module*>> children_;
  std::vector<std::unique_ptr<Module>> owned_;
};

template <typename T>
class Conv2d : public Module<T> {
 public:
  struct Options {
    std::int64_t kernel = 3;
    int stride = 1;
    int padding = -1;  // -1: same padding for odd kernels at stride 1
    int groups = 1;
    bool bias = true;
    Init init = Init::kFanInUniform;
  };

  Conv2d(std::int64_t in, std::int64_t out, Options opt, Rng& rng) : in_(in), out_(out), opt_(opt) {
    if (in % opt.groups || out % opt.groups) throw ShapeError("Conv2d: channels not divisible by groups");
    if (opt_.padding < 0) opt_.padding = static_cast<int>(opt.kernel / 2);
    const Shape wshape{out, in / opt.groups, opt.kernel, opt.kernel};
    const double fan_in = static_cast<double>(in / opt.groups * opt.kernel * opt.kernel);
    switch (opt.init) {
      case Init::kFanInUniform:
        weight_ = this->register_parameter("weight", init::uniform<T>(wshape, 1 / std::sqrt(fan_in), rng));
        if (opt.bias) bias_ = this->register_parameter("bias", init::uniform<T>({out}, 1 / std::sqrt(fan_in), rng));
        break;
      case Init::kTruncNormal:
        weight_ = this->register_parameter("weight", init::trunc_normal<T>(wshape, 0.02, rng));
        if (opt.bias) bias_ = this->register_parameter("bias", Tensor<T>::zeros({out}));
        break;
      case Init::kZeros:
        weight_ = this->register_parameter("weight", Tensor<T>::zeros(wshape));
        if (opt.bias) bias_ = this->register_parameter("bias", Tensor<T>::zeros({out}));
        break;
    }
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, weight_, bias_, {.stride = opt_.stride, .padding = opt_.padding, .groups = opt_.groups});
  }

  Tensor<T>& weight() { return weight_; }
  std::optional<Tensor<T>>& bias() { return bias_; }
  std::int64_t in_channels() const { return in_; }
  std::int64_t out_channels() const { return out_; }

 private:
  std::int64_t in_, out_;
  Options opt_;
  Tensor<T> weight_;
  std::optional<Tensor<T>> bias_;
};

template <typename T>
class Linear : public Module<T> {
 public:
  Linear(std::int64_t in, std::int64_t out, bool bias, Rng& rng, Init scheme = Init::kFanInUniform) {
    const double bound = 1 / std::sqrt(static_cast<double>(in));
    if (scheme == Init::kTruncNormal) {
      weight_ = this->register_parameter("weight", init::trunc_normal<T>({out, in}, 0.02, rng));
      if (bias) bias_ = this->register_parameter("bias", Tensor<T>::zeros({out}));
    } else if (scheme == Init::kZeros) {
      weight_ = this->register_parameter("weight", Tensor<T>::zeros({out, in}));
      if (bias) bias_ = this->register_parameter("bias", Tensor<T>::zeros({out}));
    } else {
      weight_ = this->register_parameter("weight", init::uniform<T>({out, in}, bound, rng));
      if (bias) bias_ = this->register_parameter("bias", init::uniform<T>({out}, bound, rng));
    }
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight_, bias_); }
  Tensor<T>& weight() { return weight_; }
  std::optional<Tensor<T>>& bias() { return bias_; }

 private:
  Tensor<T> weight_;
  std::optional<Tensor<T>> bias_;
};

/// Affine layer normalization over a feature axis (gamma = 1, beta = 0 at init).
template <typename T>
class LayerNorm : public Module<T> {
 public:
  explicit LayerNorm(std::int64_t features)
      : gamma_(this->register_parameter("weight", Tensor<T>::ones({features}))),
        beta_(this->register_parameter("bias", Tensor<T>::zeros({features}))) {}

  /// Normalizes over the last dimension.
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma_, beta_); }
  /// Normalizes NCHW input over channels.
  Tensor<T> channels(const Tensor<T>& x) const { return channel_norm(x, gamma_, beta_); }

 private:
  Tensor<T> gamma_, beta_;
};

}  // namespace dmamba::nn
