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

// AdamW, global-norm clipping and the warmup + polynomial learning-rate schedule.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dmamba/core/tensor.hpp"

namespace dmamba::train {

/// Linear warmup from 0 to `base` over `warmup` steps, then
/// base * (1 - (t - warmup) / (total - warmup))^power, reaching 0 at `total`.
struct LrSchedule {
  double base = 6e-5;
  std::int64_t warmup = 0;
  std::int64_t total = 1;
  double power = 0.9;

  void validate() const {
    if (!(base > 0)) throw std::invalid_argument("lr must be positive");
    if (total < 1 || warmup < 0 || warmup > total) throw std::invalid_argument("need 0 <= warmup <= total, total >= 1");
  }

  double operator()(std::int64_t t) const {
    if (t <= 0) return warmup > 0 ? 0.0 : base;
    if (t >= total) return 0.0;
    if (t < warmup) return base * static_cast<double>(t) / static_cast<double>(warmup);
    const double frac = static_cast<double>(t - warmup) / static_cast<double>(total - warmup);
    return base * std::pow(1.0 - frac, power);
  }
};

/// Scales gradients so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
template <typename T>
double clip_grad_norm(std::vector<Tensor<T>>& params, double max_norm) {
  double sq = 0;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / (norm + 1e-6));
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (T& g : p.grad()) g *= scale;
    }
  }
  return norm;
}

/// Adam with decoupled weight decay. Decay applies to tensors of rank > 1
/// (weights), leaving biases, norms and scan vectors undecayed.
template <typename T>
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW(std::vector<Tensor<T>> params, Options opt) : params_(std::move(params)), opt_(opt) {
    for (auto& p : params_) {
      m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
      v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      const double decay = p.rank() > 1 ? opt_.weight_decay : 0.0;
      auto w = p.data();
      auto g = p.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        m[j] = opt_.beta1 * m[j] + (1 - opt_.beta1) * gj;
        v[j] = opt_.beta2 * v[j] + (1 - opt_.beta2) * gj * gj;
        const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + opt_.eps);
        w[j] = static_cast<T>(static_cast<double>(w[j]) * (1 - lr * decay) - lr * update);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }
  std::int64_t steps() const { return t_; }

 private:
  std::vector<Tensor<T>> params_;
  Options opt_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace dmamba::train
