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
 * @file ss2d.hpp
 * @brief Multi-directional 2D selective-scan block.
 *
 *   x -> in_proj (value | gate) -> depthwise 3x3 -> SiLU
 *     -> for each direction: reorder tokens, selective scan, restore order
 *     -> sum over directions -> LayerNorm -> * SiLU(gate) -> out_proj
 *
 * Every direction owns its projections, A_log and skip vector.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dmamba/core/conv.hpp"
#include "dmamba/core/ops.hpp"
#include "dmamba/nn/module.hpp"
#include "dmamba/ssm/scan.hpp"
#include "dmamba/ssm/scan_path.hpp"

namespace dmamba::ssm {

struct Ss2dConfig {
  std::int64_t d_state = 16;
  double ssm_ratio = 1.0;   // d_inner = ssm_ratio * channels
  std::int64_t dt_rank = 0;  // 0: ceil(channels / 16)
  int directions = 4;        // 1, 2 or 4
  bool gated = true;
  double dt_min = 1e-3;
  double dt_max = 1e-1;
  ScanKernel kernel = ScanKernel::kChunked;

  std::int64_t inner(std::int64_t channels) const {
    return static_cast<std::int64_t>(std::llround(ssm_ratio * static_cast<double>(channels)));
  }
  std::int64_t rank(std::int64_t channels) const { return dt_rank > 0 ? dt_rank : (channels + 15) / 16; }
};

/// Parameters of one scan direction: input-dependent B, C and step size plus
/// the diagonal state matrix and skip coefficients.
template <typename T>
class ScanParams : public nn::Module<T> {
 public:
  ScanParams(std::int64_t d_inner, std::int64_t d_state, std::int64_t dt_rank, const Ss2dConfig& cfg, nn::Rng& rng)
      : d_inner_(d_inner), d_state_(d_state), dt_rank_(dt_rank),
        x_proj_(this->register_module("x_proj",
                                      std::make_unique<nn::Linear<T>>(d_inner, dt_rank + 2 * d_state, false, rng))) {
    dt_weight_ = this->register_parameter(
        "dt_proj.weight", nn::init::uniform<T>({d_inner, dt_rank}, 1 / std::sqrt(static_cast<double>(dt_rank)), rng));
    // Step sizes start log-uniform in [dt_min, dt_max]; the bias stores softplus^-1(dt).
    std::uniform_real_distribution<double> u(std::log(cfg.dt_min), std::log(cfg.dt_max));
    std::vector<T> dt_bias(static_cast<std::size_t>(d_inner));
    for (auto& b : dt_bias) {
      const double dt = std::exp(u(rng));
      b = static_cast<T>(dt + std::log(-std::expm1(-dt)));
    }
    dt_bias_ = this->register_parameter("dt_proj.bias", Tensor<T>({d_inner}, std::move(dt_bias)));
    std::vector<T> a_log(static_cast<std::size_t>(d_inner * d_state));
    for (std::int64_t i = 0; i < d_inner; ++i)
      for (std::int64_t n = 0; n < d_state; ++n) a_log[static_cast<std::size_t>(i * d_state + n)] = static_cast<T>(std::log(n + 1.0));
    a_log_ = this->register_parameter("A_log", Tensor<T>({d_inner, d_state}, std::move(a_log)));
    d_skip_ = this->register_parameter("D", Tensor<T>::ones({d_inner}));
  }

  /// Scans a [B, L, d_inner] sequence already in traversal order.
  Tensor<T> scan(const Tensor<T>& seq, ScanKernel kernel) const {
    auto proj = x_proj_(seq);
    auto dt_low = slice(proj, 2, 0, dt_rank_);
    auto bm = slice(proj, 2, dt_rank_, d_state_);
    auto cm = slice(proj, 2, dt_rank_ + d_state_, d_state_);
    auto delta = softplus(linear(dt_low, dt_weight_, dt_bias_));
    auto a = neg(exp(a_log_));
    return selective_scan(seq, delta, a, bm, cm, d_skip_, kernel);
  }

  nn::Linear<T>& x_proj() { return x_proj_; }
  Tensor<T>& dt_weight() { return dt_weight_; }
  Tensor<T>& dt_bias() { return dt_bias_; }
  Tensor<T>& a_log() { return a_log_; }
  Tensor<T>& d_skip() { return d_skip_; }

 private:
  std::int64_t d_inner_, d_state_, dt_rank_;
  nn::Linear<T>& x_proj_;
  Tensor<T> dt_weight_, dt_bias_, a_log_, d_skip_;
};

template <typename T>
class Ss2d : public nn::Module<T> {
 public:
  Ss2d(std::int64_t channels, const Ss2dConfig& cfg, nn::Rng& rng)
      : cfg_(cfg), channels_(channels), d_inner_(cfg.inner(channels)), dirs_(directions_for(cfg.directions)) {
    if (d_inner_ < 1) throw ShapeError("Ss2d: inner width must be positive");
    const std::int64_t proj_out = cfg.gated ? 2 * d_inner_ : d_inner_;
    in_proj_ = &this->register_module(
        "in_proj", std::make_unique<nn::Conv2d<T>>(channels, proj_out, typename nn::Conv2d<T>::Options{.kernel = 1, .bias = false}, rng));
    dwconv_ = &this->register_module(
        "dwconv", std::make_unique<nn::Conv2d<T>>(d_inner_, d_inner_, typename nn::Conv2d<T>::Options{.kernel = 3, .groups = static_cast<int>(d_inner_)}, rng));
    for (std::size_t k = 0; k < dirs_.size(); ++k) {
      scans_.push_back(&this->register_module(
          "scan" + std::to_string(dirs_[k]),
          std::make_unique<ScanParams<T>>(d_inner_, cfg.d_state, cfg.rank(channels), cfg, rng)));
    }
    norm_ = &this->register_module("norm", std::make_unique<nn::LayerNorm<T>>(d_inner_));
    out_proj_ = &this->register_module("out_proj", std::make_unique<nn::Linear<T>>(d_inner_, channels, false, rng));
  }

  /// Sum over directions of the scanned [B, H*W, d_inner] tokens (pre-norm).
  Tensor<T> scan_sum(const Tensor<T>& tokens, std::int64_t h, std::int64_t w) const {
    if (tokens.rank() != 3 || tokens.dim(1) != h * w || tokens.dim(2) != d_inner_) {
      throw ShapeError("Ss2d: tokens " + shape_str(tokens.shape()) + " do not match grid " + std::to_string(h) +
                       "x" + std::to_string(w));
    }
    std::optional<Tensor<T>> acc;
    for (std::size_t k = 0; k < dirs_.size(); ++k) {
      const ScanPath path = scan_paths(h, w, dirs_[k]);
      auto y = gather_tokens(scans_[k]->scan(gather_tokens(tokens, path.perm), cfg_.kernel), path.inv_perm);
      acc = acc ? add(*acc, y) : y;
    }
    return *acc;
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != channels_) {
      throw ShapeError("Ss2d: expected [N, " + std::to_string(channels_) + ", H, W], got " + shape_str(x.shape()));
    }
    const std::int64_t h = x.dim(2), w = x.dim(3);
    auto xz = (*in_proj_)(x);
    auto xs = cfg_.gated ? slice(xz, 1, 0, d_inner_) : xz;
    xs = silu((*dwconv_)(xs));
    auto y = (*norm_)(scan_sum(to_tokens(xs), h, w));
    if (cfg_.gated) y = mul(y, silu(to_tokens(slice(xz, 1, d_inner_, d_inner_))));
    return from_tokens((*out_proj_)(y), h, w);
  }

  std::int64_t d_inner() const { return d_inner_; }
  const std::vector<int>& directions() const { return dirs_; }
  ScanParams<T>& scan_params(std::size_t k) { return *scans_.at(k); }
  nn::Conv2d<T>& in_proj() { return *in_proj_; }
  nn::Conv2d<T>& dwconv() { return *dwconv_; }

 private:
  Ss2dConfig cfg_;
  std::int64_t channels_, d_inner_;
  std::vector<int> dirs_;
  nn::Conv2d<T>* in_proj_ = nullptr;
  nn::Conv2d<T>* dwconv_ = nullptr;
  std::vector<ScanParams<T>*> scans_;
  nn::LayerNorm<T>* norm_ = nullptr;
  nn::Linear<T>* out_proj_ = nullptr;
};

}  // namespace dmamba::ssm
