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

// Central-difference verification of analytic gradients (64-bit only).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "dmamba/core/tensor.hpp"

namespace dmamba {

struct GradCheckOptions {
  double eps = 1e-5;
  /// 0 checks every coordinate; otherwise a seeded random subset per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t coords_checked = 0;
  std::size_t worst_input = 0;
  std::int64_t worst_index = -1;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

/// Compares d loss / d input from backward() with (f(x+eps) - f(x-eps)) / 2eps.
/// Error per coordinate is |a - n| / max(1, |a|, |n|); the max is returned.
/// `loss_fn` must rebuild the scalar loss from the current input values.
template <typename F>
GradCheckResult grad_check(F&& loss_fn, std::vector<Tensor<double>> inputs, const GradCheckOptions& opt = {}) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tensor<double> loss = loss_fn();
  if (!std::isfinite(loss.item())) throw std::runtime_error("grad_check: non-finite loss");
  loss.backward();

  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs) {
    auto g = in.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  auto eval = [&]() {
    autograd::NoGradGuard guard;
    const double v = loss_fn().item();
    if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss under perturbation");
    return v;
  };

  std::mt19937_64 rng(opt.seed);
  GradCheckResult res;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].data();
    std::vector<std::int64_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opt.max_coords_per_input && coords.size() > opt.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (auto i : coords) {
      const auto ui = static_cast<std::size_t>(i);
      const double saved = values[ui];
      values[ui] = saved + opt.eps;
      const double fp = eval();
      values[ui] = saved - opt.eps;
      const double fm = eval();
      values[ui] = saved;
      const double numeric = (fp - fm) / (2 * opt.eps);
      const double a = analytic[t][ui];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++res.coords_checked;
      if (err > res.max_rel_error || res.worst_index < 0) {
        if (err >= res.max_rel_error) {
          res.max_rel_error = err;
          res.worst_input = t;
          res.worst_index = i;
          res.worst_analytic = a;
          res.worst_numeric = numeric;
        }
      }
    }
  }
  return res;
}

}  // namespace dmamba
