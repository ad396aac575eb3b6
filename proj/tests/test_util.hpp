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

// Shared helpers for the unit suites: seeded random tensors and naive oracles.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dmamba/core/ops.hpp"
#include "dmamba/core/tensor.hpp"

namespace dmamba::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v));
}

template <typename T>
double max_abs_diff(std::span<const T> a, std::span<const T> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  return max_abs_diff<T>(a.data(), b.data());
}

/// Direct seven-loop cross-correlation used as the convolution oracle.
inline std::vector<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& w, const double* bias,
                                        int stride, int pad, int dil, int groups) {
  const auto n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto co = w.dim(0), cig = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const auto ho = (h + 2 * pad - dil * (kh - 1) - 1) / stride + 1;
  const auto wo = (wd + 2 * pad - dil * (kw - 1) - 1) / stride + 1;
  const auto cog = co / groups;
  std::vector<double> out(static_cast<std::size_t>(n * co * ho * wo));
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t o = 0; o < co; ++o)
      for (std::int64_t i = 0; i < ho; ++i)
        for (std::int64_t j = 0; j < wo; ++j) {
          double acc = bias ? bias[o] : 0.0;
          const auto g = o / cog;
          for (std::int64_t c = 0; c < cig; ++c)
            for (std::int64_t u = 0; u < kh; ++u)
              for (std::int64_t v = 0; v < kw; ++v) {
                const auto y = i * stride - pad + u * dil;
                const auto xx = j * stride - pad + v * dil;
                if (y < 0 || y >= h || xx < 0 || xx >= wd) continue;
                acc += x.ptr()[((b * ci + g * cig + c) * h + y) * wd + xx] * w.ptr()[((o * cig + c) * kh + u) * kw + v];
              }
          out[static_cast<std::size_t>(((b * co + o) * ho + i) * wo + j)] = acc;
        }
  return out;
}

/// sum(out * r) for a fixed random r; turns any op into a scalar loss for grad checks.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& out, const Tensor<T>& r) {
  return sum(mul(out, r));
}

/// Puts deformable sampling positions near a fractional offset so central
/// differences do not straddle the kinks of bilinear interpolation at
/// integer coordinates. `weight` and `bias` belong to an offset predictor
/// whose first 18 output channels are offsets.
template <typename T>
void offset_predictor_away_from_kinks(Tensor<T>& weight, Tensor<T>& bias, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> small(-1e-3, 1e-3);
  for (auto& v : weight.data()) v = static_cast<T>(small(rng));
  for (std::size_t c = 0; c < 18; ++c) bias.data()[c] = static_cast<T>(c % 2 ? -0.29 : 0.37);
}

}  // namespace dmamba::testing
