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

// Layer normalization along one axis, with per-feature affine parameters.

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "dmamba/core/tensor.hpp"

namespace dmamba {

namespace detail {

// x viewed as [outer, features, inner]; statistics per (outer, inner) column.
template <typename T>
Tensor<T> layer_norm_impl(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, std::int64_t outer,
                          std::int64_t features, std::int64_t inner, T eps) {
  if (gamma.numel() != features || beta.numel() != features) {
    throw ShapeError("layer_norm: affine parameters must have " + std::to_string(features) + " entries");
  }
  const auto groups = static_cast<std::size_t>(outer * inner);
  auto rstd = std::make_shared<std::vector<T>>(groups);
  auto mu = std::make_shared<std::vector<T>>(groups);
  std::vector<T> out(static_cast<std::size_t>(x.numel()));
  const T* xv = x.ptr();
  const T* gv = gamma.ptr();
  const T* bv = beta.ptr();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const T* col = xv + o * features * inner + i;
      T m = 0;
      for (std::int64_t f = 0; f < features; ++f) m += col[f * inner];
      m /= static_cast<T>(features);
      T v = 0;
      for (std::int64_t f = 0; f < features; ++f) {
        T d = col[f * inner] - m;
        v += d * d;
      }
      v /= static_cast<T>(features);
      const T r = T(1) / std::sqrt(v + eps);
      const auto gi = static_cast<std::size_t>(o * inner + i);
      (*mu)[gi] = m;
      (*rstd)[gi] = r;
      T* dst = out.data() + o * features * inner + i;
      for (std::int64_t f = 0; f < features; ++f) dst[f * inner] = (col[f * inner] - m) * r * gv[f] + bv[f];
    }
  }
  return record<T>(Tensor<T>(x.shape(), std::move(out)), {x, gamma, beta}, "layer_norm",
                   [mu, rstd, outer, features, inner](TensorImpl<T>& node) {
                     const T* xv = node.parents[0]->data.data();
                     const T* gv = node.parents[1]->data.data();
                     T* gx = parent_grad(node, 0);
                     T* gg = parent_grad(node, 1);
                     T* gb = parent_grad(node, 2);
                     std::vector<T> xhat(static_cast<std::size_t>(features));
                     std::vector<T> gy(static_cast<std::size_t>(features));
                     for (std::int64_t o = 0; o < outer; ++o) {
                       for (std::int64_t i = 0; i < inner; ++i) {
                         const auto gi = static_cast<std::size_t>(o * inner + i);
                         const T m = (*mu)[gi];
                         const T r = (*rstd)[gi];
                         const std::int64_t base = o * features * inner + i;
                         T mean_gy = 0, mean_gyx = 0;
                         for (std::int64_t f = 0; f < features; ++f) {
                           const T g = node.grad[static_cast<std::size_t>(base + f * inner)];
                           const auto fi = static_cast<std::size_t>(f);
                           xhat[fi] = (xv[base + f * inner] - m) * r;
                           gy[fi] = g * gv[f];
                           mean_gy += gy[fi];
                           mean_gyx += gy[fi] * xhat[fi];
                           if (gg) gg[f] += g * xhat[fi];
                           if (gb) gb[f] += g;
                         }
                         if (!gx) continue;
                         mean_gy /= static_cast<T>(features);
                         mean_gyx /= static_cast<T>(features);
                         for (std::int64_t f = 0; f < features; ++f) {
                           const auto fi = static_cast<std::size_t>(f);
                           gx[base + f * inner] += r * (gy[fi] - mean_gy - xhat[fi] * mean_gyx);
                         }
                       }
                     }
                   });
}

}  // namespace detail

inline constexpr double kLayerNormEps = 1e-5;

/// Normalizes over the last dimension.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = static_cast<T>(kLayerNormEps)) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::int64_t f = x.shape().back();
  return detail::layer_norm_impl(x, gamma, beta, x.numel() / f, f, 1, eps);
}

/// Normalizes an NCHW tensor over C at every pixel.
template <typename T>
Tensor<T> channel_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       T eps = static_cast<T>(kLayerNormEps)) {
  if (x.rank() != 4) throw ShapeError("channel_norm: expected NCHW, got " + shape_str(x.shape()));
  return detail::layer_norm_impl(x, gamma, beta, x.dim(0), x.dim(1), x.dim(2) * x.dim(3), eps);
}

}  // namespace dmamba
