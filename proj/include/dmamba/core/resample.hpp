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

// Separable interpolation of NCHW maps (half-pixel centers, i.e. the
// align_corners=false convention).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "dmamba/core/tensor.hpp"

namespace dmamba {

enum class Interp { kBilinear, kBicubic };

namespace detail {

struct Tap {
  std::int64_t index;
  double weight;
};

inline std::vector<std::vector<Tap>> interp_taps(std::int64_t in, std::int64_t out, Interp kind) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    auto& t = taps[static_cast<std::size_t>(o)];
    if (kind == Interp::kBilinear) {
      src = std::max(src, 0.0);
      auto i0 = static_cast<std::int64_t>(std::floor(src));
      i0 = std::min(i0, in - 1);
      const std::int64_t i1 = std::min(i0 + 1, in - 1);
      const double l1 = src - static_cast<double>(i0);
      t.push_back({i0, 1.0 - l1});
      t.push_back({i1, l1});
    } else {
      // Cubic convolution, a = -0.75, border-replicated.
      constexpr double a = -0.75;
      const auto i = static_cast<std::int64_t>(std::floor(src));
      const double x = src - static_cast<double>(i);
      const double w0 = ((a * (x + 1) - 5 * a) * (x + 1) + 8 * a) * (x + 1) - 4 * a;
      const double w1 = ((a + 2) * x - (a + 3)) * x * x + 1;
      const double y = 1 - x;
      const double w2 = ((a + 2) * y - (a + 3)) * y * y + 1;
      const double w3 = 1 - w0 - w1 - w2;
      const double w[4] = {w0, w1, w2, w3};
      for (int k = 0; k < 4; ++k) {
        t.push_back({std::clamp<std::int64_t>(i - 1 + k, 0, in - 1), w[k]});
      }
    }
  }
  return taps;
}

}  // namespace detail

/// Resizes the spatial dims of an NCHW tensor to (out_h, out_w).
template <typename T>
Tensor<T> resize(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w, Interp kind) {
  if (x.rank() != 4) throw ShapeError("resize: expected NCHW, got " + shape_str(x.shape()));
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize: output extent must be positive");
  const std::int64_t planes = x.dim(0) * x.dim(1);
  const std::int64_t h = x.dim(2), w = x.dim(3);
  auto ty = std::make_shared<std::vector<std::vector<detail::Tap>>>(detail::interp_taps(h, out_h, kind));
  auto tx = std::make_shared<std::vector<std::vector<detail::Tap>>>(detail::interp_taps(w, out_w, kind));
  std::vector<T> out(static_cast<std::size_t>(planes * out_h * out_w), T(0));
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = x.ptr() + p * h * w;
    T* dst = out.data() + p * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        double acc = 0;
        for (const auto& a : (*ty)[static_cast<std::size_t>(oy)]) {
          for (const auto& b : (*tx)[static_cast<std::size_t>(ox)]) {
            acc += a.weight * b.weight * static_cast<double>(src[a.index * w + b.index]);
          }
        }
        dst[oy * out_w + ox] = static_cast<T>(acc);
      }
    }
  }
  return record<T>(Tensor<T>({x.dim(0), x.dim(1), out_h, out_w}, std::move(out)), {x}, "resize",
                   [ty, tx, planes, h, w, out_h, out_w](TensorImpl<T>& node) {
                     T* gx = parent_grad(node, 0);
                     if (!gx) return;
                     for (std::int64_t p = 0; p < planes; ++p) {
                       const T* g = node.grad.data() + p * out_h * out_w;
                       T* dst = gx + p * h * w;
                       for (std::int64_t oy = 0; oy < out_h; ++oy) {
                         for (std::int64_t ox = 0; ox < out_w; ++ox) {
                           const T go = g[oy * out_w + ox];
                           for (const auto& a : (*ty)[static_cast<std::size_t>(oy)]) {
                             for (const auto& b : (*tx)[static_cast<std::size_t>(ox)]) {
                               dst[a.index * w + b.index] += static_cast<T>(a.weight * b.weight) * go;
                             }
                           }
                         }
                       }
                     }
                   });
}

template <typename T>
Tensor<T> upsample(const Tensor<T>& x, std::int64_t factor, Interp kind) {
  if (factor <= 0) throw ShapeError("upsample: factor must be positive");
  return resize(x, x.dim(2) * factor, x.dim(3) * factor, kind);
}

}  // namespace dmamba
