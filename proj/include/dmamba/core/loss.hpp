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

// Pixel-wise cross-entropy over class channels and prediction helpers.

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dmamba/core/tensor.hpp"

namespace dmamba {

inline constexpr std::int32_t kIgnoreLabel = 255;

/// Mean cross-entropy of [N, K, H, W] logits against N*H*W labels; pixels
/// equal to `ignore` contribute nothing. Zero valid pixels gives zero loss.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels,
                        std::int32_t ignore = kIgnoreLabel) {
  if (logits.rank() != 4) throw ShapeError("cross_entropy: logits must be NCHW");
  const std::int64_t n = logits.dim(0), k = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  if (static_cast<std::int64_t>(labels.size()) != n * hw) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n * hw) +
                     " pixels");
  }
  auto lab = std::make_shared<std::vector<std::int32_t>>(labels.begin(), labels.end());
  double total = 0;
  std::int64_t count = 0;
  const T* lv = logits.ptr();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      const std::int32_t y = (*lab)[static_cast<std::size_t>(b * hw + p)];
      if (y == ignore) continue;
      if (y < 0 || y >= k) throw ShapeError("cross_entropy: label " + std::to_string(y) + " out of range");
      const T* col = lv + b * k * hw + p;
      T mx = col[0];
      for (std::int64_t c = 1; c < k; ++c) mx = std::max(mx, col[c * hw]);
      double s = 0;
      for (std::int64_t c = 0; c < k; ++c) s += std::exp(static_cast<double>(col[c * hw] - mx));
      total += std::log(s) + static_cast<double>(mx) - static_cast<double>(col[y * hw]);
      ++count;
    }
  }
  const double loss = count ? total / static_cast<double>(count) : 0.0;
  return record<T>(Tensor<T>::scalar(static_cast<T>(loss)), {logits}, "cross_entropy",
                   [lab, n, k, hw, ignore, count](TensorImpl<T>& node) {
                     T* gx = parent_grad(node, 0);
                     if (!gx || count == 0) return;
                     const T g = node.grad[0] / static_cast<T>(count);
                     const T* lv = node.parents[0]->data.data();
                     std::vector<T> prob(static_cast<std::size_t>(k));
                     for (std::int64_t b = 0; b < n; ++b) {
                       for (std::int64_t p = 0; p < hw; ++p) {
                         const std::int32_t y = (*lab)[static_cast<std::size_t>(b * hw + p)];
                         if (y == ignore) continue;
                         const T* col = lv + b * k * hw + p;
                         T mx = col[0];
                         for (std::int64_t c = 1; c < k; ++c) mx = std::max(mx, col[c * hw]);
                         T s = 0;
                         for (std::int64_t c = 0; c < k; ++c) {
                           prob[static_cast<std::size_t>(c)] = std::exp(col[c * hw] - mx);
                           s += prob[static_cast<std::size_t>(c)];
                         }
                         T* gcol = gx + b * k * hw + p;
                         for (std::int64_t c = 0; c < k; ++c) {
                           const T target = c == y ? T(1) : T(0);
                           gcol[c * hw] += g * (prob[static_cast<std::size_t>(c)] / s - target);
                         }
                       }
                     }
                   });
}

/// Softmax over the channel axis of an NCHW tensor (no graph).
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("softmax_channels: expected NCHW");
  const std::int64_t n = x.dim(0), k = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<T> out(static_cast<std::size_t>(x.numel()));
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      const T* col = x.ptr() + b * k * hw + p;
      T* dst = out.data() + b * k * hw + p;
      T mx = col[0];
      for (std::int64_t c = 1; c < k; ++c) mx = std::max(mx, col[c * hw]);
      T s = 0;
      for (std::int64_t c = 0; c < k; ++c) s += (dst[c * hw] = std::exp(col[c * hw] - mx));
      for (std::int64_t c = 0; c < k; ++c) dst[c * hw] /= s;
    }
  }
  return Tensor<T>(x.shape(), std::move(out));
}

/// Arg-max class per pixel of [N, K, H, W] logits, N*H*W ids (first max wins).
template <typename T>
std::vector<std::int32_t> argmax_channels(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("argmax_channels: expected NCHW");
  const std::int64_t n = x.dim(0), k = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<std::int32_t> out(static_cast<std::size_t>(n * hw));
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      const T* col = x.ptr() + b * k * hw + p;
      std::int32_t best = 0;
      for (std::int64_t c = 1; c < k; ++c) {
        if (col[c * hw] > col[best * hw]) best = static_cast<std::int32_t>(c);
      }
      out[static_cast<std::size_t>(b * hw + p)] = best;
    }
  }
  return out;
}

}  // namespace dmamba
