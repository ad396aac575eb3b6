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

// Sub-pixel rearrangement between channels and space.

#pragma once

#include <cstdint>
#include <string>

#include "dmamba/core/ops.hpp"

namespace dmamba {

/// [N, C, H, W] -> [N, C / r^2, rH, rW] with
/// out[c, r*i + di, r*j + dj] = in[r^2 * c + r*di + dj, i, j].
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::int64_t r = 2) {
  if (x.rank() != 4) throw ShapeError("pixel_shuffle: expected NCHW, got " + shape_str(x.shape()));
  if (r < 1 || x.dim(1) % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: " + std::to_string(x.dim(1)) + " channels not divisible by " +
                     std::to_string(r * r));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1) / (r * r), h = x.dim(2), w = x.dim(3);
  auto t = reshape(x, {n, c, r, r, h, w});
  t = permute(t, {0, 1, 4, 2, 5, 3});
  return reshape(t, {n, c, h * r, w * r});
}

/// Inverse of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::int64_t r = 2) {
  if (x.rank() != 4) throw ShapeError("pixel_unshuffle: expected NCHW, got " + shape_str(x.shape()));
  if (r < 1 || x.dim(2) % r != 0 || x.dim(3) % r != 0) throw ShapeError("pixel_unshuffle: extent not divisible");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2) / r, w = x.dim(3) / r;
  auto t = reshape(x, {n, c, h, r, w, r});
  t = permute(t, {0, 1, 3, 5, 2, 4});
  return reshape(t, {n, c * r * r, h, w});
}

}  // namespace dmamba
