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

// Traversal orders of an H x W grid flattened to a token sequence.

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dmamba/core/tensor.hpp"

namespace dmamba::ssm {

/// perm[t] is the row-major pixel index visited at step t; inv_perm undoes it.
struct ScanPath {
  int direction = 1;
  std::vector<std::int64_t> perm;
  std::vector<std::int64_t> inv_perm;
};

/// 1: row-major, 2: row-major reversed, 3: column-major, 4: column-major reversed.
inline ScanPath scan_paths(std::int64_t h, std::int64_t w, int direction) {
  if (direction < 1 || direction > 4) {
    throw ShapeError("scan_paths: direction must be in 1..4, got " + std::to_string(direction));
  }
  if (h < 1 || w < 1) throw ShapeError("scan_paths: grid must be non-empty");
  ScanPath p;
  p.direction = direction;
  p.perm.reserve(static_cast<std::size_t>(h * w));
  if (direction <= 2) {
    for (std::int64_t i = 0; i < h * w; ++i) p.perm.push_back(i);
  } else {
    for (std::int64_t j = 0; j < w; ++j)
      for (std::int64_t i = 0; i < h; ++i) p.perm.push_back(i * w + j);
  }
  if (direction % 2 == 0) std::reverse(p.perm.begin(), p.perm.end());
  p.inv_perm.assign(p.perm.size(), 0);
  for (std::size_t t = 0; t < p.perm.size(); ++t) p.inv_perm[static_cast<std::size_t>(p.perm[t])] = static_cast<std::int64_t>(t);
  return p;
}

/// Directions used for a uni- (1), bi- (2) or quadri-directional (4) scan.
inline std::vector<int> directions_for(int count) {
  switch (count) {
    case 1: return {1};
    case 2: return {1, 2};
    case 4: return {1, 2, 3, 4};
    default: throw ShapeError("scan direction count must be 1, 2 or 4, got " + std::to_string(count));
  }
}

}  // namespace dmamba::ssm
