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

// Runtime MAC tally for forward passes. Kernels report what they execute;
// the analytic cost model is cross-checked against these numbers.

#pragma once

#include <cstdint>

namespace dmamba {

struct FlopTally {
  std::int64_t conv = 0;            // dense/grouped convolutions (incl. 1x1)
  std::int64_t linear = 0;          // affine maps over the last dim
  std::int64_t scan = 0;            // selective-scan state updates
  std::int64_t deform_conv = 0;     // contraction of deformable conv columns
  std::int64_t deform_sample = 0;   // bilinear taps of deformable sampling

  std::int64_t total() const { return conv + linear + scan + deform_conv + deform_sample; }
};

namespace detail {
inline FlopTally*& active_tally() {
  thread_local FlopTally* tally = nullptr;
  return tally;
}
}  // namespace detail

/// Routes MAC counts of every kernel run on this thread into `tally`.
class FlopScope {
 public:
  explicit FlopScope(FlopTally& tally) : previous_(detail::active_tally()) {
    detail::active_tally() = &tally;
  }
  ~FlopScope() { detail::active_tally() = previous_; }
  FlopScope(const FlopScope&) = delete;
  FlopScope& operator=(const FlopScope&) = delete;

 private:
  FlopTally* previous_;
};

inline FlopTally* flop_tally() { return detail::active_tally(); }

}  // namespace dmamba
