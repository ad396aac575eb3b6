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

// Row-major matrix products backed by Eigen. Every kernel that reduces over a
// contraction goes through here so there is one place to tune.

#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace dmamba::gemm {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

// c[m x n] (+)= a[m x k] * b[k x n]
template <typename T>
void nn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
        bool accumulate = false) {
  ConstMap<T> A(a, m, k);
  ConstMap<T> B(b, k, n);
  MutMap<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B;
  } else {
    C.noalias() = A * B;
  }
}

// c[m x n] (+)= a[m x k] * b[n x k]^T
template <typename T>
void nt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
        bool accumulate = false) {
  ConstMap<T> A(a, m, k);
  ConstMap<T> B(b, n, k);
  MutMap<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() = A * B.transpose();
  }
}

// c[m x n] (+)= a[k x m]^T * b[k x n]
template <typename T>
void tn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n,
        bool accumulate = false) {
  ConstMap<T> A(a, k, m);
  ConstMap<T> B(b, k, n);
  MutMap<T> C(c, m, n);
  if (accumulate) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() = A.transpose() * B;
  }
}

}  // namespace dmamba::gemm
