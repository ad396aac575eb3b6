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
 * @file scan.hpp
 * @brief Selective state-space scan: discretization, the sequential reference
 * kernel, a chunked associative kernel, and the differentiable op.
 *
 * Shapes throughout: u, delta [B, L, D]; A [D, N]; Bm, Cm [B, L, N]; Dskip [D].
 *   a_t = exp(delta_t * A)            (zero-order hold)
 *   h_t = a_t * h_{t-1} + delta_t * Bm_t * u_t,  h_0 = 0
 *   y_t = sum_n Cm_t[n] * h_t[:, n] + Dskip * u_t
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dmamba/core/flop_counter.hpp"
#include "dmamba/core/tensor.hpp"

namespace dmamba::ssm {

/// (A_bar, B_bar) with A_bar = exp(delta * A), A = -exp(A_log), B_bar = delta * B.
/// A_log [D, N], delta [..., D], B [..., N]; both results are [..., D, N].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> discretize(const Tensor<T>& a_log, const Tensor<T>& delta, const Tensor<T>& b) {
  if (a_log.rank() != 2) throw ShapeError("discretize: A_log must be [D, N]");
  const std::int64_t d = a_log.dim(0), n = a_log.dim(1);
  if (delta.rank() == 0 || delta.shape().back() != d) throw ShapeError("discretize: delta last dim must be D");
  if (b.rank() == 0 || b.shape().back() != n) throw ShapeError("discretize: B last dim must be N");
  const std::int64_t rows = delta.numel() / d;
  if (b.numel() / n != rows) throw ShapeError("discretize: delta and B disagree on leading dims");
  for (T v : delta.data()) {
    if (!(v > T(0))) throw std::domain_error("discretize: step size must be positive");
  }
  Shape out_shape(delta.shape().begin(), delta.shape().end() - 1);
  out_shape.push_back(d);
  out_shape.push_back(n);
  std::vector<T> abar(static_cast<std::size_t>(rows * d * n)), bbar(abar.size());
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t i = 0; i < d; ++i) {
      const T dt = delta.ptr()[r * d + i];
      for (std::int64_t k = 0; k < n; ++k) {
        const auto o = static_cast<std::size_t>((r * d + i) * n + k);
        abar[o] = std::exp(-dt * std::exp(a_log.ptr()[i * n + k]));
        bbar[o] = dt * b.ptr()[r * n + k];
      }
    }
  return {Tensor<T>(out_shape, std::move(abar)), Tensor<T>(out_shape, std::move(bbar))};
}

enum class ScanKernel { kReference, kChunked };

namespace detail {

struct ScanDims {
  std::int64_t batch, length, d_inner, d_state;
};

template <typename T>
ScanDims check_scan_shapes(const Tensor<T>& u, const Tensor<T>& delta, const Tensor<T>& a, const Tensor<T>& bm,
                           const Tensor<T>& cm, const Tensor<T>& dskip) {
  if (u.rank() != 3) throw ShapeError("selective_scan: u must be [B, L, D], got " + shape_str(u.shape()));
  ScanDims s{u.dim(0), u.dim(1), u.dim(2), a.rank() == 2 ? a.dim(1) : 0};
  if (s.length < 1) throw ShapeError("selective_scan: empty sequence");
  if (delta.shape() != u.shape()) throw ShapeError("selective_scan: delta must match u");
  if (a.shape() != Shape{s.d_inner, s.d_state}) throw ShapeError("selective_scan: A must be [D, N]");
  const Shape bc{s.batch, s.length, s.d_state};
  if (bm.shape() != bc || cm.shape() != bc) throw ShapeError("selective_scan: B and C must be [B, L, N]");
  if (dskip.shape() != Shape{s.d_inner}) throw ShapeError("selective_scan: D must be [D]");
  return s;
}

/// Strictly sequential recurrence. Writes y and, if non-null, every h_t.
template <typename T>
void scan_reference(const ScanDims& s, const T* u, const T* delta, const T* a, const T* bm, const T* cm,
                    const T* dskip, T* y, T* states) {
  const std::int64_t dn = s.d_inner * s.d_state;
  std::vector<T> h(static_cast<std::size_t>(dn));
  for (std::int64_t b = 0; b < s.batch; ++b) {
    std::fill(h.begin(), h.end(), T(0));
    for (std::int64_t t = 0; t < s.length; ++t) {
      const std::int64_t row = b * s.length + t;
      const T* bt = bm + row * s.d_state;
      const T* ct = cm + row * s.d_state;
      for (std::int64_t d = 0; d < s.d_inner; ++d) {
        const T dt = delta[row * s.d_inner + d];
        const T ut = u[row * s.d_inner + d];
        T* hd = h.data() + d * s.d_state;
        const T* ad = a + d * s.d_state;
        T acc = 0;
        for (std::int64_t n = 0; n < s.d_state; ++n) {
          hd[n] = std::exp(dt * ad[n]) * hd[n] + dt * bt[n] * ut;
          acc += ct[n] * hd[n];
        }
        y[row * s.d_inner + d] = acc + dskip[d] * ut;
      }
      if (states) std::copy(h.begin(), h.end(), states + row * dn);
    }
  }
}

/// Same recurrence evaluated as an associative scan over (a, b) pairs, where
/// (a1, b1) then (a2, b2) combines to (a1 * a2, a2 * b1 + b2). Each chunk is
/// scanned from a zero state while tracking its running product of a; chunk
/// totals are then combined left to right and the carried-in state is folded
/// back into every position as h_t = local_t + prod_t * carry.
template <typename T>
void scan_chunked(const ScanDims& s, const T* u, const T* delta, const T* a, const T* bm, const T* cm,
                  const T* dskip, T* y, T* states, std::int64_t chunk = 64) {
  const std::int64_t dn = s.d_inner * s.d_state;
  const std::int64_t chunks = (s.length + chunk - 1) / chunk;
  std::vector<T> local(static_cast<std::size_t>(chunk * dn));
  std::vector<T> prod(static_cast<std::size_t>(chunk * dn));
  std::vector<T> carry(static_cast<std::size_t>(dn));

  for (std::int64_t b = 0; b < s.batch; ++b) {
    std::fill(carry.begin(), carry.end(), T(0));
    for (std::int64_t c = 0; c < chunks; ++c) {
      const std::int64_t t0 = c * chunk;
      const std::int64_t len = std::min(chunk, s.length - t0);
      // Local inclusive scan from the identity element (1, 0).
      for (std::int64_t k = 0; k < len; ++k) {
        const std::int64_t row = b * s.length + t0 + k;
        const T* bt = bm + row * s.d_state;
        T* lk = local.data() + k * dn;
        T* pk = prod.data() + k * dn;
        for (std::int64_t d = 0; d < s.d_inner; ++d) {
          const T dt = delta[row * s.d_inner + d];
          const T ut = u[row * s.d_inner + d];
          for (std::int64_t n = 0; n < s.d_state; ++n) {
            const std::int64_t i = d * s.d_state + n;
            const T ak = std::exp(dt * a[i]);
            const T bk = dt * bt[n] * ut;
            lk[i] = k ? ak * lk[i - dn] + bk : bk;
            pk[i] = k ? ak * pk[i - dn] : ak;
          }
        }
      }
      // Fold the carry into each position and emit outputs.
      for (std::int64_t k = 0; k < len; ++k) {
        const std::int64_t row = b * s.length + t0 + k;
        const T* ct = cm + row * s.d_state;
        T* lk = local.data() + k * dn;
        const T* pk = prod.data() + k * dn;
        for (std::int64_t i = 0; i < dn; ++i) lk[i] += pk[i] * carry[static_cast<std::size_t>(i)];
        for (std::int64_t d = 0; d < s.d_inner; ++d) {
          T acc = 0;
          for (std::int64_t n = 0; n < s.d_state; ++n) acc += ct[n] * lk[d * s.d_state + n];
          const T ut = u[row * s.d_inner + d];
          y[row * s.d_inner + d] = acc + dskip[d] * ut;
        }
        if (states) std::copy_n(lk, dn, states + row * dn);
      }
      std::copy_n(local.data() + (len - 1) * dn, dn, carry.data());
    }
  }
}

}  // namespace detail

/// Sequential oracle; returns y [B, L, D].
template <typename T>
Tensor<T> selective_scan_ref(const Tensor<T>& u, const Tensor<T>& delta, const Tensor<T>& a, const Tensor<T>& bm,
                             const Tensor<T>& cm, const Tensor<T>& dskip) {
  const auto s = detail::check_scan_shapes(u, delta, a, bm, cm, dskip);
  Tensor<T> y = Tensor<T>::zeros(u.shape());
  detail::scan_reference(s, u.ptr(), delta.ptr(), a.ptr(), bm.ptr(), cm.ptr(), dskip.ptr(), y.ptr(), static_cast<T*>(nullptr));
  return y;
}

/// Chunked associative evaluation of the same contract.
template <typename T>
Tensor<T> selective_scan_fast(const Tensor<T>& u, const Tensor<T>& delta, const Tensor<T>& a, const Tensor<T>& bm,
                              const Tensor<T>& cm, const Tensor<T>& dskip, std::int64_t chunk = 64) {
  if (chunk < 1) throw ShapeError("selective_scan_fast: chunk must be positive");
  const auto s = detail::check_scan_shapes(u, delta, a, bm, cm, dskip);
  Tensor<T> y = Tensor<T>::zeros(u.shape());
  detail::scan_chunked(s, u.ptr(), delta.ptr(), a.ptr(), bm.ptr(), cm.ptr(), dskip.ptr(), y.ptr(), static_cast<T*>(nullptr), chunk);
  return y;
}

/// Differentiable scan. Gradients flow to all six inputs. A is the effective
/// (negative) state matrix; delta may be zero, which freezes the state.
template <typename T>
Tensor<T> selective_scan(const Tensor<T>& u, const Tensor<T>& delta, const Tensor<T>& a, const Tensor<T>& bm,
                         const Tensor<T>& cm, const Tensor<T>& dskip, ScanKernel kernel = ScanKernel::kChunked) {
  const auto s = detail::check_scan_shapes(u, delta, a, bm, cm, dskip);
  if (auto* tally = flop_tally()) tally->scan += s.batch * s.length * s.d_inner * s.d_state;

  const bool need_grad = autograd::grad_mode() && (u.requires_grad() || delta.requires_grad() ||
                                                   a.requires_grad() || bm.requires_grad() ||
                                                   cm.requires_grad() || dskip.requires_grad());
  std::vector<T> states;
  if (need_grad) states.resize(static_cast<std::size_t>(s.batch * s.length * s.d_inner * s.d_state));
  T* sp = need_grad ? states.data() : nullptr;
  Tensor<T> y = Tensor<T>::zeros(u.shape());
  if (kernel == ScanKernel::kReference) {
    detail::scan_reference(s, u.ptr(), delta.ptr(), a.ptr(), bm.ptr(), cm.ptr(), dskip.ptr(), y.ptr(), sp);
  } else {
    detail::scan_chunked(s, u.ptr(), delta.ptr(), a.ptr(), bm.ptr(), cm.ptr(), dskip.ptr(), y.ptr(), sp);
  }
  if (!need_grad) return y;

  return record<T>(std::move(y), {u, delta, a, bm, cm, dskip}, "selective_scan",
                   [s, states = std::move(states)](TensorImpl<T>& node) {
    const T* u = node.parents[0]->data.data();
    const T* delta = node.parents[1]->data.data();
    const T* a = node.parents[2]->data.data();
    const T* bm = node.parents[3]->data.data();
    const T* cm = node.parents[4]->data.data();
    const T* dskip = node.parents[5]->data.data();
    T* gu = parent_grad(node, 0);
    T* gdelta = parent_grad(node, 1);
    T* ga = parent_grad(node, 2);
    T* gbm = parent_grad(node, 3);
    T* gcm = parent_grad(node, 4);
    T* gdskip = parent_grad(node, 5);
    const T* gy = node.grad.data();
    const std::int64_t dn = s.d_inner * s.d_state;
    std::vector<T> gh(static_cast<std::size_t>(dn));
    std::vector<T> a_next(static_cast<std::size_t>(dn));

    for (std::int64_t b = 0; b < s.batch; ++b) {
      std::fill(gh.begin(), gh.end(), T(0));
      std::fill(a_next.begin(), a_next.end(), T(0));
      for (std::int64_t t = s.length - 1; t >= 0; --t) {
        const std::int64_t row = b * s.length + t;
        const T* h = states.data() + row * dn;
        const T* h_prev = t > 0 ? h - dn : nullptr;
        const T* bt = bm + row * s.d_state;
        const T* ct = cm + row * s.d_state;
        for (std::int64_t d = 0; d < s.d_inner; ++d) {
          const std::int64_t di = row * s.d_inner + d;
          const T g = gy[di];
          const T dt = delta[di];
          const T ut = u[di];
          if (gdskip) gdskip[d] += g * ut;
          T gu_acc = g * dskip[d];
          T gdt_acc = 0;
          for (std::int64_t n = 0; n < s.d_state; ++n) {
            const std::int64_t i = d * s.d_state + n;
            if (gcm) gcm[row * s.d_state + n] += g * h[i];
            // dL/dh_t collects the readout at t and the carry into t + 1.
            const T ght = g * ct[n] + a_next[static_cast<std::size_t>(i)] * gh[static_cast<std::size_t>(i)];
            gh[static_cast<std::size_t>(i)] = ght;
            const T at = std::exp(dt * a[i]);
            a_next[static_cast<std::size_t>(i)] = at;
            const T gat = h_prev ? ght * h_prev[i] : T(0);
            gdt_acc += gat * at * a[i] + ght * bt[n] * ut;
            if (ga) ga[i] += gat * at * dt;
            if (gbm) gbm[row * s.d_state + n] += ght * dt * ut;
            gu_acc += ght * dt * bt[n];
          }
          if (gu) gu[di] += gu_acc;
          if (gdelta) gdelta[di] += gdt_acc;
        }
      }
    }
  });
}

}  // namespace dmamba::ssm
