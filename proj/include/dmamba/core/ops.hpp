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

// Elementwise, reduction and shape ops with their gradient rules.
//
// Broadcasting is limited to leading expansion: the smaller operand's shape,
// with leading 1s dropped, must equal the trailing dims of the larger one.
// Gradients of a broadcast operand are summed over the repeated leading block.

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <type_traits>
#include <string>
#include <vector>

#include "dmamba/core/tensor.hpp"

namespace dmamba {

namespace detail {

inline Shape strip_leading_ones(const Shape& s) {
  std::size_t i = 0;
  while (i + 1 < s.size() && s[i] == 1) ++i;
  return Shape(s.begin() + static_cast<std::ptrdiff_t>(i), s.end());
}

/// Output shape of a leading-expansion broadcast, or throws.
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  const bool a_big = shape_numel(a) >= shape_numel(b);
  const Shape& big = a_big ? a : b;
  const Shape& small = a_big ? b : a;
  if (shape_numel(small) == 1) return big;
  Shape tail = strip_leading_ones(small);
  if (tail.size() <= big.size() &&
      std::equal(tail.begin(), tail.end(), big.end() - static_cast<std::ptrdiff_t>(tail.size()))) {
    return big;
  }
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                   " are not broadcast-compatible");
}

template <typename T, typename F, typename G>
Tensor<T> unary(const Tensor<T>& x, const char* op, F forward, G derivative) {
  const auto n = static_cast<std::size_t>(x.numel());
  std::vector<T> out(n);
  const T* xv = x.ptr();
  for (std::size_t i = 0; i < n; ++i) out[i] = forward(xv[i]);
  Tensor<T> y(x.shape(), std::move(out));
  return record<T>(std::move(y), {x}, op, [derivative](TensorImpl<T>& node) {
    T* gx = parent_grad(node, 0);
    if (!gx) return;
    const auto& xin = node.parents[0]->data;
    for (std::size_t i = 0; i < xin.size(); ++i) {
      gx[i] += node.grad[i] * derivative(xin[i], node.data[i]);
    }
  });
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T stable_softplus(T x) {
  if (x > T(20)) return x;
  if (x < T(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Binary elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Shape out_shape = detail::broadcast_shape(a.shape(), b.shape(), "add");
  const auto n = static_cast<std::size_t>(shape_numel(out_shape));
  const auto na = static_cast<std::size_t>(a.numel());
  const auto nb = static_cast<std::size_t>(b.numel());
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.ptr()[i % na] + b.ptr()[i % nb];
  return record<T>(Tensor<T>(std::move(out_shape), std::move(out)), {a, b}, "add",
                   [na, nb](TensorImpl<T>& node) {
                     T* ga = parent_grad(node, 0);
                     T* gb = parent_grad(node, 1);
                     for (std::size_t i = 0; i < node.grad.size(); ++i) {
                       if (ga) ga[i % na] += node.grad[i];
                       if (gb) gb[i % nb] += node.grad[i];
                     }
                   });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  Shape out_shape = detail::broadcast_shape(a.shape(), b.shape(), "mul");
  const auto n = static_cast<std::size_t>(shape_numel(out_shape));
  const auto na = static_cast<std::size_t>(a.numel());
  const auto nb = static_cast<std::size_t>(b.numel());
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.ptr()[i % na] * b.ptr()[i % nb];
  return record<T>(Tensor<T>(std::move(out_shape), std::move(out)), {a, b}, "mul",
                   [na, nb](TensorImpl<T>& node) {
                     T* ga = parent_grad(node, 0);
                     T* gb = parent_grad(node, 1);
                     const auto& av = node.parents[0]->data;
                     const auto& bv = node.parents[1]->data;
                     for (std::size_t i = 0; i < node.grad.size(); ++i) {
                       if (ga) ga[i % na] += node.grad[i] * bv[i % nb];
                       if (gb) gb[i % nb] += node.grad[i] * av[i % na];
                     }
                   });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return detail::unary(
      x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, scale(b, T(-1)));
}

// ---------------------------------------------------------------------------
// Unary elementwise

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale(x, T(-1));
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, "sigmoid", [](T v) { return detail::stable_sigmoid(v); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return detail::unary(
      x, "silu", [](T v) { return v * detail::stable_sigmoid(v); },
      [](T v, T) {
        T s = detail::stable_sigmoid(v);
        return s * (T(1) + v * (T(1) - s));
      });
}

/// ln(1 + e^x), evaluated without overflow.
template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::unary(
      x, "softplus", [](T v) { return detail::stable_softplus(v); },
      [](T v, T) { return detail::stable_sigmoid(v); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

enum class Elementwise { kAdd, kMul, kSilu, kSigmoid, kSoftplus, kExp };

/// Dispatching front-end over the elementwise family.
template <typename T>
Tensor<T> elementwise(Elementwise kind, const Tensor<T>& x, const std::type_identity_t<std::optional<Tensor<T>>>& y = {}) {
  switch (kind) {
    case Elementwise::kAdd:
    case Elementwise::kMul:
      if (!y) throw ShapeError("elementwise: binary kind needs two operands");
      return kind == Elementwise::kAdd ? add(x, *y) : mul(x, *y);
    case Elementwise::kSilu:
      return silu(x);
    case Elementwise::kSigmoid:
      return sigmoid(x);
    case Elementwise::kSoftplus:
      return softplus(x);
    case Elementwise::kExp:
      return exp(x);
  }
  throw ShapeError("elementwise: unknown kind");
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = std::accumulate(x.data().begin(), x.data().end(), T(0));
  return record<T>(Tensor<T>::scalar(acc), {x}, "sum", [](TensorImpl<T>& node) {
    T* gx = parent_grad(node, 0);
    if (!gx) return;
    const T g = node.grad[0];
    for (std::size_t i = 0; i < node.parents[0]->data.size(); ++i) gx[i] += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// ---------------------------------------------------------------------------
// Shape ops (all copy)

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return record<T>(Tensor<T>(std::move(shape), x.values()), {x}, "reshape",
                   [](TensorImpl<T>& node) {
                     T* gx = parent_grad(node, 0);
                     if (!gx) return;
                     for (std::size_t i = 0; i < node.grad.size(); ++i) gx[i] += node.grad[i];
                   });
}

namespace detail {

/// For each output linear index, the source linear index of a permutation.
inline std::vector<std::int64_t> permute_index(const Shape& in, const std::vector<int>& perm) {
  const std::size_t r = in.size();
  std::vector<std::int64_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  Shape out(r);
  std::vector<std::int64_t> stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out[i] = in[static_cast<std::size_t>(perm[i])];
    stride[i] = in_stride[static_cast<std::size_t>(perm[i])];
  }
  const auto n = shape_numel(in);
  std::vector<std::int64_t> src(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t offset = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    src[static_cast<std::size_t>(i)] = offset;
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < out[d]) {
        offset += stride[d];
        break;
      }
      offset -= stride[d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
  return src;
}

}  // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) throw ShapeError("permute: rank mismatch");
  std::vector<bool> used(r, false);
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= r || used[static_cast<std::size_t>(p)]) {
      throw ShapeError("permute: not a permutation");
    }
    used[static_cast<std::size_t>(p)] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(static_cast<std::size_t>(perm[i]));
  auto src = std::make_shared<std::vector<std::int64_t>>(detail::permute_index(x.shape(), perm));
  std::vector<T> out(src->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.ptr()[(*src)[i]];
  return record<T>(Tensor<T>(std::move(out_shape), std::move(out)), {x}, "permute",
                   [src](TensorImpl<T>& node) {
                     T* gx = parent_grad(node, 0);
                     if (!gx) return;
                     for (std::size_t i = 0; i < node.grad.size(); ++i) gx[(*src)[i]] += node.grad[i];
                   });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis && p.dim(d) != ref[d]) {
        throw ShapeError("concat: " + shape_str(p.shape()) + " vs " + shape_str(ref));
      }
    }
    out_shape[axis] += p.dim(axis);
  }
  std::int64_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  std::int64_t inner = 1;
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  std::vector<std::int64_t> block;
  for (const auto& p : parts) block.push_back(p.dim(axis) * inner);
  const std::int64_t row = out_shape[axis] * inner;
  std::vector<T> out(static_cast<std::size_t>(outer * row));
  std::int64_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(parts[k].ptr() + o * block[k], block[k], out.data() + o * row + col);
    }
    col += block[k];
  }
  return record<T>(Tensor<T>(std::move(out_shape), std::move(out)), parts, "concat",
                   [block, outer, row](TensorImpl<T>& node) {
                     std::int64_t c = 0;
                     for (std::size_t k = 0; k < block.size(); ++k) {
                       if (T* g = parent_grad(node, k)) {
                         for (std::int64_t o = 0; o < outer; ++o) {
                           for (std::int64_t j = 0; j < block[k]; ++j) {
                             g[o * block[k] + j] += node.grad[static_cast<std::size_t>(o * row + c + j)];
                           }
                         }
                       }
                       c += block[k];
                     }
                   });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::int64_t start, std::int64_t length) {
  if (axis >= x.rank() || start < 0 || length < 0 || start + length > x.dim(axis)) {
    throw ShapeError("slice: [" + std::to_string(start) + ", +" + std::to_string(length) +
                     ") out of range for axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  std::int64_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  std::int64_t inner = 1;
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::int64_t in_row = x.dim(axis) * inner;
  const std::int64_t out_row = length * inner;
  const std::int64_t off = start * inner;
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<T> out(static_cast<std::size_t>(outer * out_row));
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy_n(x.ptr() + o * in_row + off, out_row, out.data() + o * out_row);
  }
  return record<T>(Tensor<T>(std::move(out_shape), std::move(out)), {x}, "slice",
                   [outer, in_row, out_row, off](TensorImpl<T>& node) {
                     T* gx = parent_grad(node, 0);
                     if (!gx) return;
                     for (std::int64_t o = 0; o < outer; ++o) {
                       for (std::int64_t j = 0; j < out_row; ++j) {
                         gx[o * in_row + off + j] += node.grad[static_cast<std::size_t>(o * out_row + j)];
                       }
                     }
                   });
}

/// out[b, i, :] = x[b, index[i], :] for a [B, L, D] tensor.
template <typename T>
Tensor<T> gather_tokens(const Tensor<T>& x, const std::vector<std::int64_t>& index) {
  if (x.rank() != 3) throw ShapeError("gather_tokens: expected [B, L, D], got " + shape_str(x.shape()));
  const std::int64_t b = x.dim(0), l = x.dim(1), d = x.dim(2);
  for (auto i : index) {
    if (i < 0 || i >= l) throw ShapeError("gather_tokens: index out of range");
  }
  const auto lo = static_cast<std::int64_t>(index.size());
  std::vector<T> out(static_cast<std::size_t>(b * lo * d));
  for (std::int64_t n = 0; n < b; ++n) {
    for (std::int64_t i = 0; i < lo; ++i) {
      std::copy_n(x.ptr() + (n * l + index[static_cast<std::size_t>(i)]) * d, d,
                  out.data() + (n * lo + i) * d);
    }
  }
  return record<T>(Tensor<T>({b, lo, d}, std::move(out)), {x}, "gather_tokens",
                   [index, b, l, d, lo](TensorImpl<T>& node) {
                     T* gx = parent_grad(node, 0);
                     if (!gx) return;
                     for (std::int64_t n = 0; n < b; ++n) {
                       for (std::int64_t i = 0; i < lo; ++i) {
                         T* dst = gx + (n * l + index[static_cast<std::size_t>(i)]) * d;
                         const T* src = node.grad.data() + (n * lo + i) * d;
                         for (std::int64_t k = 0; k < d; ++k) dst[k] += src[k];
                       }
                     }
                   });
}

/// [N, C, H, W] -> [N, H*W, C] (row-major pixel order).
template <typename T>
Tensor<T> to_tokens(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("to_tokens: expected NCHW, got " + shape_str(x.shape()));
  auto p = permute(x, {0, 2, 3, 1});
  return reshape(p, {x.dim(0), x.dim(2) * x.dim(3), x.dim(1)});
}

/// [N, H*W, C] -> [N, C, H, W].
template <typename T>
Tensor<T> from_tokens(const Tensor<T>& x, std::int64_t h, std::int64_t w) {
  if (x.rank() != 3 || x.dim(1) != h * w) {
    throw ShapeError("from_tokens: " + shape_str(x.shape()) + " is not [N, " + std::to_string(h * w) + ", C]");
  }
  auto r = reshape(x, {x.dim(0), h, w, x.dim(2)});
  return permute(r, {0, 3, 1, 2});
}

}  // namespace dmamba
