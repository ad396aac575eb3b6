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

// Affine maps and 2D cross-correlation (im2col + GEMM).

#pragma once

#include <cstdint>
#include <optional>
#include <type_traits>
#include <string>
#include <vector>

#include "dmamba/core/flop_counter.hpp"
#include "dmamba/core/gemm.hpp"
#include "dmamba/core/tensor.hpp"

namespace dmamba {

/// y = x W^T + b over the last dimension; W is [out, in].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<std::optional<Tensor<T>>>& bias = {}) {
  if (weight.rank() != 2) throw ShapeError("linear: weight must be [out, in]");
  if (x.rank() == 0 || x.shape().back() != weight.dim(1)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not end in " +
                     std::to_string(weight.dim(1)));
  }
  const std::int64_t in = weight.dim(1);
  const std::int64_t out_f = weight.dim(0);
  if (bias && (bias->rank() != 1 || bias->dim(0) != out_f)) {
    throw ShapeError("linear: bias must be [" + std::to_string(out_f) + "]");
  }
  const std::int64_t rows = x.numel() / in;
  std::vector<T> out(static_cast<std::size_t>(rows * out_f));
  gemm::nt(x.ptr(), weight.ptr(), out.data(), rows, in, out_f);
  if (bias) {
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t o = 0; o < out_f; ++o) out[static_cast<std::size_t>(r * out_f + o)] += bias->ptr()[o];
    }
  }
  if (auto* tally = flop_tally()) tally->linear += rows * in * out_f;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return record<T>(Tensor<T>(std::move(out_shape), std::move(out)), inputs, "linear",
                   [rows, in, out_f](TensorImpl<T>& node) {
                     const T* g = node.grad.data();
                     const T* xv = node.parents[0]->data.data();
                     const T* wv = node.parents[1]->data.data();
                     if (T* gx = parent_grad(node, 0)) gemm::nn(g, wv, gx, rows, out_f, in, true);
                     if (T* gw = parent_grad(node, 1)) gemm::tn(g, xv, gw, out_f, rows, in, true);
                     if (node.parents.size() > 2) {
                       if (T* gb = parent_grad(node, 2)) {
                         for (std::int64_t r = 0; r < rows; ++r) {
                           for (std::int64_t o = 0; o < out_f; ++o) gb[o] += g[r * out_f + o];
                         }
                       }
                     }
                   });
}

struct Conv2dOptions {
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t dilation = 1;
  std::int64_t groups = 1;
};

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, const Conv2dOptions& o) {
  return (in + 2 * o.padding - o.dilation * (k - 1) - 1) / o.stride + 1;
}

namespace detail {

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, kh, kw, ho, wo, groups, cin_g, cout_g;
  Conv2dOptions opt;
  std::int64_t col_rows() const { return cin_g * kh * kw; }
  std::int64_t pixels() const { return ho * wo; }
  bool pointwise() const {
    return kh == 1 && kw == 1 && opt.stride == 1 && opt.padding == 0;
  }
};

template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* cols) {
  const auto& o = g.opt;
  for (std::int64_t c = 0; c < g.cin_g; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.pixels();
        const T* plane = img + c * g.h * g.w;
        for (std::int64_t oh = 0; oh < g.ho; ++oh) {
          const std::int64_t ih = oh * o.stride - o.padding + ki * o.dilation;
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const std::int64_t iw = ow * o.stride - o.padding + kj * o.dilation;
            row[oh * g.wo + ow] =
                (ih >= 0 && ih < g.h && iw >= 0 && iw < g.w) ? plane[ih * g.w + iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* img) {
  const auto& o = g.opt;
  for (std::int64_t c = 0; c < g.cin_g; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.pixels();
        T* plane = img + c * g.h * g.w;
        for (std::int64_t oh = 0; oh < g.ho; ++oh) {
          const std::int64_t ih = oh * o.stride - o.padding + ki * o.dilation;
          if (ih < 0 || ih >= g.h) continue;
          for (std::int64_t ow = 0; ow < g.wo; ++ow) {
            const std::int64_t iw = ow * o.stride - o.padding + kj * o.dilation;
            if (iw >= 0 && iw < g.w) plane[ih * g.w + iw] += row[oh * g.wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation of an NCHW input with an [out, in/groups, kh, kw] kernel.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::type_identity_t<std::optional<Tensor<T>>>& bias = {},
                 Conv2dOptions opt = {}) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be NCHW, got " + shape_str(x.shape()));
  if (weight.rank() != 4) throw ShapeError("conv2d: weight must be 4-D, got " + shape_str(weight.shape()));
  if (opt.stride <= 0 || opt.dilation <= 0) throw ShapeError("conv2d: stride and dilation must be positive");
  if (opt.padding < 0 || opt.groups <= 0) throw ShapeError("conv2d: invalid padding or groups");
  detail::ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.groups = opt.groups;
  g.opt = opt;
  if (g.cin % g.groups != 0 || g.cout % g.groups != 0) {
    throw ShapeError("conv2d: channels " + std::to_string(g.cin) + "->" + std::to_string(g.cout) +
                     " not divisible by groups " + std::to_string(g.groups));
  }
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  if (weight.dim(1) != g.cin_g) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " does not match " +
                     std::to_string(g.cin) + " input channels with groups " + std::to_string(g.groups));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout)) throw ShapeError("conv2d: bias must be [out]");
  g.ho = conv_out_extent(g.h, g.kh, opt);
  g.wo = conv_out_extent(g.w, g.kw, opt);
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv2d: empty output for input " + shape_str(x.shape()));

  const std::int64_t krows = g.col_rows();
  const std::int64_t pix = g.pixels();
  std::vector<T> out(static_cast<std::size_t>(g.n * g.cout * pix));
  std::vector<T> cols(g.pointwise() ? 0 : static_cast<std::size_t>(krows * pix));
  for (std::int64_t n = 0; n < g.n; ++n) {
    for (std::int64_t gr = 0; gr < g.groups; ++gr) {
      const T* img = x.ptr() + (n * g.cin + gr * g.cin_g) * g.h * g.w;
      const T* c = img;
      if (!g.pointwise()) {
        detail::im2col(img, g, cols.data());
        c = cols.data();
      }
      gemm::nn(weight.ptr() + gr * g.cout_g * krows, c, out.data() + (n * g.cout + gr * g.cout_g) * pix,
               g.cout_g, krows, pix);
    }
    if (bias) {
      for (std::int64_t o = 0; o < g.cout; ++o) {
        T* dst = out.data() + (n * g.cout + o) * pix;
        for (std::int64_t p = 0; p < pix; ++p) dst[p] += bias->ptr()[o];
      }
    }
  }
  if (auto* tally = flop_tally()) tally->conv += g.n * g.cout * krows * pix;

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return record<T>(Tensor<T>({g.n, g.cout, g.ho, g.wo}, std::move(out)), inputs, "conv2d",
                   [g](TensorImpl<T>& node) {
                     const std::int64_t krows = g.col_rows();
                     const std::int64_t pix = g.pixels();
                     const T* xv = node.parents[0]->data.data();
                     const T* wv = node.parents[1]->data.data();
                     T* gx = parent_grad(node, 0);
                     T* gw = parent_grad(node, 1);
                     std::vector<T> cols(static_cast<std::size_t>(krows * pix));
                     for (std::int64_t n = 0; n < g.n; ++n) {
                       for (std::int64_t gr = 0; gr < g.groups; ++gr) {
                         const T* gout = node.grad.data() + (n * g.cout + gr * g.cout_g) * pix;
                         const T* img = xv + (n * g.cin + gr * g.cin_g) * g.h * g.w;
                         if (gw) {
                           const T* c = img;
                           if (!g.pointwise()) {
                             detail::im2col(img, g, cols.data());
                             c = cols.data();
                           }
                           gemm::nt(gout, c, gw + gr * g.cout_g * krows, g.cout_g, pix, krows, true);
                         }
                         if (gx) {
                           T* gimg = gx + (n * g.cin + gr * g.cin_g) * g.h * g.w;
                           if (g.pointwise()) {
                             gemm::tn(wv + gr * g.cout_g * krows, gout, gimg, krows, g.cout_g, pix, true);
                           } else {
                             gemm::tn(wv + gr * g.cout_g * krows, gout, cols.data(), krows, g.cout_g, pix);
                             detail::col2im_add(cols.data(), g, gimg);
                           }
                         }
                       }
                     }
                     if (node.parents.size() > 2) {
                       if (T* gb = parent_grad(node, 2)) {
                         for (std::int64_t n = 0; n < g.n; ++n) {
                           for (std::int64_t o = 0; o < g.cout; ++o) {
                             const T* src = node.grad.data() + (n * g.cout + o) * pix;
                             for (std::int64_t p = 0; p < pix; ++p) gb[o] += src[p];
                           }
                         }
                       }
                     }
                   });
}

}  // namespace dmamba
