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
 * @file deform_conv.hpp
 * @brief Modulated 3x3 deformable convolution with learned offsets.
 *
 *   out(p) = bias + sum_k w_k * m_k(p) * in(p + p_k + dp_k(p))
 *
 * Taps k = 0..8 run row-major over (dy, dx) in {-1, 0, 1}^2. The offset
 * tensor holds (dy, dx) interleaved per tap: channel 2k is dy_k, 2k + 1 is dx_k.
 * Fractional positions are read bilinearly; anything outside the map is zero.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <type_traits>
#include <utility>
#include <vector>

#include "dmamba/core/flop_counter.hpp"
#include "dmamba/core/gemm.hpp"
#include "dmamba/core/ops.hpp"
#include "dmamba/core/tensor.hpp"
#include "dmamba/nn/module.hpp"

namespace dmamba::deform {

inline constexpr std::int64_t kTaps = 9;

namespace detail {

/// Bilinear read of one H x W plane at (y, x); out-of-range neighbours are zero.
template <typename T>
T sample(const T* plane, std::int64_t h, std::int64_t w, T y, T x) {
  if (y <= T(-1) || y >= T(h) || x <= T(-1) || x >= T(w)) return T(0);
  const auto y0 = static_cast<std::int64_t>(std::floor(y));
  const auto x0 = static_cast<std::int64_t>(std::floor(x));
  const T ly = y - T(y0), lx = x - T(x0);
  const T hy = 1 - ly, hx = 1 - lx;
  auto at = [&](std::int64_t yy, std::int64_t xx) {
    return (yy >= 0 && yy < h && xx >= 0 && xx < w) ? plane[yy * w + xx] : T(0);
  };
  return hy * hx * at(y0, x0) + hy * lx * at(y0, x0 + 1) + ly * hx * at(y0 + 1, x0) + ly * lx * at(y0 + 1, x0 + 1);
}

/// Adds `g` times the bilinear weights of (y, x) into `grad_plane` and returns
/// (d sample / dy, d sample / dx) evaluated on `plane`.
template <typename T>
std::pair<T, T> sample_backward(const T* plane, T* grad_plane, std::int64_t h, std::int64_t w, T y, T x, T g) {
  if (y <= T(-1) || y >= T(h) || x <= T(-1) || x >= T(w)) return {T(0), T(0)};
  const auto y0 = static_cast<std::int64_t>(std::floor(y));
  const auto x0 = static_cast<std::int64_t>(std::floor(x));
  const T ly = y - T(y0), lx = x - T(x0);
  const T hy = 1 - ly, hx = 1 - lx;
  const std::int64_t ys[2] = {y0, y0 + 1}, xs[2] = {x0, x0 + 1};
  const T wy[2] = {hy, ly}, wx[2] = {hx, lx};
  T v[2][2] = {{0, 0}, {0, 0}};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      if (ys[a] < 0 || ys[a] >= h || xs[b] < 0 || xs[b] >= w) continue;
      const std::int64_t idx = ys[a] * w + xs[b];
      v[a][b] = plane[idx];
      if (grad_plane) grad_plane[idx] += g * wy[a] * wx[b];
    }
  const T dy = hx * (v[1][0] - v[0][0]) + lx * (v[1][1] - v[0][1]);
  const T dx = hy * (v[0][1] - v[0][0]) + ly * (v[1][1] - v[1][0]);
  return {dy, dx};
}

struct DcnGeometry {
  std::int64_t n, cin, cout, h, w;
  std::int64_t pixels() const { return h * w; }
};

/// Modulated sampled columns [cin * 9, h * w] for batch element b.
template <typename T>
void deform_columns(const DcnGeometry& g, const T* in, const T* off, const T* mask, T* cols) {
  const std::int64_t hw = g.pixels();
  for (std::int64_t c = 0; c < g.cin; ++c) {
    const T* plane = in + c * hw;
    for (std::int64_t k = 0; k < kTaps; ++k) {
      const T ky = T(k / 3 - 1), kx = T(k % 3 - 1);
      T* row = cols + (c * kTaps + k) * hw;
      for (std::int64_t i = 0; i < g.h; ++i)
        for (std::int64_t j = 0; j < g.w; ++j) {
          const std::int64_t p = i * g.w + j;
          const T y = T(i) + ky + off[(2 * k) * hw + p];
          const T x = T(j) + kx + off[(2 * k + 1) * hw + p];
          row[p] = mask[k * hw + p] * sample(plane, g.h, g.w, y, x);
        }
    }
  }
}

}  // namespace detail

/// Interpolated C-vector of a [C, H, W] feature at column x, row y.
template <typename T>
std::vector<T> bilinear_sample(const Tensor<T>& feature, T x, T y) {
  if (feature.rank() != 3) throw ShapeError("bilinear_sample: feature must be [C, H, W]");
  const std::int64_t c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  std::vector<T> out(static_cast<std::size_t>(c));
  for (std::int64_t k = 0; k < c; ++k) out[static_cast<std::size_t>(k)] = detail::sample(feature.ptr() + k * h * w, h, w, y, x);
  return out;
}

/// Deformable 3x3 convolution (stride 1, padding 1). input [N, C, H, W],
/// offset [N, 18, H, W], mask [N, 9, H, W], weight [Co, C, 3, 3].
template <typename T>
Tensor<T> deform_conv2d(const Tensor<T>& input, const Tensor<T>& offset, const Tensor<T>& mask,
                        const Tensor<T>& weight, const std::type_identity_t<std::optional<Tensor<T>>>& bias = {}) {
  if (input.rank() != 4) throw ShapeError("deform_conv2d: input must be NCHW, got " + shape_str(input.shape()));
  detail::DcnGeometry g{input.dim(0), input.dim(1), weight.rank() == 4 ? weight.dim(0) : 0, input.dim(2), input.dim(3)};
  if (weight.shape() != Shape{g.cout, g.cin, 3, 3}) {
    throw ShapeError("deform_conv2d: weight " + shape_str(weight.shape()) + " is not [Co, " + std::to_string(g.cin) +
                     ", 3, 3]");
  }
  if (offset.shape() != Shape{g.n, 2 * kTaps, g.h, g.w}) {
    throw ShapeError("deform_conv2d: offset must be [N, 18, H, W], got " + shape_str(offset.shape()));
  }
  if (mask.shape() != Shape{g.n, kTaps, g.h, g.w}) {
    throw ShapeError("deform_conv2d: mask must be [N, 9, H, W], got " + shape_str(mask.shape()));
  }
  if (bias && bias->shape() != Shape{g.cout}) throw ShapeError("deform_conv2d: bias must be [Co]");

  const std::int64_t hw = g.pixels();
  const std::int64_t krows = g.cin * kTaps;
  if (auto* tally = flop_tally()) {
    tally->deform_conv += g.n * g.cout * krows * hw;
    tally->deform_sample += g.n * krows * hw * 4;
  }
  std::vector<T> out(static_cast<std::size_t>(g.n * g.cout * hw));
  std::vector<T> cols(static_cast<std::size_t>(krows * hw));
  for (std::int64_t b = 0; b < g.n; ++b) {
    detail::deform_columns(g, input.ptr() + b * g.cin * hw, offset.ptr() + b * 2 * kTaps * hw,
                           mask.ptr() + b * kTaps * hw, cols.data());
    T* ob = out.data() + b * g.cout * hw;
    gemm::nn(weight.ptr(), cols.data(), ob, g.cout, krows, hw, false);
    if (bias)
      for (std::int64_t o = 0; o < g.cout; ++o)
        for (std::int64_t p = 0; p < hw; ++p) ob[o * hw + p] += bias->ptr()[o];
  }
  std::vector<Tensor<T>> inputs{input, offset, mask, weight};
  if (bias) inputs.push_back(*bias);
  return record<T>(Tensor<T>({g.n, g.cout, g.h, g.w}, std::move(out)), inputs, "deform_conv2d",
                   [g, has_bias = bias.has_value()](TensorImpl<T>& node) {
    const T* in = node.parents[0]->data.data();
    const T* off = node.parents[1]->data.data();
    const T* msk = node.parents[2]->data.data();
    const T* wt = node.parents[3]->data.data();
    T* gin = parent_grad(node, 0);
    T* goff = parent_grad(node, 1);
    T* gmask = parent_grad(node, 2);
    T* gw = parent_grad(node, 3);
    T* gb = has_bias ? parent_grad(node, 4) : nullptr;
    const std::int64_t hw = g.pixels();
    const std::int64_t krows = g.cin * kTaps;
    std::vector<T> cols(static_cast<std::size_t>(krows * hw));
    std::vector<T> gcols(cols.size());
    for (std::int64_t b = 0; b < g.n; ++b) {
      const T* gout = node.grad.data() + b * g.cout * hw;
      const T* inb = in + b * g.cin * hw;
      const T* offb = off + b * 2 * kTaps * hw;
      const T* mb = msk + b * kTaps * hw;
      if (gb)
        for (std::int64_t o = 0; o < g.cout; ++o)
          for (std::int64_t p = 0; p < hw; ++p) gb[o] += gout[o * hw + p];
      if (gw) {
        detail::deform_columns(g, inb, offb, mb, cols.data());
        gemm::nt(gout, cols.data(), gw, g.cout, hw, krows, true);
      }
      if (!gin && !goff && !gmask) continue;
      gemm::tn(wt, gout, gcols.data(), krows, g.cout, hw, false);
      T* ginb = gin ? gin + b * g.cin * hw : nullptr;
      T* goffb = goff ? goff + b * 2 * kTaps * hw : nullptr;
      T* gmb = gmask ? gmask + b * kTaps * hw : nullptr;
      for (std::int64_t c = 0; c < g.cin; ++c) {
        const T* plane = inb + c * hw;
        T* gplane = ginb ? ginb + c * hw : nullptr;
        for (std::int64_t k = 0; k < kTaps; ++k) {
          const T ky = T(k / 3 - 1), kx = T(k % 3 - 1);
          const T* grow = gcols.data() + (c * kTaps + k) * hw;
          for (std::int64_t i = 0; i < g.h; ++i)
            for (std::int64_t j = 0; j < g.w; ++j) {
              const std::int64_t p = i * g.w + j;
              const T gc = grow[p];
              if (gc == T(0)) continue;
              const T y = T(i) + ky + offb[(2 * k) * hw + p];
              const T x = T(j) + kx + offb[(2 * k + 1) * hw + p];
              const T m = mb[k * hw + p];
              if (gmb) gmb[k * hw + p] += gc * detail::sample(plane, g.h, g.w, y, x);
              auto [dy, dx] = detail::sample_backward(plane, gplane, g.h, g.w, y, x, gc * m);
              if (goffb) {
                goffb[(2 * k) * hw + p] += gc * m * dy;
                goffb[(2 * k + 1) * hw + p] += gc * m * dx;
              }
            }
        }
      }
    }
  });
}

enum class Modulation { kSigmoid, kIdentity };

/// Deformable layer parameters: the main kernel and a zero-initialized 3x3
/// predictor emitting 18 offset channels followed by 9 modulation channels.
template <typename T>
class DcnParams : public nn::Module<T> {
 public:
  DcnParams(std::int64_t in, std::int64_t out, nn::Rng& rng, Modulation modulation = Modulation::kSigmoid)
      : modulation_(modulation) {
    main_ = &this->register_module("conv", std::make_unique<nn::Conv2d<T>>(
                                               in, out, typename nn::Conv2d<T>::Options{.kernel = 3}, rng));
    predictor_ = &this->register_module(
        "offset", std::make_unique<nn::Conv2d<T>>(in, 3 * kTaps,
                                                  typename nn::Conv2d<T>::Options{.kernel = 3, .init = nn::Init::kZeros}, rng));
    // Raw modulation starts at 1 so both variants begin as an unmodulated conv up to scale.
    if (modulation_ == Modulation::kIdentity) {
      auto b = predictor_->bias()->data();
      std::fill(b.begin() + 2 * kTaps, b.end(), T(1));
    }
  }

  /// (offsets [N, 18, H, W], modulation [N, 9, H, W]) predicted from `x`.
  std::pair<Tensor<T>, Tensor<T>> predict_offsets(const Tensor<T>& x) const {
    auto raw = (*predictor_)(x);
    auto offsets = slice(raw, 1, 0, 2 * kTaps);
    auto m = slice(raw, 1, 2 * kTaps, kTaps);
    if (modulation_ == Modulation::kSigmoid) m = sigmoid(m);
    return {offsets, m};
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto [offsets, m] = predict_offsets(x);
    return deform_conv2d(x, offsets, m, main_->weight(), main_->bias());
  }

  nn::Conv2d<T>& main() { return *main_; }
  nn::Conv2d<T>& predictor() { return *predictor_; }

 private:
  Modulation modulation_;
  nn::Conv2d<T>* main_ = nullptr;
  nn::Conv2d<T>* predictor_ = nullptr;
};

}  // namespace dmamba::deform
