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

// Named finite-difference gradient checks over the library's layers, shared
// by the command-line tool and the acceptance runner. All run in double.

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmamba/core/conv.hpp"
#include "dmamba/core/grad_check.hpp"
#include "dmamba/core/ops.hpp"
#include "dmamba/decoder/dmf_decoder.hpp"
#include "dmamba/decoder/pixel_shuffle.hpp"
#include "dmamba/deform/deform_conv.hpp"
#include "dmamba/model.hpp"
#include "dmamba/ssm/ss2d.hpp"

namespace dmamba::gradcheck {

inline constexpr double kTolerance = 1e-4;

inline const std::vector<std::string>& case_names() {
  static const std::vector<std::string> names{"conv2d", "linear", "ss2d", "dcn", "pixel_shuffle", "dmf", "model"};
  return names;
}

inline Tensor<double> uniform(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = d(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

/// Bilinear sampling has kinks where a sample crosses an integer grid line.
/// Small predictor weights and offset biases of 0.37 / -0.29 keep every sample
/// strictly between grid lines so central differences stay on one side.
inline void offsets_between_grid_lines(deform::DcnParams<double>& dcn, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> small(-1e-3, 1e-3);
  auto& pred = dcn.predictor();
  for (auto& v : pred.weight().data()) v = small(rng);
  auto bias = pred.bias()->data();
  for (std::size_t c = 0; c < 2 * deform::kTaps; ++c) bias[c] = c % 2 ? -0.29 : 0.37;
}

namespace detail {

inline Tensor<double> weighted_sum(const Tensor<double>& out, const Tensor<double>& r) { return sum(mul(out, r)); }

inline decoder::DecoderConfig micro_decoder() {
  decoder::DecoderConfig cfg;
  cfg.channels = {8, 16, 32, 64};
  cfg.num_classes = 4;
  cfg.ss2d.d_state = 4;
  return cfg;
}

}  // namespace detail

/// Runs one named check. Large cases sample a subset of coordinates per
/// input tensor; the rest are exhaustive.
inline GradCheckResult run_case(const std::string& name, double eps = 1e-5, std::uint64_t seed = 0) {
  using detail::weighted_sum;
  std::mt19937_64 rng(seed * 7919 + 17);
  GradCheckOptions opt{.eps = eps, .max_coords_per_input = 0, .seed = seed};

  if (name == "conv2d") {
    auto x = uniform({2, 4, 6, 6}, rng), w = uniform({4, 2, 3, 3}, rng), b = uniform({4}, rng);
    auto r = uniform({2, 4, 3, 3}, rng);
    return grad_check([&] { return weighted_sum(conv2d(x, w, b, {.stride = 2, .padding = 1, .groups = 2}), r); },
                      {x, w, b}, opt);
  }
  if (name == "linear") {
    auto x = uniform({3, 6}, rng), w = uniform({4, 6}, rng), b = uniform({4}, rng), r = uniform({3, 4}, rng);
    return grad_check([&] { return weighted_sum(linear(x, w, b), r); }, {x, w, b}, opt);
  }
  if (name == "ss2d") {
    ssm::Ss2d<double> block(4, {.d_state = 4}, rng);
    for (auto& p : block.parameters()) {
      for (auto& v : p.data()) v += std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
    }
    auto x = uniform({1, 4, 3, 4}, rng), r = uniform({1, 4, 3, 4}, rng);
    auto inputs = block.parameters();
    inputs.push_back(x);
    return grad_check([&] { return weighted_sum(block(x), r); }, inputs, opt);
  }
  if (name == "dcn") {
    deform::DcnParams<double> dcn(3, 2, rng);
    offsets_between_grid_lines(dcn, rng);
    auto x = uniform({1, 3, 4, 4}, rng), r = uniform({1, 2, 4, 4}, rng);
    auto inputs = dcn.parameters();
    inputs.push_back(x);
    return grad_check([&] { return weighted_sum(dcn(x), r); }, inputs, opt);
  }
  if (name == "pixel_shuffle") {
    auto x = uniform({2, 8, 3, 2}, rng), r = uniform({2, 2, 6, 4}, rng);
    return grad_check([&] { return weighted_sum(pixel_shuffle(x, 2), r); }, {x}, opt);
  }
  if (name == "dmf") {
    decoder::DmfBlock<double> block(3, detail::micro_decoder(), rng);
    offsets_between_grid_lines(*block.dcn(), rng);
    auto e = uniform({1, 16, 4, 4}, rng), d = uniform({1, 16, 4, 4}, rng), r = uniform({1, 8, 8, 8}, rng);
    auto inputs = block.parameters();
    inputs.push_back(e);
    inputs.push_back(d);
    opt.max_coords_per_input = 24;
    return grad_check([&] { return weighted_sum(block(e, d), r); }, inputs, opt);
  }
  if (name == "model") {
    auto cfg = ModelConfig::micro(3);
    cfg.encoder.depths = {1, 1, 1, 1};
    cfg.encoder.kind = backbone::EncoderKind::kSs2d;
    cfg.encoder.ss2d.d_state = 4;
    cfg.decoder.ss2d.d_state = 4;
    SegModel<double> model(cfg, rng);
    for (int s = 1; s <= 4; ++s) offsets_between_grid_lines(*model.decode_head().decoder().block(s).dcn(), rng);
    auto img = uniform({1, 3, 32, 32}, rng, 0, 1), r = uniform({1, 3, 32, 32}, rng);
    auto inputs = model.parameters();
    inputs.push_back(img);
    opt.max_coords_per_input = 8;
    return grad_check([&] { return weighted_sum(model(img), r); }, inputs, opt);
  }
  throw std::invalid_argument("unknown gradient-check module '" + name + "'");
}

}  // namespace dmamba::gradcheck
