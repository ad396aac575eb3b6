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
 * @file encoder.hpp
 * @brief Small hierarchical encoders producing the E_1..E_4 pyramid.
 *
 * stem: two 2x2 stride-2 convs (to stride 4). Stage l > 1 starts with a 2x2
 * stride-2 conv + LayerNorm, then `depths[l]` residual blocks:
 *   conv kind: x + conv3(SiLU(LN(conv3(x))))
 *   ss2d kind: x + SS2D(LN(x))
 */

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dmamba/decoder/dmf_decoder.hpp"
#include "dmamba/nn/module.hpp"
#include "dmamba/ssm/ss2d.hpp"

namespace dmamba::backbone {

enum class EncoderKind { kConv, kSs2d };

struct EncoderConfig {
  std::array<std::int64_t, 4> channels{96, 192, 384, 768};
  std::array<int, 4> depths{2, 2, 4, 2};
  EncoderKind kind = EncoderKind::kConv;
  ssm::Ss2dConfig ss2d{};
};

template <typename T>
using ConvOpt = typename nn::Conv2d<T>::Options;

template <typename T>
class Stem : public nn::Module<T> {
 public:
  Stem(std::int64_t out, nn::Rng& rng) {
    const std::int64_t mid = std::max<std::int64_t>(1, out / 2);
    conv1_ = &this->register_module("conv1", std::make_unique<nn::Conv2d<T>>(
        3, mid, ConvOpt<T>{.kernel = 2, .stride = 2, .padding = 0, .init = nn::Init::kTruncNormal}, rng));
    norm1_ = &this->register_module("norm1", std::make_unique<nn::LayerNorm<T>>(mid));
    conv2_ = &this->register_module("conv2", std::make_unique<nn::Conv2d<T>>(
        mid, out, ConvOpt<T>{.kernel = 2, .stride = 2, .padding = 0, .init = nn::Init::kTruncNormal}, rng));
    norm2_ = &this->register_module("norm2", std::make_unique<nn::LayerNorm<T>>(out));
  }

  Tensor<T> operator()(const Tensor<T>& image) const {
    if (image.rank() != 4 || image.dim(1) != 3) throw ShapeError("stem: expected [N, 3, H, W], got " + shape_str(image.shape()));
    if (image.dim(2) % 32 || image.dim(3) % 32) {
      throw ShapeError("stem: H and W must be divisible by 32, got " + shape_str(image.shape()));
    }
    auto x = silu(norm1_->channels((*conv1_)(image)));
    return norm2_->channels((*conv2_)(x));
  }

 private:
  nn::Conv2d<T>* conv1_ = nullptr;
  nn::LayerNorm<T>* norm1_ = nullptr;
  nn::Conv2d<T>* conv2_ = nullptr;
  nn::LayerNorm<T>* norm2_ = nullptr;
};

template <typename T>
class ConvBlock : public nn::Module<T> {
 public:
  ConvBlock(std::int64_t c, nn::Rng& rng) {
    conv1_ = &this->register_module("conv1", std::make_unique<nn::Conv2d<T>>(c, c, ConvOpt<T>{.init = nn::Init::kTruncNormal}, rng));
    norm_ = &this->register_module("norm", std::make_unique<nn::LayerNorm<T>>(c));
    conv2_ = &this->register_module("conv2", std::make_unique<nn::Conv2d<T>>(c, c, ConvOpt<T>{.init = nn::Init::kTruncNormal}, rng));
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return add(x, (*conv2_)(silu(norm_->channels((*conv1_)(x))))); }

 private:
  nn::Conv2d<T>* conv1_ = nullptr;
  nn::LayerNorm<T>* norm_ = nullptr;
  nn::Conv2d<T>* conv2_ = nullptr;
};

template <typename T>
class Ss2dBlock : public nn::Module<T> {
 public:
  Ss2dBlock(std::int64_t c, const ssm::Ss2dConfig& cfg, nn::Rng& rng) {
    norm_ = &this->register_module("norm", std::make_unique<nn::LayerNorm<T>>(c));
    ss2d_ = &this->register_module("ss2d", std::make_unique<ssm::Ss2d<T>>(c, cfg, rng));
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return add(x, (*ss2d_)(norm_->channels(x))); }

 private:
  nn::LayerNorm<T>* norm_ = nullptr;
  ssm::Ss2d<T>* ss2d_ = nullptr;
};

template <typename T>
class Encoder : public nn::Module<T> {
 public:
  Encoder(const EncoderConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
    stem_ = &this->register_module("stem", std::make_unique<Stem<T>>(cfg.channels[0], rng));
    for (std::size_t l = 0; l < 4; ++l) {
      const std::int64_t c = cfg.channels[l];
      Stage st;
      const std::string prefix = "stage" + std::to_string(l + 1);
      if (l > 0) {
        st.down = &this->register_module(prefix + ".down", std::make_unique<nn::Conv2d<T>>(
            cfg.channels[l - 1], c, ConvOpt<T>{.kernel = 2, .stride = 2, .padding = 0, .init = nn::Init::kTruncNormal}, rng));
        st.down_norm = &this->register_module(prefix + ".down_norm", std::make_unique<nn::LayerNorm<T>>(c));
      }
      for (int b = 0; b < cfg.depths[l]; ++b) {
        const std::string name = prefix + ".block" + std::to_string(b);
        if (cfg.kind == EncoderKind::kConv) {
          st.conv_blocks.push_back(&this->register_module(name, std::make_unique<ConvBlock<T>>(c, rng)));
        } else {
          st.ss2d_blocks.push_back(&this->register_module(name, std::make_unique<Ss2dBlock<T>>(c, cfg.ss2d, rng)));
        }
      }
      stages_.push_back(std::move(st));
    }
  }

  decoder::FeaturePyramid<T> operator()(const Tensor<T>& image) const {
    decoder::FeaturePyramid<T> out;
    Tensor<T> x = (*stem_)(image);
    for (std::size_t l = 0; l < 4; ++l) {
      const Stage& st = stages_[l];
      if (st.down) x = st.down_norm->channels((*st.down)(x));
      for (auto* b : st.conv_blocks) x = (*b)(x);
      for (auto* b : st.ss2d_blocks) x = (*b)(x);
      out.levels[l] = x;
    }
    return out;
  }

  const Stem<T>& stem() const { return *stem_; }
  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Stage {
    nn::Conv2d<T>* down = nullptr;
    nn::LayerNorm<T>* down_norm = nullptr;
    std::vector<ConvBlock<T>*> conv_blocks;
    std::vector<Ss2dBlock<T>*> ss2d_blocks;
  };

  EncoderConfig cfg_;
  Stem<T>* stem_ = nullptr;
  std::vector<Stage> stages_;
};

}  // namespace dmamba::backbone
