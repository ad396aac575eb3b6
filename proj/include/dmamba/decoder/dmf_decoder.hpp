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
 * @file dmf_decoder.hpp
 * @brief Deformable Mamba fusion blocks, the four-stage decoder and the
 * segmentation head.
 *
 * Stage s (1..4) pairs encoder level E_{5-s} with the running decoder state
 * D_{s-1}; D_0 is E_4. Both carry c = C_{5-s} channels at the same extent.
 *
 *   D_{s-1} -> SS2D --------------\
 *                                  concat(2c) -> fusion convs -> upsample/project -> D_s
 *   E_{5-s} -> deformable 3x3 ----/
 */

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "dmamba/core/ops.hpp"
#include "dmamba/core/resample.hpp"
#include "dmamba/decoder/pixel_shuffle.hpp"
#include "dmamba/deform/deform_conv.hpp"
#include "dmamba/nn/module.hpp"
#include "dmamba/ssm/ss2d.hpp"

namespace dmamba::decoder {

enum class Upsample { kPixelShuffle, kBilinear, kBicubic };

struct DecoderConfig {
  std::array<std::int64_t, 4> channels{96, 192, 384, 768};  // C_1..C_4
  std::int64_t num_classes = 13;
  int fusion_depth = 2;
  int fusion_groups = 64;  // fusion conv groups = gcd(fusion_groups, 2c)
  ssm::Ss2dConfig ss2d{};
  bool deformable = true;
  deform::Modulation modulation = deform::Modulation::kSigmoid;
  Upsample upsample = Upsample::kPixelShuffle;
  bool final_projection = true;
  int head_convs = 1;

  /// Channel width c of stage s.
  std::int64_t stage_channels(int s) const { return channels.at(static_cast<std::size_t>(4 - s)); }
  std::int64_t fusion_group_count(int s) const {
    return std::gcd(static_cast<std::int64_t>(fusion_groups), 2 * stage_channels(s));
  }
  std::int64_t head_in_channels() const { return final_projection ? channels[0] : 2 * channels[0]; }
};

template <typename T>
using Conv = nn::Conv2d<T>;
template <typename T>
using ConvOpt = typename nn::Conv2d<T>::Options;

/// conv 3x3 -> channel LayerNorm -> SiLU.
template <typename T>
class ConvNormAct : public nn::Module<T> {
 public:
  ConvNormAct(std::int64_t in, std::int64_t out, int groups, nn::Rng& rng) {
    conv_ = &this->register_module("conv", std::make_unique<Conv<T>>(in, out, ConvOpt<T>{.kernel = 3, .groups = groups}, rng));
    norm_ = &this->register_module("norm", std::make_unique<nn::LayerNorm<T>>(out));
  }
  Tensor<T> operator()(const Tensor<T>& x) const { return silu(norm_->channels((*conv_)(x))); }

 private:
  Conv<T>* conv_ = nullptr;
  nn::LayerNorm<T>* norm_ = nullptr;
};

template <typename T>
class DmfBlock : public nn::Module<T> {
 public:
  DmfBlock(int stage, const DecoderConfig& cfg, nn::Rng& rng) : stage_(stage), c_(cfg.stage_channels(stage)), cfg_(cfg) {
    if (stage < 1 || stage > 4) throw ShapeError("DmfBlock: stage must be 1..4");
    ss2d_ = &this->register_module("ss2d", std::make_unique<ssm::Ss2d<T>>(c_, cfg.ss2d, rng));
    if (cfg.deformable) {
      dcn_ = &this->register_module("dcn", std::make_unique<deform::DcnParams<T>>(c_, c_, rng, cfg.modulation));
    } else {
      plain_ = &this->register_module("conv", std::make_unique<Conv<T>>(c_, c_, ConvOpt<T>{.kernel = 3}, rng));
    }
    const auto groups = static_cast<int>(cfg.fusion_group_count(stage));
    for (int i = 0; i < cfg.fusion_depth; ++i) {
      fusion_.push_back(&this->register_module("fuse" + std::to_string(i),
                                               std::make_unique<ConvNormAct<T>>(2 * c_, 2 * c_, groups, rng)));
    }
    if (stage < 4) {
      if ((2 * c_) % 4 != 0) throw ShapeError("DmfBlock: 2c must be divisible by 4 for upsampling");
      if (cfg.upsample != Upsample::kPixelShuffle) {
        reduce_ = &this->register_module("reduce", std::make_unique<Conv<T>>(2 * c_, c_ / 2, ConvOpt<T>{.kernel = 1}, rng));
      }
      proj_ = &this->register_module(
          "proj", std::make_unique<Conv<T>>(c_ / 2, cfg.stage_channels(stage + 1), ConvOpt<T>{.kernel = 1}, rng));
    } else if (cfg.final_projection) {
      proj_ = &this->register_module("proj", std::make_unique<Conv<T>>(2 * c_, c_, ConvOpt<T>{.kernel = 1}, rng));
    }
  }

  /// D_s from (E_{5-s}, D_{s-1}).
  Tensor<T> operator()(const Tensor<T>& e, const Tensor<T>& d) const {
    if (e.rank() != 4 || e.shape() != d.shape() || e.dim(1) != c_) {
      throw ShapeError("DmfBlock stage " + std::to_string(stage_) + ": inputs " + shape_str(e.shape()) + " and " +
                       shape_str(d.shape()) + " must both be [N, " + std::to_string(c_) + ", h, w]");
    }
    auto a = (*ss2d_)(d);
    auto b = dcn_ ? (*dcn_)(e) : (*plain_)(e);
    auto x = concat<T>({a, b}, 1);
    for (auto* f : fusion_) x = (*f)(x);
    if (stage_ < 4) {
      if (cfg_.upsample == Upsample::kPixelShuffle) {
        x = pixel_shuffle(x, 2);
      } else {
        x = (*reduce_)(upsample(x, 2, cfg_.upsample == Upsample::kBilinear ? Interp::kBilinear : Interp::kBicubic));
      }
      return (*proj_)(x);
    }
    return proj_ ? (*proj_)(x) : x;
  }

  ssm::Ss2d<T>& ss2d() { return *ss2d_; }
  deform::DcnParams<T>* dcn() { return dcn_; }

 private:
  int stage_;
  std::int64_t c_;
  DecoderConfig cfg_;
  ssm::Ss2d<T>* ss2d_ = nullptr;
  deform::DcnParams<T>* dcn_ = nullptr;
  Conv<T>* plain_ = nullptr;
  std::vector<ConvNormAct<T>*> fusion_;
  Conv<T>* reduce_ = nullptr;
  Conv<T>* proj_ = nullptr;
};

/// Encoder outputs E_1..E_4 at strides 4, 8, 16, 32.
template <typename T>
struct FeaturePyramid {
  std::array<Tensor<T>, 4> levels;
  const Tensor<T>& operator[](std::size_t i) const { return levels.at(i); }
};

template <typename T>
class Decoder : public nn::Module<T> {
 public:
  Decoder(const DecoderConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
    for (int s = 1; s <= 4; ++s) {
      blocks_.push_back(&this->register_module("stage" + std::to_string(s), std::make_unique<DmfBlock<T>>(s, cfg, rng)));
    }
  }

  /// Features at stride 4 with head_in_channels() channels.
  Tensor<T> operator()(const FeaturePyramid<T>& e) const {
    Tensor<T> d = e[3];  // D_0 = E_4
    for (int s = 1; s <= 4; ++s) d = (*blocks_[static_cast<std::size_t>(s - 1)])(e[static_cast<std::size_t>(4 - s)], d);
    return d;
  }

  Tensor<T> operator()(const std::vector<Tensor<T>>& levels) const {
    if (levels.size() != 4) throw ShapeError("Decoder: expected 4 pyramid levels, got " + std::to_string(levels.size()));
    return (*this)(FeaturePyramid<T>{{levels[0], levels[1], levels[2], levels[3]}});
  }

  DmfBlock<T>& block(int s) { return *blocks_.at(static_cast<std::size_t>(s - 1)); }
  const DecoderConfig& config() const { return cfg_; }

 private:
  DecoderConfig cfg_;
  std::vector<DmfBlock<T>*> blocks_;
};

/// 1x1 projection, head_convs x (3x3 conv, LayerNorm, SiLU), 3x3 classifier,
/// then bilinear x4 to input resolution.
template <typename T>
class SegHead : public nn::Module<T> {
 public:
  SegHead(std::int64_t in, std::int64_t width, std::int64_t num_classes, int convs, nn::Rng& rng) {
    if (num_classes < 2) throw ShapeError("SegHead: need at least 2 classes");
    proj_ = &this->register_module("proj", std::make_unique<Conv<T>>(in, width, ConvOpt<T>{.kernel = 1}, rng));
    for (int i = 0; i < convs; ++i) {
      convs_.push_back(&this->register_module("conv" + std::to_string(i),
                                              std::make_unique<ConvNormAct<T>>(width, width, 1, rng)));
    }
    cls_ = &this->register_module("cls", std::make_unique<Conv<T>>(width, num_classes, ConvOpt<T>{.kernel = 3}, rng));
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = (*proj_)(x);
    for (auto* c : convs_) y = (*c)(y);
    return upsample((*cls_)(y), 4, Interp::kBilinear);
  }

 private:
  Conv<T>* proj_ = nullptr;
  std::vector<ConvNormAct<T>*> convs_;
  Conv<T>* cls_ = nullptr;
};

/// Decoder plus head: everything the cost model attributes to the decoder.
template <typename T>
class DecodeHead : public nn::Module<T> {
 public:
  DecodeHead(const DecoderConfig& cfg, nn::Rng& rng) {
    decoder_ = &this->register_module("decoder", std::make_unique<Decoder<T>>(cfg, rng));
    head_ = &this->register_module(
        "head", std::make_unique<SegHead<T>>(cfg.head_in_channels(), cfg.channels[0], cfg.num_classes, cfg.head_convs, rng));
  }

  Tensor<T> operator()(const FeaturePyramid<T>& e) const { return (*head_)((*decoder_)(e)); }

  Decoder<T>& decoder() { return *decoder_; }
  SegHead<T>& head() { return *head_; }

 private:
  Decoder<T>* decoder_ = nullptr;
  SegHead<T>* head_ = nullptr;
};

}  // namespace dmamba::decoder
