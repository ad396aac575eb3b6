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

// Encoder + decoder + head assembled into a segmentation network.

#pragma once

#include <cstdint>
#include <memory>

#include "dmamba/backbone/encoder.hpp"
#include "dmamba/decoder/dmf_decoder.hpp"
#include "dmamba/nn/module.hpp"

namespace dmamba {

struct ModelConfig {
  backbone::EncoderConfig encoder{};
  decoder::DecoderConfig decoder{};

  /// Micro schedule {8, 16, 32, 64} used by tests and desk-scale runs.
  static ModelConfig micro(std::int64_t num_classes) {
    ModelConfig c;
    c.encoder.channels = {8, 16, 32, 64};
    c.decoder.channels = {8, 16, 32, 64};
    c.decoder.num_classes = num_classes;
    return c;
  }
};

template <typename T>
class SegModel : public nn::Module<T> {
 public:
  SegModel(const ModelConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
    if (cfg.encoder.channels != cfg.decoder.channels) {
      throw ShapeError("SegModel: encoder and decoder channel schedules differ");
    }
    encoder_ = &this->register_module("encoder", std::make_unique<backbone::Encoder<T>>(cfg.encoder, rng));
    head_ = &this->register_module("decode_head", std::make_unique<decoder::DecodeHead<T>>(cfg.decoder, rng));
  }

  /// Logits [N, num_classes, H, W].
  Tensor<T> operator()(const Tensor<T>& image) const { return (*head_)((*encoder_)(image)); }

  backbone::Encoder<T>& encoder() { return *encoder_; }
  decoder::DecodeHead<T>& decode_head() { return *head_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  backbone::Encoder<T>* encoder_ = nullptr;
  decoder::DecodeHead<T>* head_ = nullptr;
};

}  // namespace dmamba
