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

#include <gtest/gtest.h>

#include <random>

#include "dmamba/backbone/encoder.hpp"
#include "dmamba/core/grad_check.hpp"
#include "dmamba/model.hpp"
#include "test_util.hpp"

namespace dmamba::backbone {
namespace {

using testing::random_tensor;

EncoderConfig micro(EncoderKind kind) {
  EncoderConfig cfg;
  cfg.channels = {8, 16, 32, 64};
  cfg.kind = kind;
  return cfg;
}

TEST(StemTest, StrideArithmetic) {
  nn::Rng rng(1);
  Stem<float> stem(8, rng);
  EXPECT_EQ(stem(random_tensor<float>({1, 3, 256, 256}, rng)).shape(), (Shape{1, 8, 64, 64}));
  EXPECT_EQ(stem(random_tensor<float>({1, 3, 64, 128}, rng)).shape(), (Shape{1, 8, 16, 32}));
  EXPECT_THROW(stem(random_tensor<float>({1, 3, 48, 64}, rng)), ShapeError);
}

TEST(StemTest, ConstantImageGivesConstantMaps) {
  nn::Rng rng(2);
  Stem<double> stem(8, rng);
  auto y = stem(Tensor<double>::full({1, 3, 64, 64}, 0.3));
  const std::int64_t hw = 16 * 16;
  for (std::int64_t c = 0; c < 8; ++c)
    for (std::int64_t p = 1; p < hw; ++p) EXPECT_NEAR(y.ptr()[c * hw + p], y.ptr()[c * hw], 1e-12);
}

TEST(EncoderTest, StandardWidthSchedule) {
  nn::Rng rng(3);
  EncoderConfig cfg;
  cfg.depths = {1, 1, 1, 1};
  Encoder<float> enc(cfg, rng);
  auto p = enc(random_tensor<float>({1, 3, 64, 64}, rng));
  const std::int64_t c[4] = {96, 192, 384, 768};
  for (std::size_t l = 0; l < 4; ++l) EXPECT_EQ(p[l].shape(), (Shape{1, c[l], 16 >> l, 16 >> l}));
}

TEST(EncoderTest, BothKindsProduceIdenticalShapes) {
  nn::Rng rng(4);
  Encoder<float> conv(micro(EncoderKind::kConv), rng);
  Encoder<float> ss2d(micro(EncoderKind::kSs2d), rng);
  for (auto [h, w] : {std::pair<std::int64_t, std::int64_t>{64, 128}, {32, 32}, {96, 64}}) {
    auto img = random_tensor<float>({2, 3, h, w}, rng);
    auto a = conv(img);
    auto b = ss2d(img);
    for (std::size_t l = 0; l < 4; ++l) {
      const std::int64_t s = 4LL << l;
      EXPECT_EQ(a[l].shape(), (Shape{2, 8LL << l, h / s, w / s}));
      EXPECT_EQ(a[l].shape(), b[l].shape());
    }
  }
}

TEST(EncoderTest, DecoderAcceptsEitherEncoder) {
  nn::Rng rng(5);
  for (auto kind : {EncoderKind::kConv, EncoderKind::kSs2d}) {
    auto cfg = ModelConfig::micro(6);
    cfg.encoder.kind = kind;
    SegModel<float> model(cfg, rng);
    auto logits = model(random_tensor<float>({2, 3, 64, 128}, rng));
    EXPECT_EQ(logits.shape(), (Shape{2, 6, 64, 128}));
    EXPECT_TRUE(all_finite(logits));
  }
}

TEST(ModelTest, EndToEndGradientCheck) {
  nn::Rng rng(6);
  auto cfg = ModelConfig::micro(3);
  cfg.encoder.depths = {1, 1, 1, 1};
  cfg.encoder.kind = EncoderKind::kSs2d;
  cfg.encoder.ss2d.d_state = 4;
  cfg.decoder.ss2d.d_state = 4;
  SegModel<double> model(cfg, rng);
  for (int s = 1; s <= 4; ++s) {
    auto& pred = model.decode_head().decoder().block(s).dcn()->predictor();
    testing::offset_predictor_away_from_kinks(pred.weight(), *pred.bias(), rng);
  }
  auto img = random_tensor<double>({1, 3, 32, 32}, rng, 0, 1);
  auto r = random_tensor<double>({1, 3, 32, 32}, rng);
  auto inputs = model.parameters();
  inputs.push_back(img);
  auto res = grad_check([&] { return testing::weighted_sum(model(img), r); }, inputs,
                        {.max_coords_per_input = 8, .seed = 6});
  EXPECT_LT(res.max_rel_error, 1e-4) << "worst input " << res.worst_input << " index " << res.worst_index;
}

}  // namespace
}  // namespace dmamba::backbone
