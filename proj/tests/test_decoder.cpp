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

#include <algorithm>
#include <random>

#include "dmamba/core/grad_check.hpp"
#include "dmamba/core/loss.hpp"
#include "dmamba/decoder/dmf_decoder.hpp"
#include "dmamba/decoder/pixel_shuffle.hpp"
#include "test_util.hpp"

namespace dmamba::decoder {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;
using testing::weighted_sum;

DecoderConfig micro_config() {
  DecoderConfig cfg;
  cfg.channels = {8, 16, 32, 64};
  cfg.num_classes = 4;
  return cfg;
}

template <typename T>
FeaturePyramid<T> random_pyramid(const DecoderConfig& cfg, std::int64_t n, std::int64_t h, std::int64_t w,
                                 std::mt19937_64& rng) {
  FeaturePyramid<T> p;
  for (std::size_t l = 0; l < 4; ++l) {
    const std::int64_t s = 4LL << l;
    p.levels[l] = random_tensor<T>({n, cfg.channels[l], h / s, w / s}, rng);
  }
  return p;
}

TEST(PixelShuffleTest, ShapeAndIndexFormula) {
  auto x = make_tensor<double>({1, 4, 1, 1}, {1, 2, 3, 4});
  auto y = pixel_shuffle(x);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(y.values(), (std::vector<double>{1, 2, 3, 4}));

  std::mt19937_64 rng(1);
  const std::int64_t c = 6, h = 3, w = 5;
  auto t = random_tensor<double>({2, 2 * c, h, w}, rng);
  auto s = pixel_shuffle(t);
  ASSERT_EQ(s.shape(), (Shape{2, c / 2, 2 * h, 2 * w}));
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t k = 0; k < c / 2; ++k)
      for (std::int64_t i = 0; i < 2 * h; ++i)
        for (std::int64_t j = 0; j < 2 * w; ++j) {
          const auto src = ((n * 2 * c + 4 * k + 2 * (i % 2) + (j % 2)) * h + i / 2) * w + j / 2;
          ASSERT_EQ(s.ptr()[((n * c / 2 + k) * 2 * h + i) * 2 * w + j], t.ptr()[src]);
        }
  EXPECT_THROW(pixel_shuffle(Tensor<double>::ones({1, 6, 2, 2})), ShapeError);
}

TEST(PixelShuffleTest, RoundTripAndValueMultiset) {
  std::mt19937_64 rng(2);
  auto x = random_tensor<float>({2, 8, 3, 4}, rng);
  auto y = pixel_shuffle(x);
  EXPECT_EQ(pixel_unshuffle(y).values(), x.values());
  auto a = x.values(), b = y.values();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(PixelShuffleTest, GradientCheck) {
  std::mt19937_64 rng(3);
  auto x = random_tensor<double>({1, 8, 2, 3}, rng);
  auto r = random_tensor<double>({1, 2, 4, 6}, rng);
  EXPECT_LT(grad_check([&] { return weighted_sum(pixel_shuffle(x), r); }, {x}).max_rel_error, 1e-10);
}

TEST(DmfBlockTest, FirstStageDoublesResolutionAtFullWidth) {
  nn::Rng rng(4);
  DecoderConfig cfg;
  DmfBlock<float> block(1, cfg, rng);
  auto e4 = random_tensor<float>({1, 768, 8, 8}, rng);
  auto d1 = block(e4, e4);
  EXPECT_EQ(d1.shape(), (Shape{1, 384, 16, 16}));
  EXPECT_TRUE(all_finite(d1));
}

TEST(DmfBlockTest, LastStageKeepsResolution) {
  nn::Rng rng(5);
  DecoderConfig cfg;
  DmfBlock<float> block(4, cfg, rng);
  auto e1 = random_tensor<float>({1, 96, 64, 64}, rng);
  auto d3 = random_tensor<float>({1, 96, 64, 64}, rng);
  EXPECT_EQ(block(e1, d3).shape(), (Shape{1, 96, 64, 64}));
  cfg.final_projection = false;
  DmfBlock<float> raw(4, cfg, rng);
  EXPECT_EQ(raw(e1, d3).shape(), (Shape{1, 192, 64, 64}));
}

TEST(DmfBlockTest, AblationVariantsKeepShapes) {
  nn::Rng rng(6);
  auto cfg = micro_config();
  auto e = random_tensor<float>({2, 32, 4, 8}, rng);
  for (bool deformable : {true, false})
    for (auto up : {Upsample::kPixelShuffle, Upsample::kBilinear, Upsample::kBicubic})
      for (int dirs : {1, 2, 4}) {
        auto c = cfg;
        c.deformable = deformable;
        c.upsample = up;
        c.ss2d.directions = dirs;
        DmfBlock<float> block(2, c, rng);
        EXPECT_EQ(block.dcn() != nullptr, deformable);
        auto y = block(e, e);
        EXPECT_EQ(y.shape(), (Shape{2, 16, 8, 16}));
        EXPECT_TRUE(all_finite(y));
      }
  DmfBlock<float> block(2, cfg, rng);
  EXPECT_THROW(block(e, random_tensor<float>({2, 32, 4, 4}, rng)), ShapeError);
}

TEST(DmfBlockTest, GradientCheck) {
  nn::Rng rng(7);
  auto cfg = micro_config();
  cfg.ss2d.d_state = 4;
  DmfBlock<double> block(3, cfg, rng);
  testing::offset_predictor_away_from_kinks(block.dcn()->predictor().weight(), *block.dcn()->predictor().bias(), rng);
  auto e = random_tensor<double>({1, 16, 4, 4}, rng);
  auto d = random_tensor<double>({1, 16, 4, 4}, rng);
  auto r = random_tensor<double>({1, 8, 8, 8}, rng);
  auto inputs = block.parameters();
  inputs.push_back(e);
  inputs.push_back(d);
  auto res = grad_check([&] { return weighted_sum(block(e, d), r); }, inputs, {.max_coords_per_input = 24, .seed = 7});
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(DecoderTest, FullWidthScheduleReachesQuarterResolution) {
  nn::Rng rng(8);
  DecoderConfig cfg;
  Decoder<float> dec(cfg, rng);
  auto out = dec(random_pyramid<float>(cfg, 1, 256, 256, rng));
  EXPECT_EQ(out.shape(), (Shape{1, 96, 64, 64}));
}

TEST(DecoderTest, ResNetWidthScheduleIsConsistent) {
  nn::Rng rng(9);
  DecoderConfig cfg;
  cfg.channels = {256, 512, 1024, 2048};
  Decoder<float> dec(cfg, rng);
  EXPECT_EQ(dec(random_pyramid<float>(cfg, 1, 64, 64, rng)).shape(), (Shape{1, 256, 16, 16}));
}

TEST(DecoderTest, ShapeChainOverResolutions) {
  nn::Rng rng(10);
  auto cfg = micro_config();
  Decoder<float> dec(cfg, rng);
  for (std::int64_t h : {32, 64, 128})
    for (std::int64_t w : {32, 64, 128}) {
      auto out = dec(random_pyramid<float>(cfg, 1, h, w, rng));
      EXPECT_EQ(out.shape(), (Shape{1, 8, h / 4, w / 4}));
    }
  EXPECT_THROW(dec(std::vector<Tensor<float>>(3)), ShapeError);
}

TEST(DecoderTest, DegeneratePathsStayFinite) {
  nn::Rng rng(11);
  auto cfg = micro_config();
  cfg.deformable = false;
  Decoder<float> dec(cfg, rng);
  for (int s = 1; s <= 4; ++s) {
    auto& ss = dec.block(s).ss2d();
    auto w = ss.in_proj().weight().data();
    std::fill(w.begin() + static_cast<std::ptrdiff_t>(w.size() / 2), w.end(), 0.f);  // gate rows
  }
  auto out = dec(random_pyramid<float>(cfg, 2, 64, 64, rng));
  EXPECT_TRUE(all_finite(out));
}

TEST(DecoderTest, MicroDecoderGradientCheck) {
  nn::Rng rng(12);
  auto cfg = micro_config();
  DecodeHead<double> model(cfg, rng);
  for (int s = 1; s <= 4; ++s) {
    auto& pred = model.decoder().block(s).dcn()->predictor();
    testing::offset_predictor_away_from_kinks(pred.weight(), *pred.bias(), rng);
  }
  auto pyr = random_pyramid<double>(cfg, 1, 64, 64, rng);  // E_1 at 16 x 16
  auto r = random_tensor<double>({1, 4, 64, 64}, rng);
  auto inputs = model.parameters();
  for (auto& l : pyr.levels) inputs.push_back(l);
  auto res = grad_check([&] { return weighted_sum(model(pyr), r); }, inputs, {.max_coords_per_input = 12, .seed = 12});
  EXPECT_LT(res.max_rel_error, 1e-4) << "worst input " << res.worst_input;
}

TEST(SegHeadTest, OutputContractAndSoftmax) {
  nn::Rng rng(13);
  SegHead<double> head(8, 8, 5, 1, rng);
  auto logits = head(random_tensor<double>({2, 8, 4, 6}, rng));
  ASSERT_EQ(logits.shape(), (Shape{2, 5, 16, 24}));
  auto p = softmax_channels(logits);
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t i = 0; i < 16 * 24; ++i) {
      double s = 0;
      for (std::int64_t k = 0; k < 5; ++k) s += p.ptr()[(n * 5 + k) * 16 * 24 + i];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  EXPECT_THROW(SegHead<double>(8, 8, 1, 1, rng), ShapeError);
}

}  // namespace
}  // namespace dmamba::decoder
