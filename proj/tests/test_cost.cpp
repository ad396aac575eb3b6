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

#include "dmamba/core/flop_counter.hpp"
#include "dmamba/cost/cost_model.hpp"
#include "dmamba/decoder/dmf_decoder.hpp"
#include "test_util.hpp"

namespace dmamba::cost {
namespace {

using decoder::DecoderConfig;

DecoderConfig micro() {
  DecoderConfig cfg;
  cfg.channels = {8, 16, 32, 64};
  cfg.num_classes = 6;
  return cfg;
}

std::vector<DecoderConfig> variants(const DecoderConfig& base) {
  std::vector<DecoderConfig> out{base};
  auto v = base;
  v.deformable = false;
  out.push_back(v);
  v = base;
  v.upsample = decoder::Upsample::kBilinear;
  out.push_back(v);
  v = base;
  v.ss2d.directions = 2;
  v.ss2d.gated = false;
  v.final_projection = false;
  v.head_convs = 2;
  out.push_back(v);
  v = base;
  v.ss2d.ssm_ratio = 2.0;
  v.fusion_groups = 1;
  out.push_back(v);
  return out;
}

TEST(LayerCountTest, HandCounts) {
  EXPECT_EQ(conv_params(16, 32, 3), 4640);
  EXPECT_EQ(linear_params(768, 13), 9997);
  EXPECT_EQ(conv_flops(8, 8, 1, 16), 1024);
  EXPECT_EQ(conv_flops(8, 8, 1, 4 * 16), 4 * conv_flops(8, 8, 1, 16));
}

TEST(CostModelTest, ParamsEqualModuleWalk) {
  for (const auto& base : {micro(), DecoderConfig{}}) {
    for (const auto& cfg : variants(base)) {
      nn::Rng rng(1);
      decoder::DecodeHead<float> model(cfg, rng);
      const auto rep = decoder_cost(cfg, 64, 64);
      EXPECT_EQ(rep.params(), model.num_parameters());
      EXPECT_EQ(rep.entries.back().params, model.head().num_parameters());
    }
  }
}

TEST(CostModelTest, HeadMatchesModuleCount) {
  nn::Rng rng(2);
  decoder::SegHead<float> head(96, 96, 13, 1, rng);
  DecoderConfig cfg;
  cfg.num_classes = 13;
  EXPECT_EQ(decoder_cost(cfg, 512, 512).entries.back().params, head.num_parameters());
}

TEST(CostModelTest, FlopsEqualRuntimeTally) {
  for (const auto& base : {micro(), DecoderConfig{}}) {
    for (const auto& cfg : variants(base)) {
      nn::Rng rng(3);
      decoder::DecodeHead<float> model(cfg, rng);
      decoder::FeaturePyramid<float> pyr;
      for (std::size_t l = 0; l < 4; ++l) {
        pyr.levels[l] = testing::random_tensor<float>({1, cfg.channels[l], 16 >> l, 32 >> l}, rng);
      }
      FlopTally tally;
      {
        FlopScope scope(tally);
        autograd::NoGradGuard no_grad;
        model(pyr);
      }
      const auto rep = decoder_cost(cfg, 64, 128);
      EXPECT_EQ(rep.flops_all(), tally.total());
      EXPECT_EQ(rep.flops_toolkit(), tally.total() - tally.deform_conv);
    }
  }
}

TEST(CostModelTest, ResolutionScaling) {
  const DecoderConfig cfg;
  const auto a = decoder_cost(cfg, 256, 256);
  const auto b = decoder_cost(cfg, 512, 512);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_EQ(4 * a.flops_all(), b.flops_all());
  EXPECT_EQ(4 * a.flops_toolkit(), b.flops_toolkit());
  EXPECT_THROW(decoder_cost(cfg, 500, 512), ShapeError);
}

TEST(CostModelTest, ConvGraphTallyScalesWithArea) {
  nn::Rng rng(4);
  nn::Conv2d<float> a(3, 8, {.kernel = 3}, rng), b(8, 8, {.kernel = 1}, rng);
  auto run = [&](std::int64_t side) {
    FlopTally t;
    FlopScope scope(t);
    b(a(testing::random_tensor<float>({1, 3, side, side}, rng)));
    return t.total();
  };
  EXPECT_EQ(run(16), 4 * run(8));
}

TEST(CostModelTest, DeformableOffIsCheaper) {
  DecoderConfig on;
  auto off = on;
  off.deformable = false;
  const auto a = decoder_cost(on, 512, 512), b = decoder_cost(off, 512, 512);
  EXPECT_LT(b.params(), a.params());
  EXPECT_LT(b.flops_all(), a.flops_all());
}

TEST(EfficiencyReportTest, TargetsAndClaimedRatios) {
  const auto rep = efficiency_report(DecoderConfig{});
  ASSERT_EQ(rep.targets.size(), 3u);
  for (const auto& t : rep.targets) {
    EXPECT_TRUE(t.params_ok()) << t.backbone << " params " << t.params_m;
    EXPECT_TRUE(t.flops_ok()) << t.backbone << " flops " << t.flops_toolkit_g;
  }
  bool param_claim = false, flop_claim = false;
  for (const auto& r : rep.ratios) {
    param_claim = param_claim || r.matches_param_claim();
    flop_claim = flop_claim || r.matches_flop_claim();
    if (r.backbone == "VMamba-T" && r.baseline == "CGRHead") {
      EXPECT_NEAR(r.param_reduction_pct, 72.4, 0.05);
    }
    if (r.backbone == "VMamba-T" && r.baseline == "UperHead") {
      EXPECT_NEAR(r.flop_reduction_pct, 97.1, 0.05);
    }
  }
  EXPECT_TRUE(param_claim);
  EXPECT_TRUE(flop_claim);
  const auto text = format_text(rep);
  EXPECT_NE(text.find("[matches]"), std::string::npos);
  EXPECT_NE(format_kv(decoder_cost(DecoderConfig{}, 512, 512)).find("total.params="), std::string::npos);
}

}  // namespace
}  // namespace dmamba::cost
