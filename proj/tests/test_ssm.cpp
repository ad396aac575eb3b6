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

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "dmamba/core/grad_check.hpp"
#include "dmamba/ssm/scan.hpp"
#include "dmamba/ssm/scan_path.hpp"
#include "dmamba/ssm/ss2d.hpp"
#include "test_util.hpp"

namespace dmamba::ssm {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;
using testing::weighted_sum;

struct ScanInputs {
  Tensor<double> u, delta, a, bm, cm, dskip;
};

ScanInputs random_scan_inputs(std::int64_t b, std::int64_t l, std::int64_t d, std::int64_t n, std::mt19937_64& rng) {
  ScanInputs s;
  s.u = random_tensor<double>({b, l, d}, rng);
  s.delta = random_tensor<double>({b, l, d}, rng, 0.01, 0.6);
  s.a = neg(random_tensor<double>({d, n}, rng, 0.1, 4.0));
  s.bm = random_tensor<double>({b, l, n}, rng);
  s.cm = random_tensor<double>({b, l, n}, rng);
  s.dskip = random_tensor<double>({d}, rng);
  return s;
}

TEST(ScanPathTest, TwoByTwoOrders) {
  EXPECT_EQ(scan_paths(2, 2, 1).perm, (std::vector<std::int64_t>{0, 1, 2, 3}));
  EXPECT_EQ(scan_paths(2, 2, 2).perm, (std::vector<std::int64_t>{3, 2, 1, 0}));
  EXPECT_EQ(scan_paths(2, 2, 3).perm, (std::vector<std::int64_t>{0, 2, 1, 3}));
  EXPECT_EQ(scan_paths(2, 2, 4).perm, (std::vector<std::int64_t>{3, 1, 2, 0}));
  EXPECT_THROW(scan_paths(2, 2, 5), ShapeError);
  EXPECT_THROW(scan_paths(2, 2, 0), ShapeError);
}

TEST(ScanPathTest, BijectiveForAllSmallGrids) {
  for (std::int64_t h = 1; h <= 16; ++h)
    for (std::int64_t w = 1; w <= 16; ++w)
      for (int dir = 1; dir <= 4; ++dir) {
        const auto p = scan_paths(h, w, dir);
        ASSERT_EQ(static_cast<std::int64_t>(p.perm.size()), h * w);
        std::set<std::int64_t> seen(p.perm.begin(), p.perm.end());
        ASSERT_EQ(static_cast<std::int64_t>(seen.size()), h * w);
        ASSERT_EQ(*seen.begin(), 0);
        ASSERT_EQ(*seen.rbegin(), h * w - 1);
        for (std::int64_t i = 0; i < h * w; ++i) {
          ASSERT_EQ(p.perm[static_cast<std::size_t>(p.inv_perm[static_cast<std::size_t>(i)])], i);
          ASSERT_EQ(p.inv_perm[static_cast<std::size_t>(p.perm[static_cast<std::size_t>(i)])], i);
        }
      }
}

TEST(ScanPathTest, GatherThenInverseRestoresTokens) {
  std::mt19937_64 rng(2);
  auto x = random_tensor<double>({2, 12, 3}, rng);
  for (int dir = 1; dir <= 4; ++dir) {
    const auto p = scan_paths(3, 4, dir);
    EXPECT_EQ(max_abs_diff(gather_tokens(gather_tokens(x, p.perm), p.inv_perm), x), 0.0);
  }
}

TEST(DiscretizeTest, HandValues) {
  auto a_log = Tensor<double>::zeros({1, 1});
  auto [abar, bbar] = discretize(a_log, Tensor<double>::full({1, 1}, std::numbers::ln2), Tensor<double>::ones({1, 1}));
  EXPECT_NEAR(abar.item(), 0.5, 1e-15);
  EXPECT_NEAR(bbar.item(), std::numbers::ln2, 1e-15);
}

TEST(DiscretizeTest, VanishingStepFreezesState) {
  auto [abar, bbar] = discretize(Tensor<double>::zeros({2, 3}), Tensor<double>::full({4, 2}, 1e-300),
                                 Tensor<double>::ones({4, 3}));
  for (double v : abar.data()) EXPECT_EQ(v, 1.0);
  for (double v : bbar.data()) EXPECT_NEAR(v, 0.0, 1e-299);
  EXPECT_THROW(discretize(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({4, 2}), Tensor<double>::ones({4, 3})),
               std::domain_error);
}

TEST(DiscretizeTest, DecayStaysInsideUnitInterval) {
  std::mt19937_64 rng(3);
  for (int draw = 0; draw < 20; ++draw) {
    auto a_log = random_tensor<double>({8, 16}, rng, -3, 3);
    auto delta = random_tensor<double>({5, 8}, rng, 1e-4, 3);
    auto [abar, bbar] = discretize(a_log, delta, random_tensor<double>({5, 16}, rng));
    ASSERT_EQ(abar.shape(), (Shape{5, 8, 16}));
    for (double v : abar.data()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(SelectiveScanTest, HandRecurrence) {
  auto u = make_tensor<double>({1, 3, 1}, {1, 0, 0});
  auto delta = Tensor<double>::full({1, 3, 1}, std::numbers::ln2);
  auto a = make_tensor<double>({1, 1}, {-1});  // A = -exp(0)
  auto ones = Tensor<double>::ones({1, 3, 1});
  auto dskip = Tensor<double>::zeros({1});
  const std::vector<double> expected{0.6931, 0.3466, 0.1733};
  for (const auto& y : {selective_scan_ref(u, delta, a, ones, ones, dskip),
                        selective_scan_fast(u, delta, a, ones, ones, dskip)}) {
    for (int t = 0; t < 3; ++t) EXPECT_NEAR(y.ptr()[t], expected[static_cast<std::size_t>(t)], 1e-4);
  }
}

TEST(SelectiveScanTest, ZeroStepLeavesOnlySkipPath) {
  std::mt19937_64 rng(4);
  auto s = random_scan_inputs(2, 9, 5, 4, rng);
  auto zero = Tensor<double>::zeros(s.u.shape());
  auto y = selective_scan(s.u, zero, s.a, s.bm, s.cm, s.dskip);
  for (std::int64_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y.ptr()[i], s.dskip.ptr()[i % 5] * s.u.ptr()[i]);
}

TEST(SelectiveScanTest, SingleStep) {
  std::mt19937_64 rng(5);
  auto s = random_scan_inputs(1, 1, 3, 4, rng);
  auto ref = selective_scan_ref(s.u, s.delta, s.a, s.bm, s.cm, s.dskip);
  auto fast = selective_scan_fast(s.u, s.delta, s.a, s.bm, s.cm, s.dskip);
  EXPECT_EQ(max_abs_diff(ref, fast), 0.0);
  for (int d = 0; d < 3; ++d) {
    double acc = 0;
    for (int n = 0; n < 4; ++n) acc += s.cm.ptr()[n] * s.delta.ptr()[d] * s.bm.ptr()[n] * s.u.ptr()[d];
    EXPECT_NEAR(ref.ptr()[d], acc + s.dskip.ptr()[d] * s.u.ptr()[d], 1e-14);
  }
}

TEST(SelectiveScanTest, FastMatchesReferenceOnRandomCases) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::int64_t> len(1, 256), inner(1, 32), state(1, 16), batch(1, 2);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto s = random_scan_inputs(batch(rng), len(rng), inner(rng), state(rng), rng);
    auto f = [](const Tensor<double>& t) { return cast<float>(t); };
    auto ref = selective_scan_ref(f(s.u), f(s.delta), f(s.a), f(s.bm), f(s.cm), f(s.dskip));
    auto fast = selective_scan_fast(f(s.u), f(s.delta), f(s.a), f(s.bm), f(s.cm), f(s.dskip), 1 + trial % 64);
    worst = std::max(worst, max_abs_diff(ref, fast));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(SelectiveScanTest, FastKernelScalesLinearly) {
  std::mt19937_64 rng(7);
  auto time_len = [&](std::int64_t l) {
    auto s = random_scan_inputs(1, l, 16, 16, rng);
    auto f = [](const Tensor<double>& t) { return cast<float>(t); };
    auto u = f(s.u), dt = f(s.delta), a = f(s.a), bm = f(s.bm), cm = f(s.cm), dk = f(s.dskip);
    double best = 1e30;
    for (int rep = 0; rep < 7; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      auto y = selective_scan_fast(u, dt, a, bm, cm, dk);
      const auto t1 = std::chrono::steady_clock::now();
      EXPECT_TRUE(all_finite(y));
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
  };
  const double t2048 = time_len(2048);
  const double t4096 = time_len(4096);
  EXPECT_LT(t4096, 2.2 * t2048) << "t(2048)=" << t2048 << " t(4096)=" << t4096;
}

TEST(SelectiveScanTest, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (auto kernel : {ScanKernel::kReference, ScanKernel::kChunked}) {
    auto s = random_scan_inputs(2, 7, 3, 4, rng);
    auto r = random_tensor<double>({2, 7, 3}, rng);
    auto res = grad_check([&] { return weighted_sum(selective_scan(s.u, s.delta, s.a, s.bm, s.cm, s.dskip, kernel), r); },
                          {s.u, s.delta, s.a, s.bm, s.cm, s.dskip});
    EXPECT_LT(res.max_rel_error, 1e-7);
  }
}

TEST(SelectiveScanTest, RejectsShapeMismatch) {
  std::mt19937_64 rng(9);
  auto s = random_scan_inputs(1, 4, 3, 2, rng);
  EXPECT_THROW(selective_scan_ref(s.u, s.delta, Tensor<double>::ones({3, 3}), s.bm, s.cm, s.dskip), ShapeError);
  EXPECT_THROW(selective_scan_ref(s.u, s.delta, s.a, s.bm, s.cm, Tensor<double>::ones({2})), ShapeError);
}

TEST(Ss2dTest, ShapesAndDirectionCounts) {
  nn::Rng rng(10);
  for (int dirs : {1, 2, 4}) {
    Ss2d<float> block(8, {.directions = dirs}, rng);
    EXPECT_EQ(block.directions().size(), static_cast<std::size_t>(dirs));
    auto y = block(testing::random_tensor<float>({2, 8, 4, 6}, rng));
    EXPECT_EQ(y.shape(), (Shape{2, 8, 4, 6}));
    EXPECT_TRUE(all_finite(y));
  }
  EXPECT_THROW(Ss2d<float>(8, {.directions = 3}, rng), ShapeError);
}

TEST(Ss2dTest, SinglePixelDirectionsCoincide) {
  nn::Rng rng(11);
  Ss2d<double> block(4, {}, rng);
  // Give every direction the parameters of the first one.
  auto first = block.scan_params(0).named_parameters();
  for (std::size_t k = 1; k < 4; ++k) block.scan_params(k).load_parameters(first);
  auto tokens = random_tensor<double>({2, 1, block.d_inner()}, rng);
  auto quad = block.scan_sum(tokens, 1, 1);
  auto one = block.scan_params(0).scan(tokens, ScanKernel::kReference);
  EXPECT_LT(max_abs_diff(quad, scale(one, 4.0)), 1e-14);
}

TEST(Ss2dTest, ZeroStepReducesToSkipPath) {
  nn::Rng rng(12);
  Ss2d<double> block(4, {.directions = 4}, rng);
  for (std::size_t k = 0; k < 4; ++k) {
    auto& p = block.scan_params(k);
    std::fill(p.dt_weight().data().begin(), p.dt_weight().data().end(), 0.0);
    std::fill(p.dt_bias().data().begin(), p.dt_bias().data().end(), -1e4);
    for (std::int64_t i = 0; i < block.d_inner(); ++i) p.d_skip().data()[static_cast<std::size_t>(i)] = 0.5 + static_cast<double>(i);
  }
  auto tokens = random_tensor<double>({1, 12, block.d_inner()}, rng);
  auto y = block.scan_sum(tokens, 3, 4);
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    EXPECT_NEAR(y.ptr()[i], 4 * (0.5 + static_cast<double>(i % block.d_inner())) * tokens.ptr()[i], 1e-14);
  }
}

TEST(Ss2dTest, FullBlockGradientCheck) {
  nn::Rng rng(13);
  Ss2d<double> block(4, {.d_state = 4}, rng);
  // Move the gate and skip weights off their symmetric initial values.
  for (auto& p : block.parameters())
    for (auto& v : p.data()) v += std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
  auto x = random_tensor<double>({1, 4, 3, 4}, rng);
  auto r = random_tensor<double>({1, 4, 3, 4}, rng);
  auto inputs = block.parameters();
  inputs.push_back(x);
  auto res = grad_check([&] { return weighted_sum(block(x), r); }, inputs);
  EXPECT_LT(res.max_rel_error, 1e-4);
}

}  // namespace
}  // namespace dmamba::ssm
