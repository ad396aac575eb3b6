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
 * @file cost_model.hpp
 * @brief Analytic parameter and FLOP accounting for the decoder and head.
 *
 * One multiply-accumulate counts as one FLOP. Counted layers: convolutions
 * (dense, grouped, depthwise, 1x1), linear maps, selective-scan state updates
 * (L * d_inner * d_state per direction) and deformable sampling (4 MACs per
 * bilinear tap). Norms, activations, interpolation and reshapes are free.
 *
 * Two conventions are reported:
 *   all_macs  every MAC above, including the deformable kernel contraction
 *   toolkit   all_macs minus the deformable kernel contraction (9 c^2 per
 *             pixel), which common segmentation-toolkit counters skip because
 *             the deformable op is a custom kernel they cannot trace
 */

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dmamba/decoder/dmf_decoder.hpp"

namespace dmamba::cost {

struct CostEntry {
  std::string module;
  std::int64_t params = 0;
  std::int64_t flops_all = 0;      // every MAC
  std::int64_t flops_toolkit = 0;  // without the deformable kernel contraction
};

struct CostReport {
  std::int64_t height = 0, width = 0;
  std::vector<CostEntry> entries;

  std::int64_t params() const {
    return std::accumulate(entries.begin(), entries.end(), std::int64_t{0},
                           [](std::int64_t s, const CostEntry& e) { return s + e.params; });
  }
  std::int64_t flops_all() const {
    return std::accumulate(entries.begin(), entries.end(), std::int64_t{0},
                           [](std::int64_t s, const CostEntry& e) { return s + e.flops_all; });
  }
  std::int64_t flops_toolkit() const {
    return std::accumulate(entries.begin(), entries.end(), std::int64_t{0},
                           [](std::int64_t s, const CostEntry& e) { return s + e.flops_toolkit; });
  }
};

// Single-layer counts, exposed for tests and for the report.

inline std::int64_t conv_params(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t groups = 1,
                                bool bias = true) {
  return out * (in / groups) * k * k + (bias ? out : 0);
}

inline std::int64_t conv_flops(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t out_pixels,
                               std::int64_t groups = 1) {
  return out * (in / groups) * k * k * out_pixels;
}

inline std::int64_t linear_params(std::int64_t in, std::int64_t out, bool bias = true) {
  return in * out + (bias ? out : 0);
}

inline CostEntry ss2d_cost(std::int64_t c, const ssm::Ss2dConfig& cfg, std::int64_t hw) {
  const std::int64_t di = cfg.inner(c), n = cfg.d_state, r = cfg.rank(c);
  const std::int64_t g = cfg.gated ? 2 : 1;
  const auto nd = static_cast<std::int64_t>(ssm::directions_for(cfg.directions).size());
  CostEntry e;
  e.params = conv_params(c, g * di, 1, 1, false) + conv_params(di, di, 3, di) +
             nd * (linear_params(di, r + 2 * n, false) + linear_params(r, di) + di * n + di) + 2 * di +
             linear_params(di, c, false);
  e.flops_all = hw * (c * g * di + 9 * di + nd * (di * (r + 2 * n) + r * di + di * n) + di * c);
  e.flops_toolkit = e.flops_all;
  return e;
}

inline CostEntry encoder_branch_cost(std::int64_t c, bool deformable, std::int64_t hw) {
  CostEntry e;
  if (!deformable) {
    e.params = conv_params(c, c, 3);
    e.flops_all = e.flops_toolkit = conv_flops(c, c, 3, hw);
    return e;
  }
  const std::int64_t predictor = conv_flops(c, 27, 3, hw);
  const std::int64_t sampling = 4 * 9 * c * hw;
  e.params = conv_params(c, c, 3) + conv_params(c, 27, 3);
  e.flops_toolkit = predictor + sampling;
  e.flops_all = e.flops_toolkit + 9 * c * c * hw;
  return e;
}

/// Decoder stages and head at an H x W input.
inline CostReport decoder_cost(const decoder::DecoderConfig& cfg, std::int64_t height, std::int64_t width) {
  if (height % 32 || width % 32) throw ShapeError("decoder_cost: resolution must be divisible by 32");
  CostReport rep;
  rep.height = height;
  rep.width = width;
  auto add = [&](std::string name, CostEntry e) {
    e.module = std::move(name);
    rep.entries.push_back(std::move(e));
  };
  for (int s = 1; s <= 4; ++s) {
    const std::int64_t c = cfg.stage_channels(s);
    const std::int64_t side = std::int64_t{1} << (s - 1);
    const std::int64_t hw = (height / 32 * side) * (width / 32 * side);
    const std::string p = "stage" + std::to_string(s) + ".";
    add(p + "ss2d", ss2d_cost(c, cfg.ss2d, hw));
    add(p + (cfg.deformable ? "dcn" : "conv"), encoder_branch_cost(c, cfg.deformable, hw));

    const std::int64_t groups = cfg.fusion_group_count(s);
    CostEntry fuse;
    fuse.params = cfg.fusion_depth * (conv_params(2 * c, 2 * c, 3, groups) + 2 * 2 * c);
    fuse.flops_all = fuse.flops_toolkit = cfg.fusion_depth * conv_flops(2 * c, 2 * c, 3, hw, groups);
    add(p + "fusion", fuse);

    CostEntry up;
    if (s < 4) {
      const std::int64_t next = cfg.stage_channels(s + 1);
      if (cfg.upsample != decoder::Upsample::kPixelShuffle) {
        up.params += conv_params(2 * c, c / 2, 1);
        up.flops_all += conv_flops(2 * c, c / 2, 1, 4 * hw);
      }
      up.params += conv_params(c / 2, next, 1);
      up.flops_all += conv_flops(c / 2, next, 1, 4 * hw);
    } else if (cfg.final_projection) {
      up.params = conv_params(2 * c, c, 1);
      up.flops_all = conv_flops(2 * c, c, 1, hw);
    }
    up.flops_toolkit = up.flops_all;
    add(p + (s < 4 ? "upsample" : "proj"), up);
  }
  const std::int64_t hw4 = (height / 4) * (width / 4);
  const std::int64_t w = cfg.channels[0], cin = cfg.head_in_channels(), k = cfg.num_classes;
  CostEntry head;
  head.params = conv_params(cin, w, 1) + cfg.head_convs * (conv_params(w, w, 3) + 2 * w) + conv_params(w, k, 3);
  head.flops_all = head.flops_toolkit =
      conv_flops(cin, w, 1, hw4) + cfg.head_convs * conv_flops(w, w, 3, hw4) + conv_flops(w, k, 3, hw4);
  add("head", head);
  return rep;
}

/// One row of a published decoder comparison table.
struct PublishedHead {
  const char* name;
  double params_m;
  double flops_g;
};

struct PublishedTable {
  const char* backbone;
  std::array<std::int64_t, 4> channels;
  std::vector<PublishedHead> baselines;
  PublishedHead ours;
};

/// Decoder rows of the Stanford2D3D comparison tables (ResNet-50, Swin-T, VMamba-T).
inline std::vector<PublishedTable> published_tables() {
  return {
      {"ResNet-50", {256, 512, 1024, 2048}, {{"UperHead", 40.5, 250.7}, {"MusterHead", 203.1, 211.5}, {"CGRHead", 282.6, 31.4}},
       {"Ours", 77.3, 38.8}},
      {"Swin-T", {96, 192, 384, 768}, {{"UperHead", 31.5, 206.9}, {"MusterHead", 19.1, 21.4}, {"CGRHead", 40.6, 5.0}},
       {"Ours", 11.2, 6.0}},
      {"VMamba-T", {96, 192, 384, 768}, {{"UperHead", 31.5, 206.9}, {"MusterHead", 19.1, 21.4}, {"CGRHead", 40.6, 5.0}},
       {"Ours", 11.2, 6.0}},
  };
}

inline constexpr double kParamTolerance = 0.10;
inline constexpr double kFlopTolerance = 0.15;
inline constexpr int kClaimedParamReductionPct = 72;
inline constexpr int kClaimedFlopReductionPct = 97;

struct TargetCheck {
  std::string backbone;
  double params_m, target_params_m, params_dev;
  double flops_all_g, flops_toolkit_g, target_flops_g, flops_all_dev, flops_toolkit_dev;
  bool params_ok() const { return std::abs(params_dev) <= kParamTolerance; }
  bool flops_ok() const { return std::abs(flops_toolkit_dev) <= kFlopTolerance; }
};

struct RatioRow {
  std::string backbone, baseline;
  double param_reduction_pct, flop_reduction_pct;
  bool matches_param_claim() const { return std::lround(param_reduction_pct) == kClaimedParamReductionPct; }
  bool matches_flop_claim() const { return std::lround(flop_reduction_pct) == kClaimedFlopReductionPct; }
};

struct EfficiencyReport {
  std::vector<TargetCheck> targets;
  std::vector<RatioRow> ratios;
};

/// Computed decoder cost versus the published rows at `res` x `res`, plus
/// the reduction percentages implied by every (table, baseline) pairing.
inline EfficiencyReport efficiency_report(const decoder::DecoderConfig& base, std::int64_t res = 512) {
  EfficiencyReport out;
  for (const auto& t : published_tables()) {
    auto cfg = base;
    cfg.channels = t.channels;
    const auto rep = decoder_cost(cfg, res, res);
    TargetCheck c;
    c.backbone = t.backbone;
    c.params_m = static_cast<double>(rep.params()) / 1e6;
    c.flops_all_g = static_cast<double>(rep.flops_all()) / 1e9;
    c.flops_toolkit_g = static_cast<double>(rep.flops_toolkit()) / 1e9;
    c.target_params_m = t.ours.params_m;
    c.target_flops_g = t.ours.flops_g;
    c.params_dev = c.params_m / c.target_params_m - 1;
    c.flops_all_dev = c.flops_all_g / c.target_flops_g - 1;
    c.flops_toolkit_dev = c.flops_toolkit_g / c.target_flops_g - 1;
    out.targets.push_back(c);
    for (const auto& b : t.baselines) {
      out.ratios.push_back({t.backbone, b.name, 100 * (1 - t.ours.params_m / b.params_m),
                            100 * (1 - t.ours.flops_g / b.flops_g)});
    }
  }
  return out;
}

/// Aligned plain-text rendering of a CostReport.
inline std::string format_text(const CostReport& rep) {
  std::ostringstream os;
  os << "decoder cost at " << rep.height << "x" << rep.width << "\n";
  os << std::left << std::setw(20) << "module" << std::right << std::setw(14) << "params" << std::setw(18)
     << "flops(all)" << std::setw(18) << "flops(toolkit)" << "\n";
  for (const auto& e : rep.entries) {
    os << std::left << std::setw(20) << e.module << std::right << std::setw(14) << e.params << std::setw(18)
       << e.flops_all << std::setw(18) << e.flops_toolkit << "\n";
  }
  os << std::left << std::setw(20) << "total" << std::right << std::setw(14) << rep.params() << std::setw(18)
     << rep.flops_all() << std::setw(18) << rep.flops_toolkit() << "\n";
  return os.str();
}

/// Machine-readable `key=value` lines.
inline std::string format_kv(const CostReport& rep) {
  std::ostringstream os;
  os << "resolution=" << rep.height << "x" << rep.width << "\n";
  for (const auto& e : rep.entries) {
    os << e.module << ".params=" << e.params << "\n"
       << e.module << ".flops_all=" << e.flops_all << "\n"
       << e.module << ".flops_toolkit=" << e.flops_toolkit << "\n";
  }
  os << "total.params=" << rep.params() << "\ntotal.flops_all=" << rep.flops_all()
     << "\ntotal.flops_toolkit=" << rep.flops_toolkit() << "\n";
  return os.str();
}

inline std::string format_text(const EfficiencyReport& rep) {
  std::ostringstream os;
  os << std::fixed;
  os << "computed decoder vs published rows (params tol +-" << std::lround(kParamTolerance * 100)
     << "%, flops tol +-" << std::lround(kFlopTolerance * 100) << "% on the toolkit count)\n";
  os << std::left << std::setw(10) << "backbone" << std::right << std::setw(10) << "params M" << std::setw(9) << "target"
     << std::setw(9) << "dev%" << std::setw(12) << "GF toolkit" << std::setw(9) << "dev%" << std::setw(10) << "GF all"
     << std::setw(9) << "dev%" << std::setw(9) << "target" << "  status\n";
  for (const auto& t : rep.targets) {
    os << std::left << std::setw(10) << t.backbone << std::right << std::setprecision(2) << std::setw(10) << t.params_m
       << std::setprecision(1) << std::setw(9) << t.target_params_m << std::setw(9) << 100 * t.params_dev
       << std::setprecision(2) << std::setw(12) << t.flops_toolkit_g << std::setprecision(1) << std::setw(9)
       << 100 * t.flops_toolkit_dev << std::setprecision(2) << std::setw(10) << t.flops_all_g << std::setprecision(1)
       << std::setw(9) << 100 * t.flops_all_dev << std::setw(9) << t.target_flops_g << "  "
       << (t.params_ok() && t.flops_ok() ? "PASS" : "FAIL") << "\n";
  }
  os << "\nreduction implied by each published pairing (claimed: " << kClaimedParamReductionPct << "% params, "
     << kClaimedFlopReductionPct << "% FLOPs)\n";
  for (const auto& r : rep.ratios) {
    os << std::left << std::setw(10) << r.backbone << std::setw(12) << r.baseline << std::right << std::setprecision(1)
       << " params " << std::setw(6) << r.param_reduction_pct << "%" << (r.matches_param_claim() ? " [matches]" : "          ")
       << "  flops " << std::setw(6) << r.flop_reduction_pct << "%" << (r.matches_flop_claim() ? " [matches]" : "") << "\n";
  }
  return os.str();
}

inline std::string format_kv(const EfficiencyReport& rep) {
  std::ostringstream os;
  os << std::setprecision(6);
  for (const auto& t : rep.targets) {
    const std::string p = "target." + t.backbone + ".";
    os << p << "params_m=" << t.params_m << "\n" << p << "params_dev=" << t.params_dev << "\n"
       << p << "flops_toolkit_g=" << t.flops_toolkit_g << "\n" << p << "flops_toolkit_dev=" << t.flops_toolkit_dev << "\n"
       << p << "flops_all_g=" << t.flops_all_g << "\n" << p << "flops_all_dev=" << t.flops_all_dev << "\n"
       << p << "pass=" << (t.params_ok() && t.flops_ok() ? 1 : 0) << "\n";
  }
  for (const auto& r : rep.ratios) {
    const std::string p = "ratio." + r.backbone + "." + r.baseline + ".";
    os << p << "param_reduction_pct=" << r.param_reduction_pct << "\n"
       << p << "flop_reduction_pct=" << r.flop_reduction_pct << "\n"
       << p << "matches=" << (r.matches_param_claim() ? "params" : "") << (r.matches_flop_claim() ? (r.matches_param_claim() ? ",flops" : "flops") : "") << "\n";
  }
  return os.str();
}

}  // namespace dmamba::cost
