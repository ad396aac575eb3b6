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

// Ablation runner: trains every variant of one design axis for several seeds
// and reports per-variant medians.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmamba/train/trainer.hpp"

namespace dmamba::train {

enum class AblationAxis { kScan, kDeformable, kUpsample };

inline AblationAxis axis_from_name(const std::string& s) {
  if (s == "scan") return AblationAxis::kScan;
  if (s == "deformable") return AblationAxis::kDeformable;
  if (s == "upsample") return AblationAxis::kUpsample;
  throw std::invalid_argument("unknown ablation axis '" + s + "' (scan, deformable, upsample)");
}

inline std::string axis_name(AblationAxis a) {
  switch (a) {
    case AblationAxis::kScan: return "scan";
    case AblationAxis::kDeformable: return "deformable";
    case AblationAxis::kUpsample: return "upsample";
  }
  return "?";
}

struct Variant {
  std::string name;
  ModelConfig model;
};

/// Variants of `axis` applied to the decoder of `base`.
inline std::vector<Variant> ablation_variants(AblationAxis axis, const ModelConfig& base) {
  std::vector<Variant> out;
  auto with = [&](std::string name, auto edit) {
    ModelConfig m = base;
    edit(m.decoder);
    out.push_back({std::move(name), m});
  };
  switch (axis) {
    case AblationAxis::kScan:
      with("uni-direction", [](auto& d) { d.ss2d.directions = 1; });
      with("bi-direction", [](auto& d) { d.ss2d.directions = 2; });
      with("quadri-direction", [](auto& d) { d.ss2d.directions = 4; });
      break;
    case AblationAxis::kDeformable:
      with("deformable-off", [](auto& d) { d.deformable = false; });
      with("deformable-on", [](auto& d) { d.deformable = true; });
      break;
    case AblationAxis::kUpsample:
      with("bilinear", [](auto& d) { d.upsample = decoder::Upsample::kBilinear; });
      with("bicubic", [](auto& d) { d.upsample = decoder::Upsample::kBicubic; });
      with("pixelshuffle", [](auto& d) { d.upsample = decoder::Upsample::kPixelShuffle; });
      break;
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of nothing");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct RunOutcome {
  Metrics metrics;
  std::vector<double> losses;
};

/// Builds a model from `model_cfg` seeded by `seed`, trains it and evaluates on `val`.
inline RunOutcome run_experiment(const ModelConfig& model_cfg, TrainConfig train_cfg, std::uint64_t seed,
                                 const data::Dataset& train_set, const data::Dataset& val_set, std::ostream* log = nullptr) {
  train_cfg.seed = seed;
  nn::Rng rng(seed);
  SegModel<float> model(model_cfg, rng);
  RunOutcome r;
  r.losses = train_model(model, train_set, train_cfg, log).losses;
  r.metrics = evaluate(model, val_set);
  return r;
}

struct AblationRow {
  std::string name;
  std::vector<double> miou, macc, aacc;  // per seed
  double median_miou = 0, median_macc = 0, median_aacc = 0;
};

struct AblationTable {
  AblationAxis axis;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;

  const AblationRow& row(const std::string& name) const {
    for (const auto& r : rows) {
      if (r.name == name) return r;
    }
    throw std::out_of_range("no ablation row " + name);
  }
};

/// `progress` (optional) is called after each run with the variant name, seed and metrics.
inline AblationTable run_ablation(
    AblationAxis axis, const ModelConfig& base, const TrainConfig& train_cfg, const std::vector<std::uint64_t>& seeds,
    const data::Dataset& train_set, const data::Dataset& val_set,
    const std::function<void(const std::string&, std::uint64_t, const Metrics&)>& progress = {}) {
  if (seeds.size() < 3) throw std::invalid_argument("ablation needs at least 3 seeds");
  AblationTable table{axis, seeds, {}};
  for (const auto& v : ablation_variants(axis, base)) {
    AblationRow row{v.name, {}, {}, {}};
    for (auto seed : seeds) {
      const auto out = run_experiment(v.model, train_cfg, seed, train_set, val_set);
      row.miou.push_back(out.metrics.miou);
      row.macc.push_back(out.metrics.macc);
      row.aacc.push_back(out.metrics.aacc);
      if (progress) progress(v.name, seed, out.metrics);
    }
    row.median_miou = median(row.miou);
    row.median_macc = median(row.macc);
    row.median_aacc = median(row.aacc);
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::string format_ablation_text(const AblationTable& t) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "axis: " << axis_name(t.axis) << " (median over " << t.seeds.size() << " seeds)\n";
  os << std::left << std::setw(20) << "variant" << std::right << std::setw(8) << "mIoU" << std::setw(8) << "mAcc"
     << std::setw(8) << "aAcc" << "   per-seed mIoU\n";
  for (const auto& r : t.rows) {
    os << std::left << std::setw(20) << r.name << std::right << std::setw(8) << r.median_miou << std::setw(8)
       << r.median_macc << std::setw(8) << r.median_aacc << "  ";
    for (double m : r.miou) os << " " << m;
    os << "\n";
  }
  return os.str();
}

inline std::string format_ablation_kv(const AblationTable& t) {
  std::ostringstream os;
  os << std::setprecision(17) << "axis=" << axis_name(t.axis) << "\n";
  for (const auto& r : t.rows) {
    os << r.name << ".miou=" << r.median_miou << "\n" << r.name << ".macc=" << r.median_macc << "\n"
       << r.name << ".aacc=" << r.median_aacc << "\n";
  }
  return os.str();
}

}  // namespace dmamba::train
