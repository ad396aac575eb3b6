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

// Segmentation metrics accumulated in a confusion matrix.

#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmamba/core/loss.hpp"

namespace dmamba::train {

/// counts[gt * k + pred]; ignore-label pixels are skipped.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::int64_t num_classes) : k_(num_classes), counts_(static_cast<std::size_t>(k_ * k_), 0) {
    if (num_classes < 1) throw std::invalid_argument("ConfusionMatrix: need at least one class");
  }

  void add(std::span<const std::int32_t> pred, std::span<const std::int32_t> gt, std::int32_t ignore = kIgnoreLabel) {
    if (pred.size() != gt.size()) throw std::invalid_argument("ConfusionMatrix: prediction/label size mismatch");
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (gt[i] == ignore) continue;
      if (gt[i] < 0 || gt[i] >= k_) throw std::out_of_range("ConfusionMatrix: label " + std::to_string(gt[i]));
      if (pred[i] < 0 || pred[i] >= k_) throw std::out_of_range("ConfusionMatrix: prediction " + std::to_string(pred[i]));
      ++counts_[static_cast<std::size_t>(gt[i] * k_ + pred[i])];
    }
  }

  void merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw std::invalid_argument("ConfusionMatrix: class count mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  }

  std::uint64_t at(std::int64_t gt, std::int64_t pred) const { return counts_[static_cast<std::size_t>(gt * k_ + pred)]; }
  std::int64_t num_classes() const { return k_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

 private:
  std::int64_t k_;
  std::vector<std::uint64_t> counts_;
};

/// Per-class IoU/accuracy lie in [0, 1] and are NaN for classes absent from
/// both ground truth and prediction (IoU) or from ground truth (accuracy);
/// the means skip NaN entries. Means and aAcc are percentages.
struct Metrics {
  std::vector<double> iou;
  std::vector<double> accuracy;
  double miou = 0;
  double macc = 0;
  double aacc = 0;
  std::uint64_t pixels = 0;
};

inline Metrics compute_metrics(const ConfusionMatrix& cm) {
  const std::int64_t k = cm.num_classes();
  Metrics m;
  m.iou.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
  m.accuracy = m.iou;
  std::uint64_t diag = 0;
  double iou_sum = 0, acc_sum = 0;
  int iou_n = 0, acc_n = 0;
  for (std::int64_t c = 0; c < k; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::int64_t j = 0; j < k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const std::uint64_t tp = cm.at(c, c);
    diag += tp;
    m.pixels += row;
    const std::uint64_t uni = row + col - tp;
    if (uni > 0) {
      m.iou[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(uni);
      iou_sum += m.iou[static_cast<std::size_t>(c)];
      ++iou_n;
    }
    if (row > 0) {
      m.accuracy[static_cast<std::size_t>(c)] = static_cast<double>(tp) / static_cast<double>(row);
      acc_sum += m.accuracy[static_cast<std::size_t>(c)];
      ++acc_n;
    }
  }
  m.miou = iou_n ? 100 * iou_sum / iou_n : 0;
  m.macc = acc_n ? 100 * acc_sum / acc_n : 0;
  m.aacc = m.pixels ? 100 * static_cast<double>(diag) / static_cast<double>(m.pixels) : 0;
  return m;
}

inline std::string format_metrics_text(const Metrics& m, const std::vector<std::string>& names = {}) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(12) << "class" << std::right << std::setw(8) << "IoU" << std::setw(8) << "Acc" << "\n";
  for (std::size_t c = 0; c < m.iou.size(); ++c) {
    os << std::left << std::setw(12) << (c < names.size() ? names[c] : std::to_string(c)) << std::right << std::setw(8)
       << 100 * m.iou[c] << std::setw(8) << 100 * m.accuracy[c] << "\n";
  }
  os << "mIoU " << m.miou << "  mAcc " << m.macc << "  aAcc " << m.aacc << "\n";
  return os.str();
}

inline std::string format_metrics_kv(const Metrics& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "miou=" << m.miou << "\nmacc=" << m.macc << "\naacc=" << m.aacc << "\npixels=" << m.pixels << "\n";
  for (std::size_t c = 0; c < m.iou.size(); ++c) os << "iou." << c << "=" << m.iou[c] << "\n";
  return os.str();
}

}  // namespace dmamba::train
