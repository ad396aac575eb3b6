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

// Training loop and evaluation for segmentation models.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "dmamba/core/loss.hpp"
#include "dmamba/core/ops.hpp"
#include "dmamba/data/dataset.hpp"
#include "dmamba/model.hpp"
#include "dmamba/train/metrics.hpp"
#include "dmamba/train/optim.hpp"

namespace dmamba::train {

struct TrainConfig {
  double lr = 6e-5;
  double weight_decay = 0.01;
  std::int64_t warmup = 1500;
  std::int64_t iterations = 160000;
  double power = 0.9;
  std::int64_t batch_size = 2;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;  // <= 0 disables clipping
  bool hflip = true;

  LrSchedule schedule() const { return {lr, warmup, iterations, power}; }
  void validate() const {
    schedule().validate();
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (weight_decay < 0) throw std::invalid_argument("weight_decay must be >= 0");
  }
};

struct TrainResult {
  std::vector<double> losses;  // one per iteration
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void append_sample(const data::Dataset& d, std::size_t i, bool flip, std::vector<float>& img,
                          std::vector<std::int32_t>& lbl) {
  const std::int64_t H = d.height, W = d.width;
  const float* src = d.images[i].ptr();
  const auto& lab = d.labels[i];
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t x = 0; x < W; ++x) img.push_back(src[(c * H + y) * W + (flip ? W - 1 - x : x)]);
    }
  }
  for (std::int64_t y = 0; y < H; ++y) {
    for (std::int64_t x = 0; x < W; ++x) lbl.push_back(lab[static_cast<std::size_t>(y * W + (flip ? W - 1 - x : x))]);
  }
}

}  // namespace detail

/// Trains `model` in place on `data`. Each log line reads `iter, lr, loss`
/// where lr is the rate applied at that step. A non-finite loss aborts with
/// NonFiniteLoss.
template <typename T>
TrainResult train_model(SegModel<T>& model, const data::Dataset& data, const TrainConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (data.num_classes != model.config().decoder.num_classes) {
    throw std::invalid_argument("train: dataset has " + std::to_string(data.num_classes) + " classes, model head " +
                                std::to_string(model.config().decoder.num_classes));
  }
  auto params = model.parameters();
  for (auto& p : params) p.set_requires_grad(true);
  AdamW<T> opt(params, {0.9, 0.999, 1e-8, cfg.weight_decay});
  const LrSchedule sched = cfg.schedule();

  std::mt19937_64 rng(data::splitmix64(cfg.seed ^ 0xD47A0A7EULL));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  std::bernoulli_distribution coin(0.5);

  if (log) *log << "# iter, lr, loss\n";
  TrainResult result;
  const std::int64_t B = cfg.batch_size, H = data.height, W = data.width;
  for (std::int64_t it = 0; it < cfg.iterations; ++it) {
    std::vector<float> img;
    std::vector<std::int32_t> lbl;
    img.reserve(static_cast<std::size_t>(B * 3 * H * W));
    lbl.reserve(static_cast<std::size_t>(B * H * W));
    for (std::int64_t b = 0; b < B; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const bool flip = cfg.hflip && coin(rng);
      detail::append_sample(data, order[cursor++], flip, img, lbl);
    }
    std::vector<T> x(img.begin(), img.end());
    Tensor<T> batch({B, 3, H, W}, std::move(x));

    opt.zero_grad();
    Tensor<T> loss = cross_entropy(model(batch), std::span<const std::int32_t>(lbl));
    const double value = static_cast<double>(loss.item());
    const double lr = sched(it);
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "train: non-finite loss " << value << " at iteration " << it << " (lr " << lr << ")";
      throw NonFiniteLoss(msg.str());
    }
    loss.backward();
    clip_grad_norm(params, cfg.clip_norm);
    opt.step(lr);
    result.losses.push_back(value);
    if (log) *log << it << ", " << std::setprecision(6) << std::scientific << lr << ", " << std::fixed << value << "\n";
  }
  return result;
}

/// Arg-max evaluation over every sample of `data`; samples are split across
/// `threads` workers whose integer confusion counts are summed.
template <typename T>
ConfusionMatrix confusion(const SegModel<T>& model, const data::Dataset& data, unsigned threads = 0) {
  const std::int64_t k = model.config().decoder.num_classes;
  if (data.num_classes != k) {
    throw std::invalid_argument("evaluate: dataset has " + std::to_string(data.num_classes) + " classes, model head " +
                                std::to_string(k));
  }
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(threads, data.size())));
  std::vector<ConfusionMatrix> parts(threads, ConfusionMatrix(k));
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](unsigned t) {
    try {
      autograd::NoGradGuard guard;
      for (std::size_t i = t; i < data.size(); i += threads) {
        const auto& src = data.images[i];
        Tensor<T> x(src.shape(), std::vector<T>(src.values().begin(), src.values().end()));
        const auto pred = argmax_channels(model(x));
        parts[t].add(pred, data.labels[i]);
      }
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work, t);
  work(0);
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  ConfusionMatrix total(k);
  for (const auto& p : parts) total.merge(p);
  return total;
}

template <typename T>
Metrics evaluate(const SegModel<T>& model, const data::Dataset& data, unsigned threads = 0) {
  return compute_metrics(confusion(model, data, threads));
}

}  // namespace dmamba::train
