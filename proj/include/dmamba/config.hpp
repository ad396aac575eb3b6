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

// Run configuration: JSON with a few top-level keys plus "model", "data" and
// "train" sections. Every field has a default and unknown keys are rejected.

#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dmamba/data/dataset.hpp"
#include "dmamba/model.hpp"
#include "dmamba/train/trainer.hpp"
#include "json.hpp"

namespace dmamba {

using Json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 0;  // model initialisation and batch order
  std::string out = "out";
  std::string manifest;  // dataset used by train / eval / ablate
  ModelConfig model = ModelConfig::micro(6);
  data::DataConfig data{};
  train::TrainConfig train = desk_recipe();

  /// Short schedule for CPU runs on the synthetic data: no pretrained
  /// encoder, so the peak rate is higher than the library default.
  static train::TrainConfig desk_recipe() {
    train::TrainConfig t;
    t.lr = 2e-3;
    t.warmup = 200;
    t.iterations = 2000;
    return t;
  }
};

namespace config_detail {

template <typename E>
struct EnumNames;

template <>
struct EnumNames<backbone::EncoderKind> {
  static constexpr std::pair<backbone::EncoderKind, const char*> table[] = {{backbone::EncoderKind::kConv, "conv"},
                                                                            {backbone::EncoderKind::kSs2d, "ss2d"}};
};
template <>
struct EnumNames<decoder::Upsample> {
  static constexpr std::pair<decoder::Upsample, const char*> table[] = {{decoder::Upsample::kPixelShuffle, "pixelshuffle"},
                                                                        {decoder::Upsample::kBilinear, "bilinear"},
                                                                        {decoder::Upsample::kBicubic, "bicubic"}};
};
template <>
struct EnumNames<deform::Modulation> {
  static constexpr std::pair<deform::Modulation, const char*> table[] = {{deform::Modulation::kSigmoid, "sigmoid"},
                                                                         {deform::Modulation::kIdentity, "identity"}};
};
template <>
struct EnumNames<ssm::ScanKernel> {
  static constexpr std::pair<ssm::ScanKernel, const char*> table[] = {{ssm::ScanKernel::kReference, "reference"},
                                                                      {ssm::ScanKernel::kChunked, "chunked"}};
};

template <typename E>
std::string to_name(E e) {
  for (const auto& [v, n] : EnumNames<E>::table) {
    if (v == e) return n;
  }
  throw ConfigError("unnamed enum value");
}

template <typename E>
E from_name(const std::string& s, const std::string& key) {
  std::string options;
  for (const auto& [v, n] : EnumNames<E>::table) {
    if (s == n) return v;
    options += std::string(options.empty() ? "" : ", ") + n;
  }
  throw ConfigError(key + ": '" + s + "' is not one of " + options);
}

inline void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

template <typename V>
void read(const Json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename E>
void read_enum(const Json& j, const char* key, E& out, const std::string& where) {
  if (!j.contains(key)) return;
  std::string s;
  read(j, key, s, where);
  out = from_name<E>(s, where + "." + key);
}

}  // namespace config_detail

inline Json model_to_json(const ModelConfig& m) {
  using config_detail::to_name;
  const auto& d = m.decoder;
  const auto& s = d.ss2d;
  return Json{{"channels", d.channels},
              {"depths", m.encoder.depths},
              {"encoder", to_name(m.encoder.kind)},
              {"num_classes", d.num_classes},
              {"d_state", s.d_state},
              {"ssm_ratio", s.ssm_ratio},
              {"dt_rank", s.dt_rank},
              {"directions", s.directions},
              {"gated", s.gated},
              {"scan_kernel", to_name(s.kernel)},
              {"deformable", d.deformable},
              {"modulation", to_name(d.modulation)},
              {"upsample", to_name(d.upsample)},
              {"fusion_depth", d.fusion_depth},
              {"fusion_groups", d.fusion_groups},
              {"final_projection", d.final_projection},
              {"head_convs", d.head_convs}};
}

/// Applies the keys present in `j` on top of `m`.
inline void model_from_json(const Json& j, ModelConfig& m) {
  using namespace config_detail;
  const std::string w = "model";
  reject_unknown(j,
                 {"channels", "depths", "encoder", "num_classes", "d_state", "ssm_ratio", "dt_rank", "directions", "gated",
                  "scan_kernel", "deformable", "modulation", "upsample", "fusion_depth", "fusion_groups",
                  "final_projection", "head_convs"},
                 w);
  auto& d = m.decoder;
  read(j, "channels", d.channels, w);
  m.encoder.channels = d.channels;
  read(j, "depths", m.encoder.depths, w);
  read_enum(j, "encoder", m.encoder.kind, w);
  read(j, "num_classes", d.num_classes, w);
  read(j, "d_state", d.ss2d.d_state, w);
  read(j, "ssm_ratio", d.ss2d.ssm_ratio, w);
  read(j, "dt_rank", d.ss2d.dt_rank, w);
  read(j, "directions", d.ss2d.directions, w);
  read(j, "gated", d.ss2d.gated, w);
  read_enum(j, "scan_kernel", d.ss2d.kernel, w);
  read(j, "deformable", d.deformable, w);
  read_enum(j, "modulation", d.modulation, w);
  read_enum(j, "upsample", d.upsample, w);
  read(j, "fusion_depth", d.fusion_depth, w);
  read(j, "fusion_groups", d.fusion_groups, w);
  read(j, "final_projection", d.final_projection, w);
  read(j, "head_convs", d.head_convs, w);
  m.encoder.ss2d = d.ss2d;
}

inline Json data_to_json(const data::DataConfig& d) {
  return Json{{"num_samples", d.num_samples}, {"camera", data::camera_name(d.camera)}, {"height", d.height},
              {"width", d.width},             {"fov", d.fov_deg},                      {"train_fraction", d.train_fraction},
              {"seed", d.seed},               {"num_shapes", d.scene.num_shapes}};
}

inline void data_from_json(const Json& j, data::DataConfig& d) {
  using namespace config_detail;
  const std::string w = "data";
  reject_unknown(j, {"num_samples", "camera", "height", "width", "fov", "train_fraction", "seed", "num_shapes"}, w);
  read(j, "num_samples", d.num_samples, w);
  if (j.contains("camera")) {
    std::string s;
    read(j, "camera", s, w);
    try {
      d.camera = data::camera_from_name(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("data.camera: ") + e.what());
    }
  }
  read(j, "height", d.height, w);
  read(j, "width", d.width, w);
  read(j, "fov", d.fov_deg, w);
  read(j, "train_fraction", d.train_fraction, w);
  read(j, "seed", d.seed, w);
  read(j, "num_shapes", d.scene.num_shapes, w);
}

inline Json train_to_json(const train::TrainConfig& t) {
  return Json{{"lr", t.lr},         {"weight_decay", t.weight_decay}, {"warmup", t.warmup},
              {"iterations", t.iterations}, {"power", t.power},   {"batch_size", t.batch_size},
              {"clip_norm", t.clip_norm},   {"hflip", t.hflip}};
}

inline void train_from_json(const Json& j, train::TrainConfig& t) {
  using namespace config_detail;
  const std::string w = "train";
  reject_unknown(j, {"lr", "weight_decay", "warmup", "iterations", "power", "batch_size", "clip_norm", "hflip"}, w);
  read(j, "lr", t.lr, w);
  read(j, "weight_decay", t.weight_decay, w);
  read(j, "warmup", t.warmup, w);
  read(j, "iterations", t.iterations, w);
  read(j, "power", t.power, w);
  read(j, "batch_size", t.batch_size, w);
  read(j, "clip_norm", t.clip_norm, w);
  read(j, "hflip", t.hflip, w);
}

inline Json to_json(const RunConfig& c) {
  return Json{{"seed", c.seed},
              {"out", c.out},
              {"manifest", c.manifest},
              {"model", model_to_json(c.model)},
              {"data", data_to_json(c.data)},
              {"train", train_to_json(c.train)}};
}

inline RunConfig parse_run_config(const std::string& text, RunConfig base = {}) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  using namespace config_detail;
  reject_unknown(j, {"seed", "out", "manifest", "model", "data", "train"}, "");
  read(j, "seed", base.seed, "");
  read(j, "out", base.out, "");
  read(j, "manifest", base.manifest, "");
  if (j.contains("model")) model_from_json(j["model"], base.model);
  if (j.contains("data")) data_from_json(j["data"], base.data);
  if (j.contains("train")) train_from_json(j["train"], base.train);
  base.train.seed = base.seed;
  return base;
}

inline RunConfig load_run_config(const std::string& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), std::move(base));
}

}  // namespace dmamba
