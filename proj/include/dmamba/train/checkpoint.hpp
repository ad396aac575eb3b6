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

// Model checkpoints: DMTS parameter records plus a JSON sidecar (<path>.json)
// holding the model configuration needed to rebuild the network.

#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dmamba/config.hpp"
#include "dmamba/core/tensor_io.hpp"

namespace dmamba::train {

inline std::string sidecar_path(const std::string& checkpoint) { return checkpoint + ".json"; }

template <typename T>
void save_model(const std::string& path, const SegModel<T>& model, const std::vector<std::string>& classes = {}) {
  io::save_checkpoint(path, model.named_parameters());
  Json side{{"format", "dmamba-checkpoint"}, {"version", 1}, {"model", model_to_json(model.config())}};
  if (!classes.empty()) side["classes"] = classes;
  std::ofstream os(sidecar_path(path), std::ios::binary);
  os << side.dump(2) << "\n";
  if (!os) throw std::runtime_error("cannot write " + sidecar_path(path));
}

inline ModelConfig read_model_config(const std::string& path) {
  std::ifstream is(sidecar_path(path));
  if (!is) throw std::runtime_error("missing checkpoint sidecar " + sidecar_path(path));
  std::stringstream ss;
  ss << is.rdbuf();
  const Json side = Json::parse(ss.str());
  ModelConfig cfg = ModelConfig::micro(6);
  model_from_json(side.at("model"), cfg);
  return cfg;
}

template <typename T>
std::unique_ptr<SegModel<T>> load_model(const std::string& path) {
  const ModelConfig cfg = read_model_config(path);
  nn::Rng rng(0);
  auto model = std::make_unique<SegModel<T>>(cfg, rng);
  model->load_parameters(io::load_checkpoint<T>(path));
  return model;
}

}  // namespace dmamba::train
