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

// On-disk synthetic datasets: DMTS tensors plus a JSON manifest.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dmamba/core/tensor_io.hpp"
#include "dmamba/data/synth.hpp"
#include "json.hpp"

namespace dmamba::data {

inline constexpr int kManifestVersion = 1;

struct DataConfig {
  std::int64_t num_samples = 500;
  CameraKind camera = CameraKind::kEquidistantFisheye;
  int height = 64;
  int width = 128;
  double fov_deg = 180;  // fisheye only
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  SceneConfig scene{};
};

struct ManifestEntry {
  std::string image_path;  // relative to the manifest directory
  std::string label_path;
  std::string split;  // "train" or "val"
  std::uint64_t seed = 0;
};

struct Manifest {
  int version = kManifestVersion;
  std::string camera;
  std::vector<std::string> classes;
  std::uint64_t seed = 0;
  std::int64_t height = 0, width = 0;
  std::vector<ManifestEntry> samples;

  std::int64_t count(const std::string& split) const {
    return std::count_if(samples.begin(), samples.end(), [&](const auto& s) { return s.split == split; });
  }
};

inline std::uint64_t sample_seed(std::uint64_t master, std::int64_t index) {
  return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(index)));
}

inline CameraModel target_camera(const DataConfig& cfg) {
  switch (cfg.camera) {
    case CameraKind::kPinhole: return CameraModel::pinhole(cfg.width, cfg.height, cfg.scene.focal * cfg.width / cfg.scene.width);
    case CameraKind::kEquidistantFisheye: return CameraModel::fisheye(cfg.width, cfg.height, cfg.fov_deg);
    case CameraKind::kEquirectangular: return CameraModel::equirect(cfg.width, cfg.height);
  }
  throw std::invalid_argument("unknown camera kind");
}

/// Renders sample `index` of a dataset in the configured camera.
inline Sample make_sample(const DataConfig& cfg, std::int64_t index) {
  const Sample scene = render_scene(sample_seed(cfg.seed, index), cfg.scene);
  const auto src = CameraModel::pinhole(cfg.scene.width, cfg.scene.height, cfg.scene.focal);
  const auto dst = target_camera(cfg);
  switch (cfg.camera) {
    case CameraKind::kEquidistantFisheye: return warp_fisheye(scene, src, dst);
    case CameraKind::kEquirectangular: return warp_equirect(scene, dst);
    case CameraKind::kPinhole: return warp(scene, src, dst);
  }
  return scene;
}

inline Tensor<float> label_tensor(const Sample& s) {
  std::vector<float> v(s.label.begin(), s.label.end());
  return Tensor<float>({s.height, s.width}, std::move(v));
}

inline std::string manifest_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["version"] = m.version;
  j["camera"] = m.camera;
  j["classes"] = m.classes;
  j["seed"] = m.seed;
  j["height"] = m.height;
  j["width"] = m.width;
  j["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : m.samples) {
    j["samples"].push_back({{"image_path", s.image_path}, {"label_path", s.label_path}, {"split", s.split}, {"seed", s.seed}});
  }
  return j.dump(2) + "\n";
}

inline Manifest parse_manifest(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Manifest m;
  m.version = j.at("version").get<int>();
  if (m.version != kManifestVersion) throw std::runtime_error("manifest: unsupported version " + std::to_string(m.version));
  m.camera = j.at("camera").get<std::string>();
  m.classes = j.at("classes").get<std::vector<std::string>>();
  m.seed = j.value("seed", std::uint64_t{0});
  m.height = j.value("height", std::int64_t{0});
  m.width = j.value("width", std::int64_t{0});
  for (const auto& e : j.at("samples")) {
    m.samples.push_back({e.at("image_path").get<std::string>(), e.at("label_path").get<std::string>(),
                         e.at("split").get<std::string>(), e.value("seed", std::uint64_t{0})});
  }
  return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_manifest(ss.str());
}

/// Writes `cfg.num_samples` samples under `out_dir` (images/, labels/,
/// manifest.json) and returns the manifest. The first round(n * train_fraction)
/// samples form the train split. Rendering runs on `threads` workers.
inline Manifest gen_dataset(const DataConfig& cfg, const std::filesystem::path& out_dir, unsigned threads = 0) {
  namespace fs = std::filesystem;
  if (cfg.num_samples < 0) throw std::invalid_argument("gen_dataset: negative sample count");
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "labels");

  Manifest m;
  m.camera = camera_name(cfg.camera);
  m.classes = class_names();
  m.seed = cfg.seed;
  m.height = cfg.height;
  m.width = cfg.width;
  const auto n_train = static_cast<std::int64_t>(std::llround(cfg.num_samples * cfg.train_fraction));
  for (std::int64_t i = 0; i < cfg.num_samples; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%05lld.dmts", static_cast<long long>(i));
    m.samples.push_back({std::string("images/") + name, std::string("labels/") + name, i < n_train ? "train" : "val",
                         sample_seed(cfg.seed, i)});
  }

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::int64_t>(threads, std::max<std::int64_t>(cfg.num_samples, 1)));
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](unsigned t) {
    try {
      for (std::int64_t i = t; i < cfg.num_samples; i += threads) {
        const Sample s = make_sample(cfg, i);
        const auto& e = m.samples[static_cast<std::size_t>(i)];
        io::save_tensor((out_dir / e.image_path).string(), s.image);
        io::save_tensor((out_dir / e.label_path).string(), label_tensor(s));
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

  std::ofstream os(out_dir / "manifest.json", std::ios::binary);
  os << manifest_json(m);
  if (!os) throw std::runtime_error("cannot write " + (out_dir / "manifest.json").string());
  return m;
}

/// One split of a dataset held in memory.
struct Dataset {
  std::vector<Tensor<float>> images;               // each [1, 3, H, W]
  std::vector<std::vector<std::int32_t>> labels;  // each H * W
  std::int64_t num_classes = 0, height = 0, width = 0;

  std::size_t size() const { return images.size(); }
};

inline Dataset load_split(const std::filesystem::path& manifest_path, const std::string& split) {
  const Manifest m = read_manifest(manifest_path);
  const auto root = manifest_path.parent_path();
  Dataset d;
  d.num_classes = static_cast<std::int64_t>(m.classes.size());
  for (const auto& e : m.samples) {
    if (!split.empty() && e.split != split) continue;
    auto img = io::load_tensor<float>((root / e.image_path).string());
    auto lbl = io::load_tensor<float>((root / e.label_path).string());
    if (img.rank() != 4 || img.dim(0) != 1 || img.dim(1) != 3 || lbl.rank() != 2 || lbl.dim(0) != img.dim(2) ||
        lbl.dim(1) != img.dim(3)) {
      throw std::runtime_error("dataset: malformed sample " + e.image_path);
    }
    if (d.images.empty()) {
      d.height = img.dim(2);
      d.width = img.dim(3);
    } else if (img.dim(2) != d.height || img.dim(3) != d.width) {
      throw std::runtime_error("dataset: inconsistent sample size in " + e.image_path);
    }
    std::vector<std::int32_t> ids(lbl.values().size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto v = static_cast<std::int32_t>(lbl.values()[i]);
      if (v != kIgnore && (v < 0 || v >= d.num_classes)) throw std::runtime_error("dataset: label out of range in " + e.label_path);
      ids[i] = v;
    }
    d.images.push_back(std::move(img));
    d.labels.push_back(std::move(ids));
  }
  return d;
}

}  // namespace dmamba::data
