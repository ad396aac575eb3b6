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

// Procedural labelled scenes and their warps into wide-FoV cameras.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmamba/core/loss.hpp"
#include "dmamba/core/tensor.hpp"
#include "dmamba/data/camera.hpp"

namespace dmamba::data {

inline constexpr std::int32_t kIgnore = kIgnoreLabel;

enum class ShapeKind { kDisc = 1, kRectangle, kBar, kRing, kTriangle };

inline const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names{"background", "disc", "rectangle", "bar", "ring", "triangle"};
  return names;
}
inline std::int64_t num_classes() { return static_cast<std::int64_t>(class_names().size()); }

struct Sample {
  Tensor<float> image;               // [1, 3, H, W], values in [0, 1]
  std::vector<std::int32_t> label;   // H * W class ids, kIgnore where undefined
  std::int64_t height = 0, width = 0;
  std::uint64_t seed = 0;
  CameraKind camera = CameraKind::kPinhole;

  std::int32_t label_at(std::int64_t v, std::int64_t u) const { return label[static_cast<std::size_t>(v * width + u)]; }
  float pixel(int c, std::int64_t v, std::int64_t u) const {
    return image.data()[static_cast<std::size_t>((c * height + v) * width + u)];
  }
};

struct SceneConfig {
  int height = 96;
  int width = 192;
  int num_shapes = 10;
  double focal = 25.7;  // pinhole focal of the rendered scene, ~150 deg horizontal view
  float color_jitter = 0.12f;
  float pixel_noise = 0.03f;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace detail {

using Vec2 = std::array<double, 2>;

struct Shape {
  ShapeKind kind;
  Vec2 centre;
  double a = 0, b = 0, angle = 0;  // size parameters and rotation
  std::array<Vec2, 3> tri{};
  std::array<float, 3> color{};

  bool contains(double x, double y) const {
    const double dx = x - centre[0], dy = y - centre[1];
    const double c = std::cos(angle), s = std::sin(angle);
    const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
    switch (kind) {
      case ShapeKind::kDisc: return dx * dx + dy * dy <= a * a;
      case ShapeKind::kRectangle:
      case ShapeKind::kBar: return std::abs(lx) <= a / 2 && std::abs(ly) <= b / 2;
      case ShapeKind::kRing: {
        const double r2 = dx * dx + dy * dy;
        return r2 <= a * a && r2 >= (a - b) * (a - b);
      }
      case ShapeKind::kTriangle: {
        auto side = [&](const Vec2& p, const Vec2& q) {
          return (q[0] - p[0]) * (y - p[1]) - (q[1] - p[1]) * (x - p[0]);
        };
        const double d0 = side(tri[0], tri[1]), d1 = side(tri[1], tri[2]), d2 = side(tri[2], tri[0]);
        return (d0 >= 0 && d1 >= 0 && d2 >= 0) || (d0 <= 0 && d1 <= 0 && d2 <= 0);
      }
    }
    return false;
  }
};

inline const std::array<std::array<float, 3>, 6>& base_colors() {
  static const std::array<std::array<float, 3>, 6> c{{{0.45f, 0.45f, 0.45f},
                                                      {0.85f, 0.25f, 0.20f},
                                                      {0.20f, 0.70f, 0.25f},
                                                      {0.20f, 0.35f, 0.85f},
                                                      {0.90f, 0.80f, 0.20f},
                                                      {0.70f, 0.30f, 0.80f}}};
  return c;
}

inline Shape random_shape(std::mt19937_64& rng, const SceneConfig& cfg, float jitter) {
  std::uniform_real_distribution<double> U(0, 1);
  std::uniform_int_distribution<int> kind_dist(1, 5);
  Shape s{};
  s.kind = static_cast<ShapeKind>(kind_dist(rng));
  s.centre = {U(rng) * (cfg.width - 1), U(rng) * (cfg.height - 1)};
  s.angle = U(rng) * std::numbers::pi;
  const double scale = cfg.height / 96.0;
  switch (s.kind) {
    case ShapeKind::kDisc: s.a = (6 + 12 * U(rng)) * scale; break;
    case ShapeKind::kRectangle:
      s.a = (10 + 30 * U(rng)) * scale;
      s.b = (10 + 30 * U(rng)) * scale;
      break;
    case ShapeKind::kBar:
      s.a = (30 + 60 * U(rng)) * scale;
      s.b = (2 + 2 * U(rng)) * scale;
      break;
    case ShapeKind::kRing:
      s.a = (8 + 12 * U(rng)) * scale;
      s.b = (2 + 2 * U(rng)) * scale;
      break;
    case ShapeKind::kTriangle: {
      const double r = (8 + 12 * U(rng)) * scale;
      for (int k = 0; k < 3; ++k) {
        const double t = s.angle + k * 2 * std::numbers::pi / 3 + (U(rng) - 0.5) * 0.6;
        s.tri[static_cast<std::size_t>(k)] = {s.centre[0] + r * std::cos(t), s.centre[1] + r * std::sin(t)};
      }
      break;
    }
  }
  const auto& base = base_colors()[static_cast<std::size_t>(s.kind)];
  for (std::size_t c = 0; c < 3; ++c) {
    s.color[c] = std::clamp(base[c] + static_cast<float>((2 * U(rng) - 1) * jitter), 0.0f, 1.0f);
  }
  return s;
}

}  // namespace detail

/// Pinhole scene: a shaded background (class 0) overlaid with `num_shapes`
/// shapes drawn in order, later shapes on top.
inline Sample render_scene(std::uint64_t seed, const SceneConfig& cfg = {}) {
  if (cfg.height <= 0 || cfg.width <= 0 || cfg.num_shapes < 0) {
    throw std::invalid_argument("render_scene: invalid scene size");
  }
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> U(0, 1);
  const std::int64_t H = cfg.height, W = cfg.width;

  std::array<std::array<float, 3>, 2> bg{};
  for (auto& corner : bg) {
    const float grey = static_cast<float>(0.30 + 0.30 * U(rng));
    for (auto& ch : corner) ch = grey + static_cast<float>((2 * U(rng) - 1) * 0.05);
  }
  const double gx = std::cos(U(rng) * 2 * std::numbers::pi), gy = std::sin(U(rng) * 2 * std::numbers::pi);

  std::vector<detail::Shape> shapes;
  shapes.reserve(static_cast<std::size_t>(cfg.num_shapes));
  for (int i = 0; i < cfg.num_shapes; ++i) shapes.push_back(detail::random_shape(rng, cfg, cfg.color_jitter));

  Sample out;
  out.height = H;
  out.width = W;
  out.seed = seed;
  out.camera = CameraKind::kPinhole;
  out.label.assign(static_cast<std::size_t>(H * W), 0);
  std::vector<float> img(static_cast<std::size_t>(3 * H * W));
  std::normal_distribution<float> noise(0.0f, cfg.pixel_noise);

  for (std::int64_t v = 0; v < H; ++v) {
    for (std::int64_t u = 0; u < W; ++u) {
      const double x = static_cast<double>(u), y = static_cast<double>(v);
      const double t = 0.5 + 0.5 * ((x / W - 0.5) * gx + (y / H - 0.5) * gy);
      std::array<float, 3> color{};
      for (std::size_t c = 0; c < 3; ++c) color[c] = static_cast<float>((1 - t) * bg[0][c] + t * bg[1][c]);
      std::int32_t cls = 0;
      for (const auto& s : shapes) {
        if (s.contains(x, y)) {
          cls = static_cast<std::int32_t>(s.kind);
          color = s.color;
        }
      }
      out.label[static_cast<std::size_t>(v * W + u)] = cls;
      for (std::size_t c = 0; c < 3; ++c) {
        img[(static_cast<std::int64_t>(c) * H + v) * W + u] = std::clamp(color[c] + noise(rng), 0.0f, 1.0f);
      }
    }
  }
  out.image = Tensor<float>({1, 3, H, W}, std::move(img));
  return out;
}

/// Maps a ray to source pixel coordinates; false when the source has no data there.
using SourceProjection = std::function<std::optional<std::array<double, 2>>(const Ray&)>;

/// Inverse-mapping warp. The image is sampled bilinearly, the label by
/// nearest neighbour; target pixels without a valid source get label kIgnore
/// and zero colour. Sample positions within 1e-9 of a pixel centre snap onto
/// it, so an identity mapping copies exactly.
inline Sample warp(const Sample& src, const CameraModel& dst, const SourceProjection& project) {
  const std::int64_t H = dst.height, W = dst.width, sh = src.height, sw = src.width;
  Sample out;
  out.height = H;
  out.width = W;
  out.seed = src.seed;
  out.camera = dst.kind;
  out.label.assign(static_cast<std::size_t>(H * W), kIgnore);
  std::vector<float> img(static_cast<std::size_t>(3 * H * W), 0.0f);
  const float* s = src.image.ptr();

  auto snap = [](double p) {
    const double r = std::round(p);
    return std::abs(p - r) < 1e-9 ? r : p;
  };
  for (std::int64_t v = 0; v < H; ++v) {
    for (std::int64_t u = 0; u < W; ++u) {
      const auto ray = dst.unproject(static_cast<double>(u), static_cast<double>(v));
      if (!ray) continue;
      const auto p = project(*ray);
      if (!p) continue;
      const double x = snap((*p)[0]), y = snap((*p)[1]);
      const auto nx = static_cast<std::int64_t>(std::lround(x)), ny = static_cast<std::int64_t>(std::lround(y));
      if (nx < 0 || ny < 0 || nx >= sw || ny >= sh) continue;
      out.label[static_cast<std::size_t>(v * W + u)] = src.label[static_cast<std::size_t>(ny * sw + nx)];

      const double xc = std::clamp(x, 0.0, static_cast<double>(sw - 1));
      const double yc = std::clamp(y, 0.0, static_cast<double>(sh - 1));
      const auto x0 = static_cast<std::int64_t>(std::floor(xc)), y0 = static_cast<std::int64_t>(std::floor(yc));
      const std::int64_t x1 = std::min(x0 + 1, sw - 1), y1 = std::min(y0 + 1, sh - 1);
      const double fx = xc - x0, fy = yc - y0;
      for (std::int64_t c = 0; c < 3; ++c) {
        const float* plane = s + c * sh * sw;
        const double val = (1 - fy) * ((1 - fx) * plane[y0 * sw + x0] + fx * plane[y0 * sw + x1]) +
                           fy * ((1 - fx) * plane[y1 * sw + x0] + fx * plane[y1 * sw + x1]);
        img[static_cast<std::size_t>((c * H + v) * W + u)] = static_cast<float>(val);
      }
    }
  }
  out.image = Tensor<float>({1, 3, H, W}, std::move(img));
  return out;
}

inline Sample warp(const Sample& src, const CameraModel& src_cam, const CameraModel& dst) {
  if (src_cam.width != src.width || src_cam.height != src.height) {
    throw std::invalid_argument("warp: source camera size does not match the sample");
  }
  return warp(src, dst, [&](const Ray& r) { return src_cam.project(r); });
}

/// Re-images a pinhole sample through an equidistant fisheye camera.
inline Sample warp_fisheye(const Sample& src, const CameraModel& src_cam, const CameraModel& fisheye) {
  if (fisheye.kind != CameraKind::kEquidistantFisheye) throw std::invalid_argument("warp_fisheye: not a fisheye camera");
  if (!(fisheye.fov_deg > 0 && fisheye.fov_deg <= 180)) throw std::invalid_argument("warp_fisheye: fov must be in (0, 180]");
  return warp(src, src_cam, fisheye);
}

/// Source chart used for panoramas: the flat scene is read as an elliptical
/// azimuthal equidistant map of the whole sphere centred on the forward axis.
/// The antipodal direction lies on the ellipse inscribed in the frame, so every
/// ray except the antipode itself has a source position.
inline std::optional<std::array<double, 2>> sphere_chart_project(const Ray& r, std::int64_t height, std::int64_t width) {
  const double kx = (width - 1) / (2 * std::numbers::pi), ky = (height - 1) / (2 * std::numbers::pi);
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  const double s = std::hypot(r[0], r[1]);
  const double theta = std::atan2(s, r[2]);
  if (s == 0) {
    if (r[2] > 0) return std::array<double, 2>{cx, cy};
    return std::nullopt;
  }
  return std::array<double, 2>{cx + kx * theta * r[0] / s, cy + ky * theta * r[1] / s};
}

inline Sample warp_equirect(const Sample& src, const CameraModel& pano) {
  if (pano.kind != CameraKind::kEquirectangular) throw std::invalid_argument("warp_equirect: not an equirectangular camera");
  const std::int64_t h = src.height, w = src.width;
  return warp(src, pano, [h, w](const Ray& r) { return sphere_chart_project(r, h, w); });
}

}  // namespace dmamba::data
