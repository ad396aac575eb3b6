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

// Camera models mapping between pixel coordinates and unit viewing rays.
// Camera frame: x right, y down, z forward. Pixel centres sit at integer
// coordinates (column u, row v).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

namespace dmamba::data {

using Ray = std::array<double, 3>;

enum class CameraKind { kPinhole, kEquidistantFisheye, kEquirectangular };

inline std::string camera_name(CameraKind k) {
  switch (k) {
    case CameraKind::kPinhole: return "pinhole";
    case CameraKind::kEquidistantFisheye: return "equidistant_fisheye";
    case CameraKind::kEquirectangular: return "equirectangular";
  }
  return "unknown";
}

inline CameraKind camera_from_name(const std::string& s) {
  if (s == "pinhole") return CameraKind::kPinhole;
  if (s == "equidistant_fisheye" || s == "fisheye") return CameraKind::kEquidistantFisheye;
  if (s == "equirectangular" || s == "equirect") return CameraKind::kEquirectangular;
  throw std::invalid_argument("unknown camera kind '" + s + "'");
}

struct CameraModel {
  CameraKind kind = CameraKind::kPinhole;
  int width = 0, height = 0;
  double fov_deg = 0;  // horizontal for pinhole, full image-circle for fisheye, 360 for equirect
  double focal = 0;
  double cx = 0, cy = 0;

  static CameraModel pinhole(int width, int height, double focal) {
    CameraModel c{CameraKind::kPinhole, width, height, 0, focal, (width - 1) / 2.0, (height - 1) / 2.0};
    c.fov_deg = 2 * std::atan((width / 2.0) / focal) * 180 / std::numbers::pi;
    return c;
  }

  /// r = f * theta; the image circle (theta = fov / 2) spans the full width.
  static CameraModel fisheye(int width, int height, double fov_deg = 180) {
    if (fov_deg <= 0 || fov_deg > 180) throw std::invalid_argument("fisheye fov must be in (0, 180]");
    const double half = fov_deg / 2 * std::numbers::pi / 180;
    return {CameraKind::kEquidistantFisheye, width, height, fov_deg, (width / 2.0) / half, (width - 1) / 2.0,
            (height - 1) / 2.0};
  }

  static CameraModel equirect(int width, int height) {
    return {CameraKind::kEquirectangular, width, height, 360, width / (2 * std::numbers::pi), (width - 1) / 2.0,
            (height - 1) / 2.0};
  }

  /// Viewing ray through pixel (u, v); empty outside the camera's domain.
  std::optional<Ray> unproject(double u, double v) const {
    const double dx = u - cx, dy = v - cy;
    switch (kind) {
      case CameraKind::kPinhole: {
        const double n = std::sqrt(dx * dx + dy * dy + focal * focal);
        return Ray{dx / n, dy / n, focal / n};
      }
      case CameraKind::kEquidistantFisheye: {
        const double r = std::sqrt(dx * dx + dy * dy);
        const double theta = r / focal;
        if (theta > fov_deg / 2 * std::numbers::pi / 180) return std::nullopt;
        if (r == 0) return Ray{0, 0, 1};
        const double s = std::sin(theta) / r;
        return Ray{dx * s, dy * s, std::cos(theta)};
      }
      case CameraKind::kEquirectangular: {
        const double lon = (u + 0.5) / width * 2 * std::numbers::pi - std::numbers::pi;
        const double lat = std::numbers::pi / 2 - (v + 0.5) / height * std::numbers::pi;
        return Ray{std::cos(lat) * std::sin(lon), -std::sin(lat), std::cos(lat) * std::cos(lon)};
      }
    }
    return std::nullopt;
  }

  /// Pixel of a ray; empty if the camera cannot see it.
  std::optional<std::array<double, 2>> project(const Ray& r) const {
    switch (kind) {
      case CameraKind::kPinhole:
        if (r[2] <= 0) return std::nullopt;
        return std::array<double, 2>{cx + focal * r[0] / r[2], cy + focal * r[1] / r[2]};
      case CameraKind::kEquidistantFisheye: {
        const double s = std::hypot(r[0], r[1]);
        const double theta = std::atan2(s, r[2]);
        if (theta > fov_deg / 2 * std::numbers::pi / 180) return std::nullopt;
        if (s == 0) return std::array<double, 2>{cx, cy};
        return std::array<double, 2>{cx + focal * theta * r[0] / s, cy + focal * theta * r[1] / s};
      }
      case CameraKind::kEquirectangular: {
        const double lon = std::atan2(r[0], r[2]);
        const double lat = std::asin(std::clamp(-r[1], -1.0, 1.0));
        return std::array<double, 2>{(lon + std::numbers::pi) / (2 * std::numbers::pi) * width - 0.5,
                                     (std::numbers::pi / 2 - lat) / std::numbers::pi * height - 0.5};
      }
    }
    return std::nullopt;
  }
};

}  // namespace dmamba::data
