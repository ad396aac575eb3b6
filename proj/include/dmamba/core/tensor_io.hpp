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

// DMTS tensor records and named-tensor checkpoint archives.
//
// Tensor record (all integers little-endian):
//   "DMTS" | u32 version | u32 dtype (1 = f32, 2 = f64) | u32 rank |
//   u64 dims[rank] | payload
// Checkpoint archive:
//   u64 count | count x (u32 name length | name bytes | tensor record)

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "dmamba/core/tensor.hpp"

namespace dmamba::io {

inline constexpr std::array<char, 4> kMagic{'D', 'M', 'T', 'S'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 1;
inline constexpr std::uint32_t kDtypeF64 = 2;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename U>
void put_le(std::ostream& os, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  std::array<unsigned char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(U))) throw FormatError("dmts: truncated stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  U value;
  std::memcpy(&value, bytes.data(), sizeof(U));
  return value;
}

template <typename T>
constexpr std::uint32_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "DMTS stores f32 or f64");
  return std::is_same_v<T, float> ? kDtypeF32 : kDtypeF64;
}

}  // namespace detail

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write(kMagic.data(), kMagic.size());
  detail::put_le<std::uint32_t>(os, kFormatVersion);
  detail::put_le<std::uint32_t>(os, detail::dtype_code<T>());
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
  } else {
    for (T v : t.data()) detail::put_le<T>(os, v);
  }
  if (!os) throw FormatError("dmts: write failed");
}

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

inline AnyTensor read_any_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size())) throw FormatError("dmts: truncated stream");
  if (magic != kMagic) throw FormatError("dmts: bad magic");
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kFormatVersion) throw FormatError("dmts: unsupported version " + std::to_string(version));
  const auto dtype = detail::get_le<std::uint32_t>(is);
  const auto rank = detail::get_le<std::uint32_t>(is);
  if (rank > 16) throw FormatError("dmts: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::int64_t>(detail::get_le<std::uint64_t>(is));
  auto payload = [&]<typename T>(T) {
    std::vector<T> values(static_cast<std::size_t>(shape_numel(shape)));
    if constexpr (std::endian::native == std::endian::little) {
      if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(T)))) {
        throw FormatError("dmts: truncated payload");
      }
    } else {
      for (auto& v : values) v = detail::get_le<T>(is);
    }
    return Tensor<T>(shape, std::move(values));
  };
  if (dtype == kDtypeF32) return payload(float{});
  if (dtype == kDtypeF64) return payload(double{});
  throw FormatError("dmts: unknown dtype code " + std::to_string(dtype));
}

/// Reads a record and converts it to T.
template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  return std::visit([](auto&& t) { return cast<T>(t); }, read_any_tensor(is));
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_tensor<T>(is);
}

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
void write_checkpoint(std::ostream& os, const NamedTensors<T>& entries) {
  detail::put_le<std::uint64_t>(os, entries.size());
  for (const auto& [name, t] : entries) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, t);
  }
}

template <typename T>
NamedTensors<T> read_checkpoint(std::istream& is) {
  const auto count = detail::get_le<std::uint64_t>(is);
  NamedTensors<T> entries;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = detail::get_le<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("checkpoint: truncated name");
    entries.emplace_back(std::move(name), read_tensor<T>(is));
  }
  return entries;
}

template <typename T>
void save_checkpoint(const std::string& path, const NamedTensors<T>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(os, entries);
}

template <typename T>
NamedTensors<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_checkpoint<T>(is);
}

}  // namespace dmamba::io
