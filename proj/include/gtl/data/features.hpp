/* Copyright 2026 The GTL Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// GTLF feature file, little-endian:
//
//   "GTLF"     4 bytes
//   version    u32 (= 1)
//   count      u32
//   dim        u32
//   count × [ label u32 | modality u8 | f32 × dim ]
//
// Records get ids 0..count-1 in file order when loaded.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gtl/error.hpp"
#include "gtl/io/bytes.hpp"
#include "gtl/numerics/matrix.hpp"

namespace gtl {

struct FeatureRecord {
  std::uint64_t id = 0;
  std::vector<float> feature;
  std::uint32_t label = 0;
  std::uint8_t modality = 0;

  friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

inline constexpr std::string_view kFeatureMagic = "GTLF";
inline constexpr std::uint32_t kFeatureVersion = 1;

/// `dim` is required for an empty record list; otherwise it must match.
inline std::string encode_features(std::span<const FeatureRecord> records, std::size_t dim) {
  io::ByteWriter w;
  w.bytes(kFeatureMagic);
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(records.size()));
  w.u32(static_cast<std::uint32_t>(dim));
  for (const auto& r : records) {
    if (r.feature.size() != dim) {
      throw DimensionError("encode_features: record " + std::to_string(r.id) + " has " +
                           std::to_string(r.feature.size()) + " values, expected " +
                           std::to_string(dim));
    }
    w.u32(r.label);
    w.u8(r.modality);
    for (float v : r.feature) w.f32(v);
  }
  return w.take();
}

inline std::string encode_features(std::span<const FeatureRecord> records) {
  return encode_features(records, records.empty() ? 0 : records.front().feature.size());
}

struct FeatureFile {
  std::size_t dim = 0;
  std::vector<FeatureRecord> records;
};

inline FeatureFile decode_features(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (r.bytes(4, "magic") != kFeatureMagic) throw FormatError("bad feature-file magic", 0);
  const auto version = r.u32("version");
  if (version != kFeatureVersion) {
    throw FormatError("unsupported feature-file version " + std::to_string(version), 4);
  }
  const auto count = r.u32("record count");
  FeatureFile f;
  f.dim = r.u32("feature dim");
  const std::size_t record_bytes = 5 + 4 * f.dim;
  if (static_cast<std::uint64_t>(count) * record_bytes > r.remaining()) {
    throw FormatError("header promises " + std::to_string(count) + " records but only " +
                          std::to_string(r.remaining()) + " payload bytes follow",
                      r.offset());
  }
  f.records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    FeatureRecord rec;
    rec.id = i;
    rec.label = r.u32("label");
    rec.modality = r.u8("modality");
    rec.feature.resize(f.dim);
    for (float& v : rec.feature) {
      const std::size_t at = r.offset();
      v = r.f32("feature value");
      if (!std::isfinite(v)) throw FormatError("non-finite feature value", at);
    }
    f.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last record", r.offset());
  return f;
}

inline void save_features(const std::string& path, std::span<const FeatureRecord> records,
                          std::size_t dim) {
  io::write_file(path, encode_features(records, dim));
}

inline FeatureFile load_features(const std::string& path) {
  return decode_features(io::read_file(path));
}

/// Optional sidecar: {"0": "cat", "1": "dog", ...}
inline std::map<std::uint32_t, std::string> load_label_names(const std::string& path) {
  const auto j = nlohmann::json::parse(io::read_file(path));
  std::map<std::uint32_t, std::string> names;
  for (const auto& [k, v] : j.items()) names[static_cast<std::uint32_t>(std::stoul(k))] = v;
  return names;
}

inline void save_label_names(const std::string& path,
                             const std::map<std::uint32_t, std::string>& names) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : names) j[std::to_string(k)] = v;
  io::write_file(path, j.dump(2) + "\n");
}

/// Features stacked row-wise and upcast to double.
inline Matrix feature_matrix(std::span<const FeatureRecord> records, std::size_t dim) {
  Matrix m(records.size(), dim);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].feature.size() != dim) {
      throw DimensionError("feature_matrix: record " + std::to_string(records[i].id) + " has " +
                           std::to_string(records[i].feature.size()) + " values, expected " +
                           std::to_string(dim));
    }
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = static_cast<double>(records[i].feature[j]);
  }
  return m;
}

}  // namespace gtl
