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

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gtl/data/features.hpp"
#include "gtl/error.hpp"
#include "gtl/numerics/rng.hpp"

namespace gtl {

/// way == 0 means all-way (every novel class); otherwise N-way.
struct Protocol {
  std::size_t way = 0;

  static Protocol all_way() { return {0}; }
  static Protocol n_way(std::size_t n) { return {n}; }
  bool is_all_way() const noexcept { return way == 0; }
  std::string name() const { return is_all_way() ? "all-way" : std::to_string(way) + "-way"; }
};

inline Protocol parse_protocol(const std::string& s) {
  if (s == "all-way" || s == "all") return Protocol::all_way();
  const auto dash = s.find("-way");
  if (dash != std::string::npos && dash > 0 && dash + 4 == s.size()) {
    const std::string n = s.substr(0, dash);
    if (std::all_of(n.begin(), n.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      const auto way = std::stoul(n);
      if (way > 0) return Protocol::n_way(way);
    }
  }
  throw ValidationError("unknown protocol '" + s + "' (expected all-way or N-way)");
}

/// Support and query record ids of one few-shot episode. `classes` lists the
/// selected labels in ascending order.
struct Episode {
  Protocol protocol;
  std::size_t shots = 0;
  std::vector<std::uint32_t> classes;
  std::vector<std::uint64_t> support;
  std::vector<std::uint64_t> query;
};

/// Samples k support records per selected class uniformly (regardless of
/// modality); every other record of a selected class becomes a query.
/// Every class must hold at least k+1 records.
inline Episode sample_episode(std::span<const FeatureRecord> novel, Protocol protocol,
                              std::size_t shots, Rng& rng) {
  if (shots == 0) throw ValidationError("sample_episode: k must be positive");
  std::map<std::uint32_t, std::vector<std::uint64_t>> by_class;
  for (const auto& r : novel) by_class[r.label].push_back(r.id);
  if (by_class.empty()) throw ValidationError("sample_episode: no novel records");
  for (const auto& [label, ids] : by_class) {
    if (ids.size() < shots + 1) {
      throw ValidationError("sample_episode: class " + std::to_string(label) + " has " +
                            std::to_string(ids.size()) + " records, needs at least " +
                            std::to_string(shots + 1) + " for " + std::to_string(shots) + "-shot");
    }
  }

  Episode ep;
  ep.protocol = protocol;
  ep.shots = shots;
  std::vector<std::uint32_t> labels;
  for (const auto& kv : by_class) labels.push_back(kv.first);
  if (protocol.is_all_way()) {
    ep.classes = labels;
  } else {
    if (protocol.way > labels.size()) {
      throw ValidationError("sample_episode: " + protocol.name() + " requested but only " +
                            std::to_string(labels.size()) + " novel classes exist");
    }
    // partial Fisher-Yates: the first `way` slots are a uniform draw
    for (std::size_t i = 0; i < protocol.way; ++i) {
      const std::size_t j = i + rng.uniform_int(labels.size() - i);
      std::swap(labels[i], labels[j]);
    }
    ep.classes.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(protocol.way));
    std::sort(ep.classes.begin(), ep.classes.end());
  }

  for (auto label : ep.classes) {
    auto ids = by_class[label];
    for (std::size_t i = 0; i < shots; ++i) {
      const std::size_t j = i + rng.uniform_int(ids.size() - i);
      std::swap(ids[i], ids[j]);
    }
    ep.support.insert(ep.support.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(shots));
    ep.query.insert(ep.query.end(), ids.begin() + static_cast<std::ptrdiff_t>(shots), ids.end());
  }
  std::sort(ep.query.begin(), ep.query.end());
  return ep;
}

/// Looks records up by id.
inline std::vector<FeatureRecord> gather(std::span<const FeatureRecord> records,
                                         std::span<const std::uint64_t> ids) {
  std::unordered_map<std::uint64_t, std::size_t> pos;
  for (std::size_t i = 0; i < records.size(); ++i) pos.emplace(records[i].id, i);
  std::vector<FeatureRecord> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    auto it = pos.find(id);
    if (it == pos.end()) throw ValidationError("record id " + std::to_string(id) + " not found");
    out.push_back(records[it->second]);
  }
  return out;
}

}  // namespace gtl
