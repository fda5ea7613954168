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
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gtl/data/features.hpp"
#include "gtl/error.hpp"
#include "gtl/numerics/rng.hpp"

namespace gtl {

using LabelSet = std::set<std::uint32_t>;

inline LabelSet labels_of(std::span<const FeatureRecord> records) {
  LabelSet s;
  for (const auto& r : records) s.insert(r.label);
  return s;
}

inline std::set<std::uint8_t> modalities_of(std::span<const FeatureRecord> records) {
  std::set<std::uint8_t> s;
  for (const auto& r : records) s.insert(r.modality);
  return s;
}

/// Base (single modality 0) and novel records with disjoint label sets.
struct DatasetSplit {
  std::vector<FeatureRecord> base;
  std::vector<FeatureRecord> novel;
  LabelSet base_labels;
  LabelSet novel_labels;
};

inline void require_unimodal_base(std::span<const FeatureRecord> base) {
  for (const auto& r : base) {
    if (r.modality != 0) {
      throw ValidationError("base record " + std::to_string(r.id) + " has modality " +
                            std::to_string(r.modality) + "; base data must be modality 0");
    }
  }
}

inline void require_disjoint(const LabelSet& base, const LabelSet& novel) {
  for (auto l : novel) {
    if (base.count(l)) {
      throw ValidationError("label " + std::to_string(l) + " is in both base and novel sets");
    }
  }
}

/// Validates and assembles a split from already-separated record sets.
inline DatasetSplit make_split(std::vector<FeatureRecord> base, std::vector<FeatureRecord> novel) {
  DatasetSplit s;
  s.base_labels = labels_of(base);
  s.novel_labels = labels_of(novel);
  require_unimodal_base(base);
  require_disjoint(s.base_labels, s.novel_labels);
  s.base = std::move(base);
  s.novel = std::move(novel);
  return s;
}

/// Records whose label is in `base_labels` go to base; the rest (or, when
/// `novel_labels` is non-empty, only those labels) go to novel.
inline DatasetSplit split_base_novel(std::span<const FeatureRecord> records,
                                     const LabelSet& base_labels,
                                     const LabelSet& novel_labels = {}) {
  require_disjoint(base_labels, novel_labels);
  const LabelSet observed = labels_of(records);
  for (auto l : base_labels) {
    if (!observed.count(l)) throw ValidationError("base label " + std::to_string(l) + " not observed");
  }
  std::vector<FeatureRecord> base, novel;
  for (const auto& r : records) {
    if (base_labels.count(r.label)) {
      base.push_back(r);
    } else if (novel_labels.empty() || novel_labels.count(r.label)) {
      novel.push_back(r);
    }
  }
  return make_split(std::move(base), std::move(novel));
}

struct TrainValTest {
  std::vector<FeatureRecord> train;
  std::vector<FeatureRecord> val;
  std::vector<FeatureRecord> test;
};

/// Shuffled 60/20/20 (by default) partition; train and val sizes are rounded
/// to the nearest record, test takes the remainder.
inline TrainValTest train_val_test_split(std::span<const FeatureRecord> records, Rng& rng,
                                         double train_frac = 0.6, double val_frac = 0.2) {
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  const auto n = static_cast<double>(records.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * train_frac));
  const auto n_val = std::min(records.size() - n_train,
                              static_cast<std::size_t>(std::llround(n * val_frac)));
  TrainValTest out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    dst.push_back(records[order[i]]);
  }
  return out;
}

}  // namespace gtl
