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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gtl/error.hpp"

namespace gtl {

struct Tally {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const { return total == 0 ? 0.0 : double(correct) / double(total); }
};

/// Top-1 accuracy of one episode. acc_mixed is micro-averaged over all
/// queries; modalities without queries are absent from the per-modality map.
struct EvalResult {
  double acc_mixed = 0.0;
  std::map<std::uint8_t, double> acc_per_modality;
  std::size_t episode_count = 1;
  Tally mixed;
  std::map<std::uint8_t, Tally> per_modality;
};

inline EvalResult top1_accuracy(std::span<const std::uint32_t> preds,
                                std::span<const std::uint32_t> labels,
                                std::span<const std::uint8_t> modalities) {
  if (preds.size() != labels.size() || preds.size() != modalities.size()) {
    throw DimensionError("top1_accuracy: " + std::to_string(preds.size()) + " predictions, " +
                         std::to_string(labels.size()) + " labels, " +
                         std::to_string(modalities.size()) + " modalities");
  }
  EvalResult r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool hit = preds[i] == labels[i];
    r.mixed.correct += hit;
    ++r.mixed.total;
    auto& t = r.per_modality[modalities[i]];
    t.correct += hit;
    ++t.total;
  }
  r.acc_mixed = r.mixed.accuracy();
  for (const auto& [m, t] : r.per_modality) r.acc_per_modality[m] = t.accuracy();
  return r;
}

struct Statistic {
  double mean = 0.0;
  double std = 0.0;   // sample standard deviation, 0 for a single episode
  double ci95 = 0.0;  // half-width, normal approximation
  std::size_t n = 0;
};

/// Order-independent: values are sorted before summation so any permutation
/// of the inputs yields bit-identical output.
inline Statistic summarize(std::vector<double> values) {
  if (values.empty()) throw ValidationError("summarize: no values");
  std::sort(values.begin(), values.end());
  Statistic s;
  s.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / double(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / double(s.n - 1));
    s.ci95 = 1.96 * s.std / std::sqrt(double(s.n));
  }
  return s;
}

struct EpisodeSummary {
  Statistic mixed;
  std::map<std::uint8_t, Statistic> per_modality;
  std::size_t episode_count = 0;
};

inline EpisodeSummary aggregate_episodes(std::span<const EvalResult> results) {
  if (results.empty()) throw ValidationError("aggregate_episodes: no episodes");
  EpisodeSummary out;
  out.episode_count = results.size();
  std::vector<double> mixed;
  std::map<std::uint8_t, std::vector<double>> per;
  for (const auto& r : results) {
    mixed.push_back(r.acc_mixed);
    for (const auto& [m, a] : r.acc_per_modality) per[m].push_back(a);
  }
  out.mixed = summarize(std::move(mixed));
  for (auto& [m, v] : per) out.per_modality[m] = summarize(std::move(v));
  return out;
}

}  // namespace gtl
