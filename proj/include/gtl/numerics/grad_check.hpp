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
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "gtl/numerics/param.hpp"
#include "gtl/numerics/rng.hpp"

namespace gtl {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Relative error is |a − n| / max(|a|, |n|, denominator_floor).
  double denominator_floor = 1e-4;
  /// Entries checked per parameter tensor; 0 checks every entry.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string group;
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  bool passed = true;
  std::size_t checked = 0;
  GradCheckEntry worst;
  std::vector<std::string> skipped_groups;  // frozen

  std::string describe() const {
    return std::string(passed ? "PASS" : "FAIL") + ": " + std::to_string(checked) +
           " entries, worst " + worst.group + "/" + worst.param + "[" +
           std::to_string(worst.index) + "] analytic=" + std::to_string(worst.analytic) +
           " numeric=" + std::to_string(worst.numeric) +
           " rel_err=" + std::to_string(worst.rel_error);
  }
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares analytic gradients against central finite differences.
///
/// `loss` evaluates the objective at the current parameter values and must be
/// deterministic (reseed any sampling inside it). `backward` recomputes the
/// objective and accumulates analytic gradients into the groups; grads are
/// zeroed before it runs. Frozen groups are skipped.
inline GradCheckReport grad_check(const std::function<double()>& loss,
                                  const std::function<void()>& backward,
                                  const std::vector<ParamGroup*>& groups,
                                  const GradCheckOptions& opt = {}) {
  for (ParamGroup* g : groups) g->zero_grad();
  backward();

  GradCheckReport report;
  report.worst.rel_error = -1.0;
  Rng rng(opt.seed);
  for (ParamGroup* g : groups) {
    if (g->frozen) {
      report.skipped_groups.push_back(g->name);
      continue;
    }
    for (Param& p : g->params) {
      std::vector<std::size_t> idx(p.value.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      if (opt.max_entries_per_param != 0 && idx.size() > opt.max_entries_per_param) {
        rng.shuffle(std::span<std::size_t>(idx));
        idx.resize(opt.max_entries_per_param);
        std::sort(idx.begin(), idx.end());
      }
      for (std::size_t i : idx) {
        const double saved = p.value[i];
        p.value[i] = saved + opt.step;
        const double up = loss();
        p.value[i] = saved - opt.step;
        const double down = loss();
        p.value[i] = saved;
        const double numeric = (up - down) / (2.0 * opt.step);
        double err = relative_error(p.grad[i], numeric, opt.denominator_floor);
        if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
        ++report.checked;
        if (err > report.worst.rel_error) {
          report.worst = {g->name, p.name, i, p.grad[i], numeric, err};
        }
      }
    }
  }
  if (report.worst.rel_error < 0.0) report.worst.rel_error = 0.0;
  report.passed = report.worst.rel_error <= opt.tolerance;
  return report;
}

}  // namespace gtl
