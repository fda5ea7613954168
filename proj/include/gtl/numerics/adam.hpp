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

#include <cmath>
#include <cstdint>
#include <vector>

#include "gtl/numerics/matrix.hpp"
#include "gtl/numerics/param.hpp"

namespace gtl {

/// Adam with decoupled weight decay, bound to the shapes of one ParamGroup.
struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  AdamState() = default;
  AdamState(const ParamGroup& group, double learning_rate, double decay = 0.0)
      : lr(learning_rate), weight_decay(decay) {
    for (const auto& p : group.params) {
      first_moment.emplace_back(p.value.rows(), p.value.cols());
      second_moment.emplace_back(p.value.rows(), p.value.cols());
    }
  }
};

/// One optimizer step: w ← w − lr·wd·w, then the bias-corrected Adam update.
/// A frozen group is left untouched and the call returns false.
inline bool adam_step(ParamGroup& group, AdamState& state) {
  if (group.frozen) return false;
  if (state.first_moment.size() != group.params.size()) {
    throw DimensionError("adam_step: state built for a different group than '" + group.name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < group.params.size(); ++k) {
    Param& p = group.params[k];
    Matrix& m = state.first_moment[k];
    Matrix& v = state.second_moment[k];
    require_same_shape(p.value, p.grad, "adam_step");
    require_same_shape(p.value, m, "adam_step");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      if (state.weight_decay != 0.0) p.value[i] -= state.lr * state.weight_decay * p.value[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.value[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
  return true;
}

}  // namespace gtl
