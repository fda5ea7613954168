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

#include <functional>

#include "gtl/numerics/matrix.hpp"
#include "gtl/numerics/rng.hpp"

namespace testing_fd {

/// Central-difference gradient of f with respect to every entry of m.
inline gtl::Matrix numeric_grad(gtl::Matrix& m, const std::function<double()>& f,
                                double h = 1e-6) {
  gtl::Matrix g(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double saved = m[i];
    m[i] = saved + h;
    const double up = f();
    m[i] = saved - h;
    const double down = f();
    m[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline gtl::Matrix random_matrix(std::size_t r, std::size_t c, gtl::Rng& rng, double scale = 1.0) {
  gtl::Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

/// Σ a⊙b, used to turn a matrix-valued function into a scalar probe.
inline double dot(const gtl::Matrix& a, const gtl::Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace testing_fd
