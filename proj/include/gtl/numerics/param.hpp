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

#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "gtl/error.hpp"
#include "gtl/numerics/matrix.hpp"

namespace gtl {

/// A learnable tensor and its accumulated gradient.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
    grad = Matrix(value.rows(), value.cols());
  }
};

/// Named collection of parameters that is optimized (or frozen) as a unit.
struct ParamGroup {
  std::string name;
  std::vector<Param> params;
  bool frozen = false;

  ParamGroup() = default;
  explicit ParamGroup(std::string n) : name(std::move(n)) {}

  Param& add(std::string param_name, Matrix value) {
    params.emplace_back(std::move(param_name), std::move(value));
    return params.back();
  }

  Param& operator[](const std::string& param_name) {
    for (auto& p : params)
      if (p.name == param_name) return p;
    throw ValidationError("parameter '" + param_name + "' not in group '" + name + "'");
  }
  const Param& operator[](const std::string& param_name) const {
    return const_cast<ParamGroup&>(*this)[param_name];
  }

  void zero_grad() {
    for (auto& p : params) p.grad.fill(0.0);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
  }
};

/// FNV-1a over the raw bytes of every value, in parameter order. Equal
/// checksums on equal shapes mean bitwise-equal weights (up to hash collision).
inline std::uint64_t checksum(const ParamGroup& group) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : group.params) {
    feed(p.name.data(), p.name.size());
    feed(p.value.data(), p.value.size() * sizeof(double));
  }
  return h;
}

inline bool bitwise_equal(const ParamGroup& a, const ParamGroup& b) {
  if (a.params.size() != b.params.size()) return false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    const Matrix& x = a.params[i].value;
    const Matrix& y = b.params[i].value;
    if (!x.same_shape(y) || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

}  // namespace gtl
