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
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gtl/error.hpp"

namespace gtl {

/// Dense row-major matrix of doubles. Vectors are stored as 1×N matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
      throw DimensionError("Matrix: value count " + std::to_string(values_.size()) +
                           " does not match " + shape_string(rows_, cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    values_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
      values_.insert(values_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
  static Matrix row_vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Matrix(1, n, std::move(values));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  bool same_shape(const Matrix& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape() const { return shape_string(rows_, cols_); }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

  static std::string shape_string(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* where) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(where) + ": shape " + a.shape() + " vs " + b.shape());
  }
}

/// a·b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + a.shape() + " times " + b.shape());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t n = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.data() + i * m;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* bk = b.data() + k * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += aik * bk[j];
    }
  }
  return out;
}

/// aᵀ·b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: " + a.shape() + "^T times " + b.shape());
  }
  Matrix out(a.cols(), b.cols());
  const std::size_t m = b.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* br = b.data() + r * m;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ari = a(r, i);
      if (ari == 0.0) continue;
      double* o = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += ari * br[j];
    }
  }
  return out;
}

/// a·bᵀ
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + a.shape() + " times " + b.shape() + "^T");
  }
  Matrix out(a.rows(), b.rows());
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * n;
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* bj = b.data() + j * n;
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += ai[k] * bj[k];
      out(i, j) = s;
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline Matrix& operator+=(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator+=");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }

inline Matrix& operator-=(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator-=");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }

inline Matrix& operator*=(Matrix& a, double s) {
  for (double& v : a.values()) v *= s;
  return a;
}

inline Matrix operator*(Matrix a, double s) { return a *= s; }

inline Matrix hadamard(Matrix a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
  return a;
}

/// Sum over rows, giving a 1×cols vector.
inline Matrix column_sum(const Matrix& a) {
  Matrix out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j);
  return out;
}

/// Columns [begin, begin+count).
inline Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) throw DimensionError("slice_cols: out of range for " + a.shape());
  Matrix out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, begin + j);
  return out;
}

/// Writes `src` into columns [begin, begin+src.cols()) of `dst`.
inline void set_cols(Matrix& dst, std::size_t begin, const Matrix& src) {
  if (dst.rows() != src.rows() || begin + src.cols() > dst.cols()) {
    throw DimensionError("set_cols: " + src.shape() + " into " + dst.shape());
  }
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(i, begin + j) = src(i, j);
}

inline Matrix hconcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("hconcat: " + a.shape() + " with " + b.shape());
  Matrix out(a.rows(), a.cols() + b.cols());
  set_cols(out, 0, a);
  set_cols(out, a.cols(), b);
  return out;
}

/// Rows selected by index, in the given order.
inline Matrix gather_rows(const Matrix& a, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = a.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace gtl
