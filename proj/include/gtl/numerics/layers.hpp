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
#include <span>
#include <string>
#include <vector>

#include "gtl/error.hpp"
#include "gtl/numerics/matrix.hpp"
#include "gtl/numerics/rng.hpp"

namespace gtl {

enum class Mode { train, eval };

inline constexpr double kLogvarMin = -30.0;
inline constexpr double kLogvarMax = 20.0;

// ---------------------------------------------------------------------------
// Dense

/// out = x·W + b, b broadcast over rows.
inline Matrix dense_forward(const Matrix& x, const Matrix& w, const Matrix& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw DimensionError("dense_forward: x " + x.shape() + ", W " + w.shape() + ", b " +
                         b.shape());
  }
  Matrix out = matmul(x, w);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
  return out;
}

struct DenseGrads {
  Matrix dx;
  Matrix dw;
  Matrix db;
};

inline DenseGrads dense_backward(const Matrix& x, const Matrix& w, const Matrix& d_out) {
  if (x.cols() != w.rows() || d_out.rows() != x.rows() || d_out.cols() != w.cols()) {
    throw DimensionError("dense_backward: x " + x.shape() + ", W " + w.shape() + ", dOut " +
                         d_out.shape());
  }
  return {matmul_nt(d_out, w), matmul_tn(x, d_out), column_sum(d_out)};
}

// ---------------------------------------------------------------------------
// ReLU

inline Matrix relu_forward(Matrix x) {
  for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
  return x;
}

/// `pre` is the pre-activation input of the forward pass.
inline Matrix relu_backward(const Matrix& pre, Matrix d_out) {
  require_same_shape(pre, d_out, "relu_backward");
  for (std::size_t i = 0; i < pre.size(); ++i)
    if (!(pre[i] > 0.0)) d_out[i] = 0.0;
  return d_out;
}

// ---------------------------------------------------------------------------
// Batch normalization

/// Running statistics of one batch-norm layer. The learnable scale and shift
/// live in the owning ParamGroup so the optimizer sees them.
struct BatchNormState {
  Matrix running_mean;
  Matrix running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t features)
      : running_mean(1, features, 0.0), running_var(1, features, 1.0) {}

  std::size_t features() const noexcept { return running_mean.cols(); }
};

struct BatchNormCache {
  Matrix xhat;
  Matrix inv_std;  // 1×F
  Mode mode = Mode::train;
};

/// Train mode normalizes with biased batch statistics and, when
/// `update_running` is set, folds the batch mean and unbiased variance into
/// the running estimates. Eval mode uses the running estimates only.
inline Matrix batchnorm_forward(const Matrix& x, const Matrix& scale, const Matrix& shift,
                                BatchNormState& state, Mode mode, BatchNormCache& cache,
                                bool update_running = true) {
  const std::size_t n = x.rows(), f = x.cols();
  if (scale.cols() != f || shift.cols() != f || state.features() != f) {
    throw DimensionError("batchnorm_forward: input " + x.shape() + " vs " +
                         std::to_string(state.features()) + " features");
  }
  cache.mode = mode;
  cache.inv_std = Matrix(1, f);
  Matrix mean(1, f), var(1, f);
  if (mode == Mode::train) {
    if (n < 2) throw ValidationError("batchnorm_forward: train mode needs batch size >= 2");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) mean[j] += x(i, j);
    for (std::size_t j = 0; j < f; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) {
        const double c = x(i, j) - mean[j];
        var[j] += c * c;
      }
    for (std::size_t j = 0; j < f; ++j) var[j] /= static_cast<double>(n);
    if (update_running) {
      const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
      for (std::size_t j = 0; j < f; ++j) {
        state.running_mean[j] =
            (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mean[j];
        state.running_var[j] =
            (1.0 - state.momentum) * state.running_var[j] + state.momentum * var[j] * unbias;
      }
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  for (std::size_t j = 0; j < f; ++j) cache.inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
  cache.xhat = Matrix(n, f);
  Matrix out(n, f);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const double xh = (x(i, j) - mean[j]) * cache.inv_std[j];
      cache.xhat(i, j) = xh;
      out(i, j) = scale[j] * xh + shift[j];
    }
  return out;
}

struct BatchNormGrads {
  Matrix dx;
  Matrix dscale;
  Matrix dshift;
};

inline BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Matrix& scale,
                                         const Matrix& d_out) {
  require_same_shape(cache.xhat, d_out, "batchnorm_backward");
  const std::size_t n = d_out.rows(), f = d_out.cols();
  BatchNormGrads g{Matrix(n, f), Matrix(1, f), Matrix(1, f)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      g.dscale[j] += d_out(i, j) * cache.xhat(i, j);
      g.dshift[j] += d_out(i, j);
    }
  if (cache.mode == Mode::eval) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) g.dx(i, j) = d_out(i, j) * scale[j] * cache.inv_std[j];
    return g;
  }
  // dx = inv_std/N · (N·dxhat − Σdxhat − xhat·Σ(dxhat·xhat)), dxhat = dOut·scale
  const double nn = static_cast<double>(n);
  for (std::size_t j = 0; j < f; ++j) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dxh = d_out(i, j) * scale[j];
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * cache.xhat(i, j);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double dxh = d_out(i, j) * scale[j];
      g.dx(i, j) = cache.inv_std[j] / nn * (nn * dxh - sum_dxhat - cache.xhat(i, j) * sum_dxhat_xhat);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Dropout (inverted: kept units are divided by the keep probability)

/// Empty mask means identity.
struct DropoutCache {
  Matrix mask;
};

inline Matrix dropout_forward(Matrix x, double rate, Mode mode, Rng& rng, DropoutCache& cache) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ValidationError("dropout_forward: rate must be in [0, 1), got " + std::to_string(rate));
  }
  cache.mask = Matrix();
  if (mode == Mode::eval || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  cache.mask = Matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    cache.mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
    x[i] *= cache.mask[i];
  }
  return x;
}

inline Matrix dropout_backward(const DropoutCache& cache, Matrix d_out) {
  if (cache.mask.empty()) return d_out;
  return hadamard(std::move(d_out), cache.mask);
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    const double m = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) {
      p(i, j) = std::exp(r[j] - m);
      s += p(i, j);
    }
    for (std::size_t j = 0; j < r.size(); ++j) p(i, j) /= s;
  }
  return p;
}

struct CrossEntropy {
  double loss = 0.0;
  Matrix d_logits;
};

/// Mean over the batch of −log softmax(logits)[label].
inline CrossEntropy softmax_ce(const Matrix& logits, std::span<const std::size_t> labels) {
  if (labels.size() != logits.rows()) {
    throw DimensionError("softmax_ce: " + std::to_string(labels.size()) + " labels for " +
                         logits.shape() + " logits");
  }
  const std::size_t n = logits.rows(), c = logits.cols();
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= c) {
      throw IndexError("softmax_ce: label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(c) + ")");
    }
  }
  CrossEntropy out{0.0, softmax_rows(logits)};
  for (std::size_t i = 0; i < n; ++i) {
    auto r = logits.row(i);
    const double m = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - m);
    out.loss += m + std::log(s) - r[labels[i]];
    out.d_logits(i, labels[i]) -= 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.loss *= inv_n;
  out.d_logits *= inv_n;
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian posterior utilities

inline Matrix clamp_logvar(Matrix logvar) {
  for (double& v : logvar.values()) v = std::clamp(v, kLogvarMin, kLogvarMax);
  return logvar;
}

/// KL(N(mu, e^logvar) || N(0, I)), summed over latent dims, averaged over rows.
inline double gaussian_kl(const Matrix& mu, const Matrix& logvar) {
  require_same_shape(mu, logvar, "gaussian_kl");
  if (mu.rows() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    // expm1(lv) - lv is the numerically stable form of e^lv − 1 − lv
    s += mu[i] * mu[i] + (std::expm1(logvar[i]) - logvar[i]);
  }
  return 0.5 * s / static_cast<double>(mu.rows());
}

struct KlGrads {
  Matrix d_mu;
  Matrix d_logvar;
};

inline KlGrads gaussian_kl_backward(const Matrix& mu, const Matrix& logvar) {
  require_same_shape(mu, logvar, "gaussian_kl_backward");
  const double inv_n = 1.0 / static_cast<double>(mu.rows());
  KlGrads g{Matrix(mu.rows(), mu.cols()), Matrix(mu.rows(), mu.cols())};
  for (std::size_t i = 0; i < mu.size(); ++i) {
    g.d_mu[i] = mu[i] * inv_n;
    g.d_logvar[i] = 0.5 * std::expm1(logvar[i]) * inv_n;
  }
  return g;
}

struct Reparameterized {
  Matrix z;
  Matrix noise;  // the standard-normal draws ε
};

/// z = mu + e^{logvar/2} ⊙ ε, logvar clamped to [−30, 20] first.
inline Reparameterized reparameterize(const Matrix& mu, const Matrix& logvar, Rng& rng) {
  require_same_shape(mu, logvar, "reparameterize");
  Reparameterized r{Matrix(mu.rows(), mu.cols()), Matrix(mu.rows(), mu.cols())};
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double lv = std::clamp(logvar[i], kLogvarMin, kLogvarMax);
    r.noise[i] = rng.normal();
    r.z[i] = mu[i] + std::exp(0.5 * lv) * r.noise[i];
  }
  return r;
}

struct ReparamGrads {
  Matrix d_mu;
  Matrix d_logvar;
};

inline ReparamGrads reparameterize_backward(const Matrix& logvar, const Matrix& noise,
                                            const Matrix& d_z) {
  require_same_shape(logvar, d_z, "reparameterize_backward");
  ReparamGrads g{d_z, Matrix(d_z.rows(), d_z.cols())};
  for (std::size_t i = 0; i < d_z.size(); ++i) {
    const double lv = logvar[i];
    if (lv < kLogvarMin || lv > kLogvarMax) continue;
    g.d_logvar[i] = d_z[i] * 0.5 * std::exp(0.5 * lv) * noise[i];
  }
  return g;
}

/// Squared L2 distance between matching rows, averaged over rows. This is the
/// negative log-likelihood of a unit-variance Gaussian up to a factor ½ and a
/// constant, with the same reduction as gaussian_kl.
inline double row_sq_error(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "row_sq_error");
  if (pred.rows() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.rows());
}

inline Matrix row_sq_error_backward(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "row_sq_error_backward");
  Matrix g(pred.rows(), pred.cols());
  const double scale = 2.0 / static_cast<double>(pred.rows());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
  return g;
}

}  // namespace gtl
