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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fd.hpp"
#include "gtl/numerics/layers.hpp"

using namespace gtl;
using testing_fd::dot;
using testing_fd::numeric_grad;
using testing_fd::random_matrix;

TEST(Dense, ForwardMatchesDefinition) {
  const Matrix x{{1, 2}, {3, 4}, {5, 6}};
  const Matrix w{{1, 0, -1}, {2, 1, 0}};
  const Matrix b{{0.5, -0.5, 1}};
  EXPECT_EQ(dense_forward(x, w, b), (Matrix{{5.5, 1.5, 0}, {11.5, 3.5, -2}, {17.5, 5.5, -4}}));
  EXPECT_THROW(dense_forward(x, Matrix(3, 3), b), DimensionError);
}

TEST(Dense, BackwardMatchesFiniteDifferences) {
  Rng rng(1);
  Matrix x = random_matrix(4, 3, rng), w = random_matrix(3, 5, rng), b = random_matrix(1, 5, rng);
  const Matrix probe = random_matrix(4, 5, rng);
  auto f = [&] { return dot(dense_forward(x, w, b), probe); };
  const auto g = dense_backward(x, w, probe);
  EXPECT_LT(max_abs_diff(g.dx, numeric_grad(x, f)), 1e-8);
  EXPECT_LT(max_abs_diff(g.dw, numeric_grad(w, f)), 1e-8);
  EXPECT_LT(max_abs_diff(g.db, numeric_grad(b, f)), 1e-8);
}

TEST(Relu, ForwardAndBackward) {
  const Matrix pre{{-1, 0, 2}};
  EXPECT_EQ(relu_forward(pre), (Matrix{{0, 0, 2}}));
  EXPECT_EQ(relu_backward(pre, Matrix{{5, 5, 5}}), (Matrix{{0, 0, 5}}));
}

TEST(BatchNorm, TrainNormalizesAndUpdatesRunningStats) {
  Rng rng(2);
  const Matrix x = random_matrix(8, 3, rng, 3.0);
  const Matrix scale(1, 3, 1.0), shift(1, 3, 0.0);
  BatchNormState st(3);
  BatchNormCache cache;
  const Matrix y = batchnorm_forward(x, scale, shift, st, Mode::train, cache);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0, sq = 0, xm = 0, xsq = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      mean += y(i, j);
      sq += y(i, j) * y(i, j);
      xm += x(i, j);
    }
    xm /= 8;
    for (std::size_t i = 0; i < 8; ++i) xsq += (x(i, j) - xm) * (x(i, j) - xm);
    const double biased = xsq / 8;
    EXPECT_NEAR(mean / 8, 0.0, 1e-12);
    EXPECT_NEAR(sq / 8, biased / (biased + 1e-5), 1e-12);
    EXPECT_NEAR(st.running_mean[j], 0.1 * xm, 1e-12);
    EXPECT_NEAR(st.running_var[j], 0.9 + 0.1 * xsq / 7, 1e-12);  // unbiased batch variance
  }
}

TEST(BatchNorm, EvalUsesRunningStatsOnly) {
  BatchNormState st(2);
  st.running_mean = Matrix{{1, -1}};
  st.running_var = Matrix{{4, 9}};
  const Matrix scale{{2, 1}}, shift{{0, 1}};
  BatchNormCache cache;
  const Matrix y = batchnorm_forward(Matrix{{3, 2}}, scale, shift, st, Mode::eval, cache);
  EXPECT_NEAR(y(0, 0), 2 * 2 / std::sqrt(4 + 1e-5), 1e-12);
  EXPECT_NEAR(y(0, 1), 3 / std::sqrt(9 + 1e-5) + 1, 1e-12);
  EXPECT_EQ(st.running_mean, (Matrix{{1, -1}}));
}

TEST(BatchNorm, TrainModeRejectsSingleRow) {
  BatchNormState st(2);
  BatchNormCache cache;
  EXPECT_THROW(batchnorm_forward(Matrix(1, 2), Matrix(1, 2, 1.0), Matrix(1, 2), st, Mode::train,
                                 cache),
               ValidationError);
}

TEST(BatchNorm, BackwardMatchesFiniteDifferences) {
  Rng rng(3);
  Matrix x = random_matrix(6, 4, rng), scale = random_matrix(1, 4, rng),
         shift = random_matrix(1, 4, rng);
  const Matrix probe = random_matrix(6, 4, rng);
  for (Mode mode : {Mode::train, Mode::eval}) {
    BatchNormState st(4);
    st.running_mean = random_matrix(1, 4, rng);
    auto f = [&] {
      BatchNormState s = st;
      BatchNormCache c;
      return dot(batchnorm_forward(x, scale, shift, s, mode, c, false), probe);
    };
    BatchNormState s = st;
    BatchNormCache cache;
    batchnorm_forward(x, scale, shift, s, mode, cache, false);
    const auto g = batchnorm_backward(cache, scale, probe);
    EXPECT_LT(max_abs_diff(g.dx, numeric_grad(x, f)), 1e-7);
    EXPECT_LT(max_abs_diff(g.dscale, numeric_grad(scale, f)), 1e-7);
    EXPECT_LT(max_abs_diff(g.dshift, numeric_grad(shift, f)), 1e-7);
  }
}

TEST(Dropout, EvalAndZeroRateAreIdentity) {
  Rng rng(4);
  const Matrix x = random_matrix(3, 3, rng);
  DropoutCache c;
  EXPECT_EQ(dropout_forward(x, 0.5, Mode::eval, rng, c), x);
  EXPECT_EQ(dropout_forward(x, 0.0, Mode::train, rng, c), x);
  EXPECT_TRUE(c.mask.empty());
  EXPECT_THROW(dropout_forward(x, 1.0, Mode::train, rng, c), ValidationError);
  EXPECT_THROW(dropout_forward(x, -0.1, Mode::train, rng, c), ValidationError);
}

TEST(Dropout, InvertedScalingPreservesExpectation) {
  Rng rng(5);
  const Matrix x(1, 100000, 1.0);
  DropoutCache c;
  const Matrix y = dropout_forward(x, 0.3, Mode::train, rng, c);
  double sum = 0;
  std::size_t kept = 0;
  for (double v : y.values()) {
    ASSERT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.7) < 1e-15);
    kept += v != 0.0;
    sum += v;
  }
  const double n = 100000;
  EXPECT_NEAR(kept / n, 0.7, 5 * std::sqrt(0.21 / n));
  EXPECT_NEAR(sum / n, 1.0, 5 * std::sqrt(0.21 / n) / 0.7);
  EXPECT_EQ(dropout_backward(c, x), c.mask);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(6);
  const Matrix z = random_matrix(5, 7, rng, 4.0);
  const Matrix p = softmax_rows(z);
  Matrix shifted = z;
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) shifted(i, j) += 100.0 * double(i + 1);
  EXPECT_LT(max_abs_diff(softmax_rows(shifted), p), 1e-12);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0;
    for (double v : p.row(i)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Matrix p = softmax_rows(Matrix{{1000, 999, -1000}});
  EXPECT_TRUE(p.all_finite());
  EXPECT_NEAR(p(0, 0), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  for (std::size_t c : {2u, 5u, 10u, 128u}) {
    const std::vector<std::size_t> y{0, c - 1};
    EXPECT_NEAR(softmax_ce(Matrix(2, c, 0.25), y).loss, std::log(double(c)), 1e-12);
  }
}

TEST(CrossEntropy, MatchesLongDoubleLogSumExp) {
  Rng rng(7);
  const Matrix z = random_matrix(6, 4, rng, 3.0);
  const std::vector<std::size_t> y{0, 1, 2, 3, 1, 0};
  long double ref = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    long double s = 0;
    for (double v : z.row(i)) s += std::exp(static_cast<long double>(v));
    ref += std::log(s) - z(i, y[i]);
  }
  EXPECT_NEAR(softmax_ce(z, y).loss, double(ref / 6), 1e-12);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  Matrix z = random_matrix(5, 3, rng);
  const std::vector<std::size_t> y{0, 2, 1, 1, 0};
  const auto ce = softmax_ce(z, y);
  EXPECT_LT(max_abs_diff(ce.d_logits, numeric_grad(z, [&] { return softmax_ce(z, y).loss; })),
            1e-9);
}

TEST(CrossEntropy, LabelErrors) {
  const std::vector<std::size_t> bad{3};
  EXPECT_THROW(softmax_ce(Matrix(1, 3), bad), IndexError);
  const std::vector<std::size_t> two{0, 1};
  EXPECT_THROW(softmax_ce(Matrix(1, 3), two), DimensionError);
}

TEST(GaussianKl, ClosedFormPoints) {
  EXPECT_EQ(gaussian_kl(Matrix(3, 4), Matrix(3, 4)), 0.0);
  EXPECT_NEAR(gaussian_kl(Matrix{{1}}, Matrix{{0}}), 0.5, 1e-12);
  // KL(N(0, e) || N(0,1)) = ½(e − 1 − 1)
  EXPECT_NEAR(gaussian_kl(Matrix{{0}}, Matrix{{1}}), 0.5 * (std::exp(1.0) - 2.0), 1e-12);
}

TEST(GaussianKl, NonNegativeOnRandomInputs) {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    EXPECT_GE(gaussian_kl(random_matrix(3, 5, rng, 2.0), random_matrix(3, 5, rng, 3.0)), 0.0);
  }
}

TEST(GaussianKl, MonteCarloOracle) {
  // E_q[log q(z) − log p(z)] estimated by sampling, for one 3-d posterior.
  const Matrix mu{{0.7, -1.2, 0.1}}, lv{{-0.5, 0.8, 0.0}};
  Rng rng(10);
  const int n = 200000;
  double sum = 0, sq = 0;
  for (int s = 0; s < n; ++s) {
    double log_ratio = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double sd = std::exp(0.5 * lv[j]);
      const double eps = rng.normal();
      const double z = mu[j] + sd * eps;
      log_ratio += -0.5 * eps * eps - std::log(sd) + 0.5 * z * z;
    }
    sum += log_ratio;
    sq += log_ratio * log_ratio;
  }
  const double mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
  EXPECT_NEAR(gaussian_kl(mu, lv), mean, 4 * se);
}

TEST(GaussianKl, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  Matrix mu = random_matrix(4, 3, rng), lv = random_matrix(4, 3, rng);
  auto f = [&] { return gaussian_kl(mu, lv); };
  const auto g = gaussian_kl_backward(mu, lv);
  EXPECT_LT(max_abs_diff(g.d_mu, numeric_grad(mu, f)), 1e-9);
  EXPECT_LT(max_abs_diff(g.d_logvar, numeric_grad(lv, f)), 1e-9);
}

TEST(Reparameterize, SampleMomentsWithinThreeSigma) {
  const std::size_t n = 100000;
  const Matrix mu(n, 1, 1.5), lv(n, 1, std::log(0.25));
  Rng rng(12);
  const auto r = reparameterize(mu, lv, rng);
  double sum = 0, sq = 0;
  for (double v : r.z.values()) {
    sum += v;
    sq += (v - 1.5) * (v - 1.5);
  }
  const double sd = 0.5;
  EXPECT_NEAR(sum / n, 1.5, 3 * sd / std::sqrt(double(n)));
  EXPECT_NEAR(sq / n, sd * sd, 3 * sd * sd * std::sqrt(2.0 / n));
}

TEST(Reparameterize, ClampsExtremeLogvar) {
  Rng rng(13);
  const auto r = reparameterize(Matrix{{0, 0}}, Matrix{{1000, -1000}}, rng);
  EXPECT_TRUE(r.z.all_finite());
  EXPECT_NEAR(r.z[0], std::exp(10.0) * r.noise[0], 1e-6);
  const auto g = reparameterize_backward(Matrix{{1000, -1000}}, r.noise, Matrix{{1, 1}});
  EXPECT_EQ(g.d_logvar, Matrix(1, 2));
  EXPECT_EQ(clamp_logvar(Matrix{{1000, -1000, 3}}), (Matrix{{20, -30, 3}}));
}

TEST(Reparameterize, BackwardMatchesFiniteDifferences) {
  Rng rng(14);
  Matrix mu = random_matrix(3, 4, rng), lv = random_matrix(3, 4, rng);
  const Matrix probe = random_matrix(3, 4, rng);
  Rng draw(99);
  const Matrix noise = reparameterize(mu, lv, draw).noise;
  auto f = [&] {
    Rng r(99);
    return dot(reparameterize(mu, lv, r).z, probe);
  };
  const auto g = reparameterize_backward(lv, noise, probe);
  EXPECT_LT(max_abs_diff(g.d_mu, numeric_grad(mu, f)), 1e-8);
  EXPECT_LT(max_abs_diff(g.d_logvar, numeric_grad(lv, f)), 1e-8);
}

TEST(RowSqError, ValueAndGradient) {
  EXPECT_NEAR(row_sq_error(Matrix{{1, 2}, {0, 0}}, Matrix{{0, 0}, {0, 3}}), (1 + 4 + 9) / 2.0,
              1e-15);
  Rng rng(15);
  Matrix p = random_matrix(3, 5, rng);
  const Matrix t = random_matrix(3, 5, rng);
  EXPECT_LT(max_abs_diff(row_sq_error_backward(p, t),
                         numeric_grad(p, [&] { return row_sq_error(p, t); })),
            1e-8);
}
