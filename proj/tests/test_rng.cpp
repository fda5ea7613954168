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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "gtl/numerics/rng.hpp"

using gtl::Rng;

TEST(Rng, MatchesSplitMix64ReferenceSequence) {
  // First outputs of the reference SplitMix64 generator seeded with 1234567.
  Rng rng(1234567);
  const std::uint64_t expected[] = {6457827717110365317ULL, 3203168211198807973ULL,
                                    9817491932198370423ULL, 4593380528125082431ULL,
                                    16408922859458223821ULL};
  for (auto e : expected) EXPECT_EQ(rng.next_u64(), e);
  EXPECT_EQ(rng.counter(), 5u);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, DerivedStreamsAreDistinctAndStable) {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t s = 0; s < 1000; ++s) firsts.insert(Rng::derive(7, s).next_u64());
  EXPECT_EQ(firsts.size(), 1000u);
  EXPECT_EQ(Rng::derive(7, 3).next_u64(), Rng::derive(7, 3).next_u64());
  EXPECT_NE(Rng::derive(7, 3).next_u64(), Rng::derive(8, 3).next_u64());
}

TEST(Rng, UniformRangeAndMoments) {
  Rng rng(1);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  // 5σ bands for U(0,1): sd(mean) = sqrt(1/12/n)
  EXPECT_NEAR(mean, 0.5, 5 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(var, 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalMoments) {
  Rng rng(2);
  const int n = 200000;
  double sum = 0.0, sq = 0.0, cube = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
    cube += z * z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(sq / n, 1.0, 5.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(cube / n, 0.0, 5.0 * std::sqrt(15.0 / n));
}

TEST(Rng, UniformIntChiSquare) {
  Rng rng(3);
  const int bins = 10, n = 100000;
  std::vector<int> counts(bins);
  for (int i = 0; i < n; ++i) ++counts[rng.uniform_int(bins)];
  double chi2 = 0.0;
  const double expected = double(n) / bins;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 21.67);  // χ²(9) critical value at α = 0.01
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(4);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  rng.shuffle(std::span<int>(w));
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Rng, ShufflePositionsAreUniform) {
  // Where element 0 lands over many shuffles of 4 items.
  Rng rng(5);
  std::vector<int> counts(4);
  const int n = 40000;
  for (int t = 0; t < n; ++t) {
    std::vector<int> v{0, 1, 2, 3};
    rng.shuffle(std::span<int>(v));
    ++counts[std::find(v.begin(), v.end(), 0) - v.begin()];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 4.0) * (c - n / 4.0) / (n / 4.0);
  EXPECT_LT(chi2, 11.34);  // χ²(3), α = 0.01
}
