//
// Copyright 2026 The dpbandit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include <bit>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "dpbandit/privacy.hpp"
#include "dpbandit/stochastic.hpp"
#include "oracles.hpp"

namespace dpbandit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(Laplace, ClosedFormExamples) {
  EXPECT_EQ(laplace_inv_cdf(0.5, 3.0), 0.0);
  EXPECT_NEAR(laplace_inv_cdf(0.75, 1.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(laplace_inv_cdf(0.25, 2.0), -2.0 * std::log(2.0), 1e-15);
}

TEST(Laplace, MatchesNumericInversion) {
  for (double b : {0.1, 1.0, 7.5}) {
    for (double u = 0.001; u < 1.0; u += 0.0137) {
      EXPECT_NEAR(laplace_inv_cdf(u, b), oracle::laplace_quantile_bisect(u, b),
                  1e-9 * (1.0 + b));
    }
  }
}

TEST(Laplace, DomainErrors) {
  EXPECT_THROW(laplace_inv_cdf(0.0, 1.0), InvalidArgument);
  EXPECT_THROW(laplace_inv_cdf(1.0, 1.0), InvalidArgument);
  EXPECT_THROW(laplace_inv_cdf(0.3, 0.0), InvalidArgument);
  EXPECT_THROW(LaplaceSpec(-1.0), InvalidArgument);
}

TEST(Dyadic, PrefixExamples) {
  const std::vector<DyadicInterval> six{{1, 4, 2}, {5, 6, 1}};
  EXPECT_EQ(dyadic_prefix(6, 8), six);
  const std::vector<DyadicInterval> seven{{1, 4, 2}, {5, 6, 1}, {7, 7, 0}};
  EXPECT_EQ(dyadic_prefix(7, 8), seven);
  EXPECT_TRUE(dyadic_prefix(0, 8).empty());
  EXPECT_THROW(dyadic_prefix(9, 8), InvalidArgument);
  EXPECT_THROW(dyadic_prefix(1, 6), InvalidArgument);
}

TEST(Dyadic, PrefixMatchesGreedyCover) {
  for (std::size_t slots = 1; slots <= 256; slots *= 2) {
    for (std::size_t m = 0; m <= slots; ++m) {
      const auto got = dyadic_prefix(m, slots);
      const auto want = oracle::greedy_dyadic_cover(m, slots);
      ASSERT_EQ(got.size(), want.size()) << m << "/" << slots;
      for (std::size_t j = 0; j < got.size(); ++j) {
        EXPECT_EQ(got[j].begin, want[j].begin);
        EXPECT_EQ(got[j].end, want[j].end);
        EXPECT_EQ(std::size_t{1} << got[j].level, got[j].end - got[j].begin + 1);
      }
    }
  }
}

TEST(Dyadic, CounterNodesMatchEpochOracleUpTo1024) {
  for (std::size_t t = 1; t <= 1024; ++t) {
    const auto got = counter_nodes(t);
    const auto want = oracle::epoch_cover(t);
    ASSERT_EQ(got.size(), want.size()) << "t = " << t;
    std::size_t covered = 0;
    for (std::size_t j = 0; j < got.size(); ++j) {
      EXPECT_EQ(got[j].epoch, want[j].epoch);
      EXPECT_EQ(got[j].begin, want[j].begin);
      EXPECT_EQ(got[j].end, want[j].end);
      covered += got[j].end - got[j].begin + 1;
    }
    EXPECT_EQ(covered, t);
    const auto ceil_log = static_cast<std::size_t>(std::bit_width(t - 1));
    EXPECT_LE(got.size(), 2 * ceil_log + 1) << "t = " << t;
  }
}

TEST(Counter, CountsItems) {
  TreeCounter c(1.0, 3);
  for (int i = 0; i < 37; ++i) c.add(0.25);
  EXPECT_EQ(c.size(), 37u);
}

TEST(Counter, NoiselessReleaseIsExact) {
  TreeCounter c(kInf, 1);
  c.add(0.5);
  c.add(0.5);
  c.add(1.0);
  EXPECT_DOUBLE_EQ(c.release(), 2.0);
  for (int i = 0; i < 100; ++i) c.add(0.1 * (i % 10));
  EXPECT_NEAR(c.release(), c.exact_sum(), 1e-12);
}

TEST(Counter, RequeryIsStable) {
  TreeCounter c(0.3, 5);
  for (int i = 0; i < 11; ++i) c.add(0.7);
  const double first = c.release();
  EXPECT_EQ(c.release(), first);
  EXPECT_EQ(c.release(), first);
}

TEST(Counter, NodeNoiseFixedOnceDrawn) {
  // The root of epoch 2 (items 4..7) serves every query from t = 7 on.
  TreeCounter c(0.5, 8);
  std::map<std::pair<unsigned, std::uint64_t>, double> seen;
  for (int t = 1; t <= 200; ++t) {
    c.add(0.5);
    for (const auto& e : c.noise_ledger()) {
      const auto key = std::pair{e.node.epoch * 64 + e.node.level, e.node.index};
      auto [it, fresh] = seen.emplace(key, e.noise[0]);
      if (!fresh) {
        EXPECT_EQ(it->second, e.noise[0]);
      }
    }
  }
}

TEST(Counter, ReleaseIsExactSumPlusLedgerNoise) {
  TreeCounter c(0.9, 17);
  for (int t = 1; t <= 600; ++t) {
    c.add((t % 5) / 4.0);
    double noise = 0.0;
    for (const auto& e : c.noise_ledger()) noise += e.noise[0];
    ASSERT_NEAR(c.release(), c.exact_sum() + noise, 1e-9) << t;
    EXPECT_EQ(c.noise_terms(), c.noise_ledger().size());
  }
}

TEST(Counter, SensitivityViolationsRejected) {
  TreeCounter c(1.0, 1);
  EXPECT_THROW(c.release(), InvalidArgument);
  EXPECT_THROW(c.add(1.5), InvalidArgument);
  EXPECT_THROW(c.add(-0.1), InvalidArgument);
  VectorTreeCounter v(2, 1.0, 1.0, 1);
  Vector x(2);
  x << 0.7, -0.5;
  EXPECT_THROW(v.add(x), InvalidArgument);
  EXPECT_THROW(VectorTreeCounter(2, 0.0, 1.0, 1), InvalidArgument);
}

TEST(NoiseBound, SingleNodeLaplaceTail) {
  // One node of scale 1/eps: P(|L| > r) = exp(-r eps) = delta.
  for (double eps : {0.1, 1.0, 3.0}) {
    for (double delta : {0.05, 0.01, 1e-6}) {
      EXPECT_NEAR(noise_bound(1, eps, delta), std::log(1.0 / delta) / eps,
                  1e-12 / eps);
    }
  }
}

TEST(NoiseBound, ScalesAsInverseEpsilon) {
  for (std::size_t t : {1u, 2u, 6u, 100u, 4097u, 100000u}) {
    EXPECT_NEAR(noise_bound(t, 2.0, 0.05), noise_bound(t, 1.0, 0.05) / 2.0,
                1e-12 * noise_bound(t, 1.0, 0.05));
  }
}

TEST(NoiseBound, DomainErrors) {
  EXPECT_THROW(noise_bound(0, 1.0, 0.05), InvalidArgument);
  EXPECT_THROW(noise_bound(5, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(noise_bound(5, 1.0, 1.0), InvalidArgument);
  EXPECT_THROW(noise_bound(5, -1.0, 0.1), InvalidArgument);
  EXPECT_EQ(noise_bound(5, kInf, 0.1), 0.0);
}

TEST(NoiseBound, PolylogGrowth) {
  // bound / (log^{1.5}(t+1) ln(1/delta) / eps) stays within a fixed band.
  for (std::size_t t = 1; t <= (std::size_t{1} << 24); t = 2 * t + 1) {
    const double shape = std::pow(std::log(t + 1.0), 1.5) * std::log(1.0 / 0.01);
    const double ratio = noise_bound(t, 1.0, 0.01) / shape;
    EXPECT_GT(ratio, 0.05) << t;
    EXPECT_LT(ratio, 5.0) << t;
  }
}

TEST(NoiseBound, NoLargerThanUnionBound) {
  for (std::size_t t = 1; t <= 300; ++t) {
    double total = 0.0;
    const auto nodes = counter_nodes(t);
    for (const auto& n : nodes) total += n.scale_units();
    EXPECT_LE(noise_bound(t, 1.0, 0.05),
              std::log(nodes.size() / 0.05) * total + 1e-9);
  }
}

TEST(NoiseBound, MemoizedRadiusAgrees) {
  NoiseRadius radius(0.4, 0.003);
  for (std::size_t t = 1; t <= 3000; ++t) {
    ASSERT_DOUBLE_EQ(radius(t), noise_bound(t, 0.4, 0.003));
  }
}

// Error coverage and unbiasedness at t = 100, eps = 1 over 1e5 seeds.
TEST(CounterMonteCarlo, CoverageAndUnbiasedness) {
  const std::size_t trials = 100000;
  const double bound = noise_bound(100, 1.0, 0.05);
  std::size_t misses = 0;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t s = 0; s < trials; ++s) {
    TreeCounter c(1.0, s);
    for (int i = 0; i < 100; ++i) c.add(0.5);
    const double err = c.release() - c.exact_sum();
    misses += std::abs(err) > bound ? 1 : 0;
    sum += err;
    sum_sq += err * err;
  }
  EXPECT_LE(static_cast<double>(misses) / trials, 0.05);
  const double mean = sum / trials;
  const double se = std::sqrt((sum_sq / trials - mean * mean) / trials);
  EXPECT_LE(std::abs(mean), 3.0 * se);
}

// Two streams differing in one item; the released sum must satisfy
// P[A in S] <= e^eps P[B in S] on every bin, up to Monte Carlo error.
TEST(CounterMonteCarlo, LikelihoodRatioOnBins) {
  const double eps = 1.0;
  const std::size_t trials = 100000;
  const int t = 6;
  std::map<int, std::size_t> a_bins, b_bins;
  for (std::size_t s = 0; s < trials; ++s) {
    TreeCounter a(eps, s);
    TreeCounter b(eps, s + trials);
    for (int i = 1; i <= t; ++i) {
      a.add(0.0);
      b.add(i == 3 ? 1.0 : 0.0);
    }
    ++a_bins[static_cast<int>(std::floor(a.release()))];
    ++b_bins[static_cast<int>(std::floor(b.release()))];
  }
  const double n = static_cast<double>(trials);
  for (int bin = -20; bin <= 20; ++bin) {
    const double pa = a_bins[bin] / n;
    const double pb = b_bins[bin] / n;
    const double tol =
        4.0 * std::sqrt((pa * (1 - pa) + std::exp(2 * eps) * pb * (1 - pb)) / n) +
        1e-12;
    EXPECT_LE(pa, std::exp(eps) * pb + tol) << "bin " << bin;
    EXPECT_LE(pb, std::exp(eps) * pa + tol) << "bin " << bin;
  }
}

TEST(VectorCounter, CoordinateNoiseMatchesScalarAnalysis) {
  // Coordinates are independent Laplace sums with scales s1 (e+1)/eps.
  const std::size_t trials = 40000;
  const double eps = 2.0;
  const double s1 = 1.5;
  const std::size_t t = 10;
  double var_want = 0.0;
  for (const auto& node : counter_nodes(t)) {
    const double b = s1 * node.scale_units() / eps;
    var_want += 2.0 * b * b;
  }
  double s0 = 0, s00 = 0, s11 = 0, s01 = 0;
  Vector item(2);
  item << 0.5, 0.5;
  for (std::size_t s = 0; s < trials; ++s) {
    VectorTreeCounter c(2, eps, s1, s);
    for (std::size_t i = 0; i < t; ++i) c.add(item);
    const Vector err = c.release() - c.exact_sum();
    s0 += err[0];
    s00 += err[0] * err[0];
    s11 += err[1] * err[1];
    s01 += err[0] * err[1];
  }
  const double n = static_cast<double>(trials);
  const double var0 = s00 / n - (s0 / n) * (s0 / n);
  EXPECT_NEAR(var0 / var_want, 1.0, 0.05);
  EXPECT_NEAR(s11 / n / var_want, 1.0, 0.05);
  EXPECT_NEAR(s01 / n / var_want, 0.0, 0.03);
}

TEST(VectorCounter, NormBoundCoverage) {
  const std::size_t trials = 20000;
  const std::size_t d = 3;
  const double s1 = std::sqrt(static_cast<double>(d));
  const double bound = vector_noise_bound(50, 1.0, 0.05, s1, d);
  std::size_t misses = 0;
  Vector item = Vector::Constant(static_cast<Eigen::Index>(d), 0.2);
  for (std::size_t s = 0; s < trials; ++s) {
    VectorTreeCounter c(d, 1.0, s1, s);
    for (int i = 0; i < 50; ++i) c.add(item);
    misses += (c.release() - c.exact_sum()).norm() > bound ? 1 : 0;
  }
  EXPECT_LE(static_cast<double>(misses) / trials, 0.05);
}

TEST(Budget, ComposesCharges) {
  BudgetAccountant acc;
  acc.charge("a", 0.25);
  acc.charge("b", 0.5, 1e-6);
  EXPECT_DOUBLE_EQ(acc.total_epsilon(), 0.75);
  EXPECT_DOUBLE_EQ(acc.total_delta(), 1e-6);
  EXPECT_EQ(acc.ledger().size(), 2u);
  EXPECT_THROW(acc.charge("c", -1.0), InvalidArgument);
}

TEST(Budget, PrivUcbTotalsEpsilon) {
  PrivUcbPolicy p(7, 100, 0.35, 0.01, 1);
  EXPECT_NEAR(p.accountant().total_epsilon(), 0.35, 1e-15);
  EXPECT_EQ(p.accountant().ledger().size(), 7u);
}

}  // namespace
}  // namespace dpbandit
