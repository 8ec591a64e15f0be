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

// Reference computations used as test oracles. Each one is derived
// independently of the library code it checks: brute-force enumeration,
// numeric inversion or a different decomposition.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace dpbandit::oracle {

inline double laplace_cdf(double x, double b) {
  return x < 0.0 ? 0.5 * std::exp(x / b) : 1.0 - 0.5 * std::exp(-x / b);
}

// Quantile by bisection on the CDF.
inline double laplace_quantile_bisect(double u, double b) {
  double lo = -200.0 * b;
  double hi = 200.0 * b;
  for (int i = 0; i < 300; ++i) {
    const double mid = 0.5 * (lo + hi);
    (laplace_cdf(mid, b) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Standard normal CDF by composite Simpson integration of the density.
inline double normal_cdf_simpson(double x) {
  const double lo = -12.0;
  if (x <= lo) return 0.0;
  const int n = 20000;
  const double h = (x - lo) / n;
  auto pdf = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); };
  double acc = pdf(lo) + pdf(x);
  for (int i = 1; i < n; ++i) acc += pdf(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

struct Block {
  std::size_t begin;  // 1-based inclusive
  std::size_t end;
  friend bool operator==(const Block&, const Block&) = default;
};

// Covers [1..m] inside a tree of `slots` leaves by scanning left to right and
// taking, at each position, the largest aligned block that fits.
inline std::vector<Block> greedy_dyadic_cover(std::size_t m, std::size_t slots) {
  std::vector<Block> out;
  std::size_t pos = 0;  // items covered so far
  while (pos < m) {
    std::size_t width = slots;
    while (width > 1 && (pos % width != 0 || pos + width > m)) width /= 2;
    out.push_back({pos + 1, pos + width});
    pos += width;
  }
  return out;
}

struct EpochBlock {
  unsigned epoch;
  std::size_t begin;  // global 1-based
  std::size_t end;
};

// Walks items 1..t, grouping them into epochs of lengths 1, 2, 4, ...; a
// finished epoch contributes its whole range, the unfinished one its greedy
// cover.
inline std::vector<EpochBlock> epoch_cover(std::size_t t) {
  std::vector<EpochBlock> out;
  std::size_t start = 1;
  for (unsigned e = 0;; ++e) {
    const std::size_t len = std::size_t{1} << e;
    if (start + len - 1 <= t) {
      out.push_back({e, start, start + len - 1});
      start += len;
      if (start > t) return out;
      continue;
    }
    for (const auto& b : greedy_dyadic_cover(t - start + 1, len)) {
      out.push_back({e, start + b.begin - 1, start + b.end - 1});
    }
    return out;
  }
}

// Least squares through the SVD (minimum-norm solution).
inline Eigen::VectorXd ols_svd(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(X, Eigen::ComputeThinU |
                                                  Eigen::ComputeThinV)
      .solve(y);
}

// Binomial standard error of a proportion.
inline double proportion_se(double p, std::size_t n) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

}  // namespace dpbandit::oracle
