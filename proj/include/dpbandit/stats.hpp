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

// Statistics on adaptively gathered data: bias estimates, z-tests, the
// max-information bound for epsilon-DP gathering and the p-value correction
// it yields.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "dpbandit/core.hpp"
#include "dpbandit/error.hpp"

namespace dpbandit {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Welford accumulator.
struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }

  double variance() const {
    return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
  }

  // Standard error of the mean; NaN with fewer than two observations.
  double se() const {
    return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : kNaN;
  }
};

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// Two-sided p-value of a standard normal statistic.
inline double two_sided_p_value(double z) {
  return std::erfc(std::abs(z) / std::numbers::sqrt2);
}

// Hoeffding: for n i.i.d. samples in [0, 1],
// P(|mean - E| >= sqrt(ln(2/delta) / (2n))) <= delta.
inline double hoeffding_width(std::size_t n, double delta_fail) {
  detail::require(n >= 1, "hoeffding_width: n must be >= 1");
  detail::require(delta_fail > 0.0 && delta_fail < 1.0,
                  "hoeffding_width: delta must lie in (0, 1)");
  return std::sqrt(std::log(2.0 / delta_fail) / (2.0 * static_cast<double>(n)));
}

struct ArmBias {
  std::size_t arm = 0;
  std::optional<double> bias;  // absent when the arm was never pulled
  double se = kNaN;
  double ci_lo = kNaN;
  double ci_hi = kNaN;
  std::size_t n_reps = 0;  // runs in which the arm was pulled at least once

  bool ci_contains_zero() const {
    return bias && ci_lo <= 0.0 && 0.0 <= ci_hi;
  }
};

struct BiasReport {
  std::vector<ArmBias> arms;
  double mean_abs_bias = kNaN;  // mean of |bias| over arms with an estimate
  std::size_t runs = 0;

  // Arm whose estimate has the largest magnitude.
  const ArmBias* most_biased() const {
    const ArmBias* best = nullptr;
    for (const auto& a : arms) {
      if (a.bias && (!best || std::abs(*a.bias) > std::abs(*best->bias))) {
        best = &a;
      }
    }
    return best;
  }
};

inline constexpr double kZ95 = 1.959963984540054;

// Accumulates sample_mean_i - mu_i over runs; runs may be added one at a
// time so that large experiments need not keep every RunRecord.
class BiasAccumulator {
 public:
  explicit BiasAccumulator(std::vector<double> true_means)
      : means_(std::move(true_means)), stats_(means_.size()) {}

  void add(std::span<const std::size_t> counts, std::span<const double> sums) {
    detail::require(counts.size() == means_.size() &&
                        sums.size() == means_.size(),
                    "run arm count does not match the model");
    for (std::size_t i = 0; i < means_.size(); ++i) {
      if (counts[i] == 0) continue;
      stats_[i].add(sums[i] / static_cast<double>(counts[i]) - means_[i]);
    }
    ++runs_;
  }

  void add(const RunRecord& record) {
    add(record.arm_counts, record.arm_sums);
  }

  std::size_t runs() const noexcept { return runs_; }

  BiasReport report() const {
    BiasReport report;
    report.runs = runs_;
    double total = 0.0;
    std::size_t with_estimate = 0;
    for (std::size_t i = 0; i < means_.size(); ++i) {
      ArmBias a;
      a.arm = i;
      a.n_reps = stats_[i].n;
      if (stats_[i].n > 0) {
        a.bias = stats_[i].mean;
        a.se = stats_[i].se();
        // Normal-approximation interval.
        a.ci_lo = *a.bias - kZ95 * a.se;
        a.ci_hi = *a.bias + kZ95 * a.se;
        total += std::abs(*a.bias);
        ++with_estimate;
      }
      report.arms.push_back(a);
    }
    if (with_estimate > 0) {
      report.mean_abs_bias = total / static_cast<double>(with_estimate);
    }
    return report;
  }

 private:
  std::vector<double> means_;
  std::vector<RunningStats> stats_;
  std::size_t runs_ = 0;
};

inline BiasReport estimate_bias(std::span<const RunRecord> runs,
                                const RewardModel& model) {
  detail::require(!model.contextual(), "bias estimation needs stochastic arms");
  detail::require(runs.size() >= 2, "bias estimation needs at least two runs");
  BiasAccumulator acc(model.arm_means);
  for (const auto& run : runs) acc.add(run);
  return acc.report();
}

struct TestResult {
  std::string descriptor;
  double statistic = kNaN;
  double p_value = kNaN;
  double alpha = kNaN;
  double threshold = kNaN;  // corrected gamma(alpha)
  bool reject_raw = false;
  bool reject_corrected = false;
};

// OLS fit of responses on the design, then
// z = (theta_j - null) / (noise_sd * sqrt((X'X)^{-1}_jj)), p = 2(1 - Phi(|z|)).
inline TestResult z_test_coefficient(const Matrix& design,
                                     const Vector& responses, std::size_t coord,
                                     double null_value, double noise_sd) {
  detail::require(design.rows() == responses.size(),
                  "design and responses disagree on n");
  detail::require(coord < static_cast<std::size_t>(design.cols()),
                  "coordinate out of range");
  detail::require(noise_sd > 0.0, "noise_sd must be positive");
  const Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (design.rows() < design.cols() || qr.rank() < design.cols()) {
    throw UntestableCoordinate("design is rank deficient; coordinate " +
                               std::to_string(coord + 1) + " is untestable");
  }
  const Vector theta = qr.solve(responses);
  const Matrix gram = design.transpose() * design;
  Vector unit = Vector::Zero(design.cols());
  unit[static_cast<Eigen::Index>(coord)] = 1.0;
  const double var_jj =
      gram.ldlt().solve(unit)[static_cast<Eigen::Index>(coord)];
  TestResult result;
  result.descriptor = "z-test theta[" + std::to_string(coord + 1) +
                      "] = " + std::to_string(null_value);
  result.statistic = (theta[static_cast<Eigen::Index>(coord)] - null_value) /
                     (noise_sd * std::sqrt(var_jj));
  result.p_value = two_sided_p_value(result.statistic);
  return result;
}

// Bound, in bits, on the beta-approximate max-information between a product
// dataset of size T and the output of an epsilon-DP algorithm:
//   k = log2(e) * (eps^2 T / 2 + eps * sqrt(T ln(2/beta) / 2)).
// eps = 0 gives 0 for any beta; beta = 0 with eps > 0 gives +inf.
inline double max_info_bound(double epsilon, std::size_t horizon, double beta) {
  detail::require(epsilon >= 0.0 && std::isfinite(epsilon),
                  "max_info_bound: epsilon must be finite and >= 0");
  detail::require(horizon >= 1, "max_info_bound: T must be >= 1");
  detail::require(beta >= 0.0 && beta < 1.0,
                  "max_info_bound: beta must lie in [0, 1)");
  if (epsilon == 0.0) return 0.0;
  if (beta == 0.0) return std::numeric_limits<double>::infinity();
  const double t = static_cast<double>(horizon);
  return std::numbers::log2e *
         (epsilon * epsilon * t / 2.0 +
          epsilon * std::sqrt(t * std::log(2.0 / beta) / 2.0));
}

// gamma(alpha) = max((alpha - beta) / 2^k, 0).
inline double pvalue_correction(double alpha, double beta, double k_bits) {
  detail::require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
  detail::require(beta >= 0.0 && beta <= 1.0, "beta must lie in [0, 1]");
  detail::require(k_bits >= 0.0, "k must be >= 0");
  return std::max((alpha - beta) / std::exp2(k_bits), 0.0);
}

// Attaches the raw and max-information-corrected decisions at level alpha for
// data gathered by an epsilon reward-DP algorithm over T rounds.
inline TestResult corrected_test(TestResult result, double epsilon,
                                 std::size_t horizon, double beta,
                                 double alpha) {
  result.alpha = alpha;
  result.threshold =
      pvalue_correction(alpha, beta, max_info_bound(epsilon, horizon, beta));
  result.reject_raw = result.p_value <= alpha;
  result.reject_corrected = result.p_value <= result.threshold;
  return result;
}

struct AdaptiveStatistic {
  double value = 0.0;
  std::size_t arm = 0;    // most-pulled arm, ties to the lowest index
  std::size_t count = 0;
};

// (sum of i*'s rewards - N mu0) / sqrt(N) for the most-pulled arm i*.
inline AdaptiveStatistic adaptive_t_statistic(const RunRecord& record,
                                              double mu0) {
  detail::require(record.horizon() >= 1, "empty run");
  AdaptiveStatistic s;
  s.arm = argmax_lowest(record.arm_counts);
  s.count = record.arm_counts[s.arm];
  const double n = static_cast<double>(s.count);
  s.value = (record.arm_sums[s.arm] - n * mu0) / std::sqrt(n);
  return s;
}

// Kolmogorov-Smirnov distance between the sample and Uniform(0, 1).
inline double ks_uniform_distance(std::vector<double> sample) {
  detail::require(!sample.empty(), "empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double p = sample[i];
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - p,
                  p - static_cast<double>(i) / n});
  }
  return d;
}

// Fraction of values strictly below the threshold.
inline double fraction_below(std::span<const double> values,
                             double threshold) {
  if (values.empty()) return kNaN;
  const auto hits = std::count_if(values.begin(), values.end(),
                                  [&](double v) { return v < threshold; });
  return static_cast<double>(hits) / static_cast<double>(values.size());
}

}  // namespace dpbandit
