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

// Stochastic bandit policies: UCB1-style baseline, private UCB, and two
// non-adaptive gatherers used as controls.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dpbandit/core.hpp"
#include "dpbandit/privacy.hpp"
#include "dpbandit/random.hpp"

namespace dpbandit {

inline constexpr double kForcePull = std::numeric_limits<double>::infinity();

// Failure probability used when none is configured.
inline double default_delta(std::size_t horizon) {
  return 1.0 / static_cast<double>(std::max<std::size_t>(horizon, 2));
}

namespace detail {

inline double ucb_bonus(double log_t_over_delta, std::size_t n) {
  return std::sqrt(2.0 * log_t_over_delta / static_cast<double>(n));
}

inline double log_t_over_delta(std::size_t t, double delta) {
  require(t >= 1, "round index must be >= 1");
  require(delta > 0.0 && delta <= static_cast<double>(t),
          "delta must lie in (0, t]");
  return std::log(static_cast<double>(t) / delta);
}

}  // namespace detail

// mean + sqrt(2 ln(t/delta) / n). An unpulled arm (n = 0) returns
// kForcePull so it is pulled before any finite index.
inline double ucb_index(double mean, std::size_t n, std::size_t t,
                        double delta) {
  const double log_term = detail::log_t_over_delta(t, delta);
  if (n == 0) return kForcePull;
  return mean + detail::ucb_bonus(log_term, n);
}

class UcbPolicy {
 public:
  UcbPolicy(std::size_t arms, double delta)
      : delta_(delta), counts_(arms, 0), sums_(arms, 0.0), index_(arms) {
    detail::require(arms >= 1, "UCB needs at least one arm");
    detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  }

  std::size_t arms() const noexcept { return counts_.size(); }
  double delta() const noexcept { return delta_; }

  std::size_t select(std::size_t t, const ContextView& /*contexts*/) {
    const double log_term = detail::log_t_over_delta(t, delta_);
    for (std::size_t i = 0; i < arms(); ++i) {
      index_[i] = counts_[i] == 0
                      ? kForcePull
                      : sums_[i] / static_cast<double>(counts_[i]) +
                            detail::ucb_bonus(log_term, counts_[i]);
    }
    return argmax_lowest(index_);
  }

  void observe(std::size_t arm, double reward) {
    ++counts_[arm];
    sums_[arm] += reward;
  }

  const std::vector<std::size_t>& counts() const noexcept { return counts_; }

 private:
  double delta_;
  std::vector<std::size_t> counts_;
  std::vector<double> sums_;
  std::vector<double> index_;
};

// Private UCB. Each arm's reward stream feeds its own continual-release
// counter charged epsilon/K, so by composition the action history is
// epsilon-DP in the rewards; everything downstream of the counter releases is
// post-processing.
//
// The index for a pulled arm is
//   release_i / N_i + sqrt(2 ln(t/delta) / N_i) + gamma_i / N_i,
// where gamma_i = noise_bound(N_i, epsilon/K, delta/(K T)) is the counter's
// own high-probability noise radius. A commonly suggested privacy level is
// epsilon = sqrt(K/T), but any epsilon > 0 (or +inf for no noise) is accepted.
class PrivUcbPolicy {
 public:
  PrivUcbPolicy(std::size_t arms, std::size_t horizon, double epsilon,
                double delta, std::uint64_t seed)
      : horizon_(horizon),
        epsilon_(epsilon),
        delta_(delta),
        radius_(epsilon / static_cast<double>(arms),
                delta / (static_cast<double>(arms) *
                         static_cast<double>(horizon))),
        index_(arms) {
    detail::require(arms >= 1, "PrivUCB needs at least one arm");
    detail::require(horizon >= 1, "PrivUCB needs T >= 1");
    detail::require(epsilon > 0.0, "epsilon must be positive");
    detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    const double per_arm = epsilon / static_cast<double>(arms);
    counters_.reserve(arms);
    for (std::size_t i = 0; i < arms; ++i) {
      counters_.emplace_back(per_arm, derive_seed(seed, i));
      accountant_.charge("arm-" + std::to_string(i + 1) + "-counter", per_arm);
    }
  }

  std::size_t arms() const noexcept { return counters_.size(); }
  std::size_t horizon() const noexcept { return horizon_; }
  double epsilon() const noexcept { return epsilon_; }
  double delta() const noexcept { return delta_; }
  const BudgetAccountant& accountant() const noexcept { return accountant_; }
  const TreeCounter& counter(std::size_t arm) const { return counters_[arm]; }
  std::size_t count(std::size_t arm) const { return counters_[arm].size(); }

  // gamma for an arm pulled n times.
  double confidence_relaxation(std::size_t n) { return radius_(n); }

  double index(std::size_t arm, std::size_t t) {
    return index_with_log(arm, detail::log_t_over_delta(t, delta_));
  }

  std::size_t select(std::size_t t, const ContextView& /*contexts*/) {
    const double log_term = detail::log_t_over_delta(t, delta_);
    for (std::size_t i = 0; i < arms(); ++i) {
      index_[i] = index_with_log(i, log_term);
    }
    return argmax_lowest(index_);
  }

  void observe(std::size_t arm, double reward) { counters_[arm].add(reward); }

 private:
  double index_with_log(std::size_t arm, double log_term) {
    const std::size_t n = counters_[arm].size();
    if (n == 0) return kForcePull;
    const double dn = static_cast<double>(n);
    return counters_[arm].release() / dn + detail::ucb_bonus(log_term, n) +
           radius_(n) / dn;
  }

  std::size_t horizon_;
  double epsilon_;
  double delta_;
  NoiseRadius radius_;
  std::vector<TreeCounter> counters_;
  BudgetAccountant accountant_;
  std::vector<double> index_;
};

inline double privucb_index(PrivUcbPolicy& state, std::size_t arm,
                            std::size_t t) {
  return state.index(arm, t);
}

// Non-adaptive control: arms in cyclic order.
class RoundRobinPolicy {
 public:
  explicit RoundRobinPolicy(std::size_t arms) : arms_(arms) {
    detail::require(arms >= 1, "round robin needs at least one arm");
  }
  std::size_t arms() const noexcept { return arms_; }
  std::size_t select(std::size_t t, const ContextView&) const {
    return (t - 1) % arms_;
  }
  void observe(std::size_t, double) {}

 private:
  std::size_t arms_;
};

// Non-adaptive control: an independent uniformly random arm each round.
class UniformRandomPolicy {
 public:
  UniformRandomPolicy(std::size_t arms, std::uint64_t seed)
      : arms_(arms), stream_(derive_seed(seed, stream_tag::kPolicy)) {
    detail::require(arms >= 1, "uniform policy needs at least one arm");
  }
  std::size_t arms() const noexcept { return arms_; }
  std::size_t select(std::size_t t, const ContextView&) const {
    return static_cast<std::size_t>(stream_.uniform(t) *
                                    static_cast<double>(arms_)) %
           arms_;
  }
  void observe(std::size_t, double) {}

 private:
  std::size_t arms_;
  CounterStream stream_;
};

}  // namespace dpbandit
