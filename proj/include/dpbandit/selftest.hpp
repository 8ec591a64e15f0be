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

// Fast invariant checks bundled with the library so an installed binary can
// verify itself (`dpbandit selftest`). The full suites live under tests/.

#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <string>
#include <vector>

#include "dpbandit/core.hpp"
#include "dpbandit/linear.hpp"
#include "dpbandit/privacy.hpp"
#include "dpbandit/stats.hpp"
#include "dpbandit/stochastic.hpp"

namespace dpbandit::selftest {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {

// Greedy cover of [1, m] by aligned dyadic blocks, largest first, with a
// block size cap; the count must agree with the counter's own decomposition.
inline std::size_t greedy_cover_size(std::size_t t) {
  std::size_t nodes = 0;
  std::size_t covered = 0;
  for (std::size_t e = 0;; ++e) {
    const std::size_t epoch_len = std::size_t{1} << e;
    if (covered + epoch_len > t) {
      std::size_t left = t - covered;
      std::size_t block = epoch_len;
      while (left > 0) {
        block >>= (block > left) ? 1 : 0;
        if (block <= left) {
          left -= block;
          ++nodes;
        }
      }
      return nodes;
    }
    covered += epoch_len;
    ++nodes;
  }
}

inline CheckResult check(std::string name,
                         const std::function<std::string()>& body) {
  CheckResult r{std::move(name), false, {}};
  try {
    r.detail = body();
    r.passed = r.detail.empty();
  } catch (const std::exception& e) {
    r.detail = std::string("exception: ") + e.what();
  }
  return r;
}

template <class MakePolicy>
std::string replay_matches(const RewardModel& model, std::size_t horizon,
                           MakePolicy make, std::uint64_t seeds) {
  for (std::uint64_t s = 1; s <= seeds; ++s) {
    auto online = make(s);
    auto offline = make(s);
    const auto a = interact_online(model, horizon, online, s);
    const auto b =
        interact_tableau(generate_tableau(model, horizon, model.arms(), s),
                         offline);
    if (a.choices != b.choices) return "seed " + std::to_string(s) + " diverged";
  }
  return {};
}

}  // namespace detail

inline std::vector<CheckResult> run_all() {
  std::vector<CheckResult> out;

  out.push_back(detail::check("counter decomposition vs greedy cover", [] {
    for (std::size_t t = 1; t <= 1024; ++t) {
      if (counter_nodes(t).size() != detail::greedy_cover_size(t)) {
        return "t = " + std::to_string(t);
      }
    }
    return std::string();
  }));

  out.push_back(detail::check("single-node noise bound", [] {
    const double b = noise_bound(1, 0.5, 0.01);
    const double want = std::log(100.0) / 0.5;
    return std::abs(b - want) < 1e-9 * want ? std::string()
                                            : "got " + std::to_string(b);
  }));

  out.push_back(detail::check("counter release = sum + ledger noise", [] {
    TreeCounter counter(0.7, 99);
    for (int t = 1; t <= 300; ++t) {
      counter.add((t % 7) / 7.0);
      double noise = 0.0;
      for (const auto& e : counter.noise_ledger()) noise += e.noise[0];
      if (std::abs(counter.release() - counter.exact_sum() - noise) > 1e-9) {
        return "t = " + std::to_string(t);
      }
    }
    return std::string();
  }));

  out.push_back(detail::check("noiseless PrivUCB equals UCB", [] {
    const auto model = RewardModel::bernoulli(spaced_means(6, 0.1));
    const auto tab = generate_tableau(model, 400, 6, 5);
    UcbPolicy ucb(6, 0.01);
    PrivUcbPolicy priv(6, 400, std::numeric_limits<double>::infinity(), 0.01, 5);
    return interact_tableau(tab, ucb).choices ==
                   interact_tableau(tab, priv).choices
               ? std::string()
               : std::string("histories differ");
  }));

  out.push_back(detail::check("online and tableau drivers agree", [] {
    const auto stoch = RewardModel::bernoulli(spaced_means(5, 0.05));
    std::string err = detail::replay_matches(
        stoch, 200, [](std::uint64_t) { return UcbPolicy(5, 0.01); }, 20);
    if (err.empty()) {
      err = detail::replay_matches(
          stoch, 200,
          [](std::uint64_t s) { return PrivUcbPolicy(5, 200, 0.5, 0.01, s); },
          20);
    }
    LinUcbConfig cfg;
    cfg.arms = 3;
    cfg.dim = 3;
    cfg.horizon = 100;
    const auto lin = RewardModel::linear_gaussian(
        {Vector::Unit(3, 0) * 0.5, Vector::Unit(3, 1) * 0.5,
         Vector::Unit(3, 2) * 0.5},
        0.1, true);
    if (err.empty()) {
      err = detail::replay_matches(
          lin, 100, [&](std::uint64_t s) { return LinUcbPolicy(cfg, s); }, 10);
    }
    cfg.epsilon = 1.0;
    if (err.empty()) {
      err = detail::replay_matches(
          lin, 100, [&](std::uint64_t s) { return LinUcbPolicy(cfg, s); }, 10);
    }
    return err;
  }));

  out.push_back(detail::check("gram matrix eigenvalues >= lambda", [] {
    ArmRegressionState state(4, 2.0, std::nullopt, 0);
    SequentialStream rng(3);
    for (int i = 0; i < 50; ++i) {
      Vector x(4);
      for (auto& c : x) c = rng.normal();
      x /= x.norm();
      state.update(x, rng.uniform());
    }
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(state.gram());
    return eig.eigenvalues().minCoeff() >= 2.0 - 1e-9
               ? std::string()
               : std::string("smallest eigenvalue below lambda");
  }));

  out.push_back(detail::check("p-value correction edge cases", [] {
    if (pvalue_correction(0.05, 0.0, max_info_bound(0.0, 500, 0.0)) != 0.05) {
      return std::string("eps = 0 should leave alpha unchanged");
    }
    if (pvalue_correction(0.05, 0.05, max_info_bound(1.0, 500, 0.05)) != 0.0) {
      return std::string("alpha = beta should give 0");
    }
    return std::string();
  }));

  return out;
}

}  // namespace dpbandit::selftest
