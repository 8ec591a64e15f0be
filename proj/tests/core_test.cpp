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

#include <cmath>
#include <cstddef>
#include <vector>

#include <gtest/gtest.h>

#include "dpbandit/core.hpp"
#include "dpbandit/linear.hpp"
#include "dpbandit/stochastic.hpp"

namespace dpbandit {
namespace {

// Pulls every arm once, then the arm with the best sample mean.
class GreedyPolicy {
 public:
  explicit GreedyPolicy(std::size_t arms) : counts_(arms, 0), sums_(arms, 0.0) {}
  std::size_t arms() const { return counts_.size(); }
  std::size_t select(std::size_t, const ContextView&) {
    std::vector<double> idx(arms());
    for (std::size_t i = 0; i < arms(); ++i) {
      idx[i] = counts_[i] ? sums_[i] / counts_[i] : kForcePull;
    }
    return argmax_lowest(idx);
  }
  void observe(std::size_t arm, double y) {
    ++counts_[arm];
    sums_[arm] += y;
  }

 private:
  std::vector<std::size_t> counts_;
  std::vector<double> sums_;
};

class FixedArmPolicy {
 public:
  FixedArmPolicy(std::size_t arms, std::size_t arm) : arms_(arms), arm_(arm) {}
  std::size_t arms() const { return arms_; }
  std::size_t select(std::size_t, const ContextView&) const { return arm_; }
  void observe(std::size_t, double) {}

 private:
  std::size_t arms_;
  std::size_t arm_;
};

TEST(Tableau, DegenerateBernoulliColumnIsZero) {
  const auto tab = generate_tableau(RewardModel::bernoulli({1.0, 0.0}), 3, 2, 7);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(tab.reward(t, 0), 1.0);
    EXPECT_EQ(tab.reward(t, 1), 0.0);
  }
}

TEST(Tableau, SameSeedSameTableau) {
  const auto model = RewardModel::bernoulli({0.3, 0.6, 0.9});
  const auto a = generate_tableau(model, 50, 3, 11);
  const auto b = generate_tableau(model, 50, 3, 11);
  const auto c = generate_tableau(model, 50, 3, 12);
  bool differs = false;
  for (std::size_t t = 0; t < 50; ++t) {
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(a.reward(t, i), b.reward(t, i));
      differs = differs || a.reward(t, i) != c.reward(t, i);
    }
  }
  EXPECT_TRUE(differs);
}

TEST(Tableau, BernoulliColumnMeanWithinThreeSigma) {
  const std::size_t T = 10000;
  const auto tab = generate_tableau(RewardModel::bernoulli({0.5}), T, 1, 3);
  double sum = 0.0;
  for (std::size_t t = 0; t < T; ++t) sum += tab.reward(t, 0);
  // 3 * sqrt(0.25 / 1e4) = 0.015
  EXPECT_NEAR(sum / T, 0.5, 3.0 * std::sqrt(0.25 / T));
}

TEST(Tableau, InvalidModelsRejectedBeforeSampling) {
  EXPECT_THROW(generate_tableau(RewardModel::bernoulli({1.2}), 3, 1, 0),
               InvalidArgument);
  EXPECT_THROW(generate_tableau(RewardModel::bernoulli({-0.1, 0.5}), 3, 2, 0),
               InvalidArgument);
  Vector long_theta(2);
  long_theta << 1.0, 1.0;
  EXPECT_THROW(generate_tableau(RewardModel::linear_gaussian({long_theta}, 0.1,
                                                             true),
                                3, 1, 0),
               InvalidArgument);
}

TEST(Tableau, ConstructorEnforcesInvariants) {
  EXPECT_THROW(BanditTableau(1, 2, {0.5, 1.5}), InvalidArgument);
  EXPECT_THROW(BanditTableau(2, 2, {0.5, 0.5, 0.5}), InvalidArgument);
  EXPECT_THROW(BanditTableau(1, 1, {0.5}, 2, {1.0, 1.0}), InvalidArgument);
  EXPECT_NO_THROW(BanditTableau(1, 1, {0.5}, 2, {0.6, 0.8}));
  // Unclamped linear rewards may leave [0, 1] when explicitly allowed.
  EXPECT_NO_THROW(BanditTableau(1, 1, {-2.0}, 1, {1.0}, false));
}

TEST(Tableau, ClampedLinearRewardsStayInUnitInterval) {
  Vector theta(2);
  theta << 0.6, 0.0;
  const auto model = RewardModel::linear_gaussian({theta, -theta}, 1.0, true);
  const auto tab = generate_tableau(model, 200, 2, 5);
  for (std::size_t t = 0; t < 200; ++t) {
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_GE(tab.reward(t, i), 0.0);
      EXPECT_LE(tab.reward(t, i), 1.0);
      EXPECT_NEAR(tab.contexts(t).arm(i).norm(), 1.0, 1e-12);
    }
  }
}

TEST(Tableau, FixedContextListCyclesRowMajor) {
  std::vector<Vector> list{Vector::Unit(2, 0), Vector::Unit(2, 1),
                           Vector::Unit(2, 0) * 0.5};
  const auto model = RewardModel::linear_gaussian(
      {Vector::Zero(2), Vector::Zero(2)}, 0.0, true,
      ContextGenerator::fixed_list(list));
  const auto tab = generate_tableau(model, 4, 2, 1);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_TRUE(tab.contexts(t).arm(i).isApprox(list[(t * 2 + i) % 3]));
    }
  }
}

TEST(Interact, SingleArmReadsFirstColumn) {
  const auto tab = generate_tableau(RewardModel::bernoulli({0.4}), 20, 1, 9);
  UcbPolicy policy(1, 0.1);
  const auto rec = interact_tableau(tab, policy);
  for (std::size_t t = 0; t < 20; ++t) {
    EXPECT_EQ(rec.choices[t], 0u);
    EXPECT_EQ(rec.observed_rewards[t], tab.reward(t, 0));
  }
}

TEST(Interact, GreedyHandTrace) {
  // Rows (1, 0): round 1 pulls arm 1 (y=1), round 2 arm 2 (y=0), round 3 the
  // better sample mean, arm 1, and so on.
  const BanditTableau tab(6, 2, {1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0});
  GreedyPolicy policy(2);
  const auto rec = interact_tableau(tab, policy);
  const std::vector<std::size_t> want{0, 1, 0, 0, 0, 0};
  EXPECT_EQ(rec.choices, want);
}

TEST(Interact, ConservationAndProvenance) {
  const auto model = RewardModel::bernoulli(spaced_means(4, 0.2));
  const auto tab = generate_tableau(model, 300, 4, 21);
  PrivUcbPolicy policy(4, 300, 1.0, 0.01, 4);
  const auto rec = interact_tableau(tab, policy);
  std::size_t total = 0;
  for (auto n : rec.arm_counts) total += n;
  EXPECT_EQ(total, 300u);
  for (std::size_t t = 0; t < 300; ++t) {
    EXPECT_EQ(rec.observed_rewards[t], tab.reward(t, rec.choices[t]));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (rec.arm_counts[i] == 0) continue;
    EXPECT_NEAR(*rec.sample_mean(i) * rec.arm_counts[i], rec.arm_sums[i], 1e-9);
  }
}

TEST(Interact, OutOfRangeArmIsProtocolViolation) {
  const auto tab = generate_tableau(RewardModel::bernoulli({0.5, 0.5}), 3, 2, 1);
  FixedArmPolicy bad(2, 2);
  EXPECT_THROW(interact_tableau(tab, bad), ProtocolViolation);
  FixedArmPolicy also_bad(2, 5);
  EXPECT_THROW(interact_online(RewardModel::bernoulli({0.5, 0.5}), 3, also_bad, 1),
               ProtocolViolation);
}

TEST(Interact, ArmCountMismatchRejected) {
  const auto tab = generate_tableau(RewardModel::bernoulli({0.5, 0.5}), 3, 2, 1);
  UcbPolicy policy(3, 0.1);
  EXPECT_THROW(interact_tableau(tab, policy), InvalidArgument);
}

TEST(Interact, RoundRobinChoices) {
  RoundRobinPolicy policy(2);
  const auto rec = interact_online(RewardModel::bernoulli({0.5, 0.5}), 4, policy, 3);
  const std::vector<std::size_t> want{0, 1, 0, 1};
  EXPECT_EQ(rec.choices, want);
}

TEST(Interact, DeterministicRewardsOnlineEqualsTableau) {
  const auto model = RewardModel::bernoulli({1.0, 0.0, 1.0});
  GreedyPolicy a(3);
  GreedyPolicy b(3);
  const auto online = interact_online(model, 30, a, 1);
  const auto offline = interact_tableau(generate_tableau(model, 30, 3, 99), b);
  EXPECT_EQ(online.choices, offline.choices);
  EXPECT_EQ(online.observed_rewards, offline.observed_rewards);
}

TEST(Interact, SharedSeedOnlineEqualsTableau) {
  const auto model = RewardModel::bernoulli(spaced_means(5, 0.1));
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    PrivUcbPolicy a(5, 200, 0.5, 0.01, seed);
    PrivUcbPolicy b(5, 200, 0.5, 0.01, seed);
    const auto online = interact_online(model, 200, a, seed);
    const auto offline = interact_tableau(generate_tableau(model, 200, 5, seed), b);
    ASSERT_EQ(online.choices, offline.choices) << "seed " << seed;
    ASSERT_EQ(online.observed_rewards, offline.observed_rewards);
  }
}

TEST(Interact, SharedSeedOnlineEqualsTableauLinear) {
  Vector t1(3), t2(3);
  t1 << 0.0, 0.5, 0.3;
  t2 << 0.0, -0.2, 0.6;
  const auto model = RewardModel::linear_gaussian({t1, t2}, 1.0, false);
  LinUcbConfig cfg{2, 3, 80, 1.0, 0.05, std::nullopt};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    LinUcbPolicy a(cfg, seed);
    LinUcbPolicy b(cfg, seed);
    const auto online = interact_online(model, 80, a, seed);
    const auto offline = interact_tableau(generate_tableau(model, 80, 2, seed), b);
    ASSERT_EQ(online.choices, offline.choices);
    ASSERT_EQ(online.observed_rewards, offline.observed_rewards);
  }
}

TEST(RunRecordTest, UnpulledArmMeanIsAbsent) {
  RunRecord rec(3);
  rec.record(0, 1.0);
  rec.record(0, 0.0);
  rec.record(2, 0.5);
  EXPECT_DOUBLE_EQ(*rec.sample_mean(0), 0.5);
  EXPECT_FALSE(rec.sample_mean(1).has_value());
  EXPECT_DOUBLE_EQ(*rec.sample_means()[2], 0.5);
}

TEST(Regret, Stochastic) {
  const auto model = RewardModel::bernoulli({1.0, 0.95});
  RunRecord best(2);
  for (int t = 0; t < 5; ++t) best.record(0, 1.0);
  EXPECT_DOUBLE_EQ(pseudo_regret_stochastic(best, model), 0.0);

  RunRecord worse(2);
  worse.record(1, 1.0);
  worse.record(1, 0.0);
  EXPECT_NEAR(pseudo_regret_stochastic(worse, model), 0.10, 1e-12);

  const auto flat = RewardModel::bernoulli({0.5, 0.5});
  EXPECT_DOUBLE_EQ(pseudo_regret_stochastic(worse, flat), 0.0);
}

TEST(Regret, StochasticBounds) {
  const auto model = RewardModel::bernoulli({0.9, 0.2, 0.5});
  UniformRandomPolicy policy(3, 8);
  const auto rec = interact_online(model, 400, policy, 8);
  const double r = pseudo_regret_stochastic(rec, model);
  EXPECT_GE(r, 0.0);
  EXPECT_LE(r, 400 * (0.9 - 0.2) + 1e-9);
  const auto curve = regret_curve_stochastic(rec, model);
  for (std::size_t t = 1; t < curve.size(); ++t) EXPECT_GE(curve[t], curve[t - 1]);
}

TEST(Regret, StochasticRejectsContextualModel) {
  const auto model =
      RewardModel::linear_gaussian({Vector::Unit(1, 0)}, 0.1, true);
  EXPECT_THROW(pseudo_regret_stochastic(RunRecord(1), model), InvalidArgument);
}

TEST(Regret, Contextual) {
  Vector a(1), b(1);
  a << 1.0;
  b << -1.0;
  const auto model = RewardModel::linear_gaussian({a, b}, 0.0, false);
  // Three rounds, every context equal to (1).
  const BanditTableau tab(3, 2, {0, 0, 0, 0, 0, 0}, 1, {1, 1, 1, 1, 1, 1}, false);
  RunRecord second(2);
  for (int t = 0; t < 3; ++t) second.record(1, 0.0);
  EXPECT_DOUBLE_EQ(pseudo_regret_contextual(second, tab, model), 6.0);
  RunRecord first(2);
  for (int t = 0; t < 3; ++t) first.record(0, 0.0);
  EXPECT_DOUBLE_EQ(pseudo_regret_contextual(first, tab, model), 0.0);

  const auto single = RewardModel::linear_gaussian({a}, 0.0, false);
  const BanditTableau one(2, 1, {0, 0}, 1, {0.3, -0.7}, false);
  RunRecord only(1);
  only.record(0, 0.0);
  only.record(0, 0.0);
  EXPECT_DOUBLE_EQ(pseudo_regret_contextual(only, one, single), 0.0);
}

TEST(Regret, ContextualNeedsContexts) {
  const auto model = RewardModel::linear_gaussian({Vector::Unit(1, 0)}, 0.0, false);
  const BanditTableau tab(1, 1, {0.0});
  RunRecord rec(1);
  rec.record(0, 0.0);
  EXPECT_THROW(pseudo_regret_contextual(rec, tab, model), InvalidArgument);
}

TEST(Regret, ContextualOnlineCurveMatchesTableau) {
  Vector t1(2), t2(2);
  t1 << 0.7, 0.1;
  t2 << -0.3, 0.6;
  const auto model = RewardModel::linear_gaussian({t1, t2}, 0.5, false);
  LinUcbConfig cfg{2, 2, 60, 1.0, 0.05, std::nullopt};
  LinUcbPolicy p(cfg, 4);
  const auto rec = interact_online(model, 60, p, 4);
  const auto curve = regret_curve_contextual(rec, model, std::uint64_t{4});
  const auto tab = generate_tableau(model, 60, 2, 4);
  EXPECT_NEAR(curve.back(), pseudo_regret_contextual(rec, tab, model), 1e-12);
}

TEST(Random, ArgmaxTiesGoToLowestIndex) {
  EXPECT_EQ(argmax_lowest(std::vector<double>{1.0, 3.0, 3.0}), 1u);
  EXPECT_EQ(argmax_lowest(std::vector<double>{kForcePull, kForcePull}), 0u);
}

}  // namespace
}  // namespace dpbandit
