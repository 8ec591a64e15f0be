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

// Bandit data model: reward models, tableaux, run records, the two
// interaction drivers and pseudo-regret.
//
// Arms and rounds are 0-based throughout the library. Serialized forms
// (CSV/JSON) are 1-based.

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dpbandit/error.hpp"
#include "dpbandit/linalg.hpp"
#include "dpbandit/random.hpp"

namespace dpbandit {

enum class RewardKind { kBernoulliArms, kUniformArms, kLinearGaussian };

inline const char* to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::kBernoulliArms: return "bernoulli-arms";
    case RewardKind::kUniformArms: return "uniform-arms";
    case RewardKind::kLinearGaussian: return "linear-gaussian";
  }
  return "?";
}

// How contexts are produced for the linear kind. Fixed lists are cycled in
// row-major (round, arm) order: x_{i,t} = fixed[(t*K + i) % fixed.size()].
// Only i.i.d. or fixed contexts are supported; no adaptive adversary.
struct ContextGenerator {
  enum class Kind { kUnitSphere, kFixedList };
  Kind kind = Kind::kUnitSphere;
  std::vector<Vector> fixed;

  static ContextGenerator unit_sphere() { return {}; }
  static ContextGenerator fixed_list(std::vector<Vector> list) {
    return {Kind::kFixedList, std::move(list)};
  }
};

// Non-owning view of one round's contexts: column i is arm i's context.
class ContextView {
 public:
  ContextView() = default;
  ContextView(const double* data, std::size_t dim, std::size_t arms)
      : data_(data), dim_(dim), arms_(arms) {}

  bool empty() const noexcept { return data_ == nullptr; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t arms() const noexcept { return arms_; }

  Eigen::Map<const Vector> arm(std::size_t i) const {
    return Eigen::Map<const Vector>(data_ + i * dim_,
                                    static_cast<Eigen::Index>(dim_));
  }

 private:
  const double* data_ = nullptr;
  std::size_t dim_ = 0;
  std::size_t arms_ = 0;
};

struct RewardModel {
  RewardKind kind = RewardKind::kBernoulliArms;
  std::vector<double> arm_means;  // stochastic kinds
  std::vector<Vector> thetas;     // linear kind
  double noise_sd = 1.0;          // linear kind
  bool clamp = false;             // linear kind: clamp rewards to [0, 1]
  ContextGenerator contexts;      // linear kind

  static RewardModel bernoulli(std::vector<double> means) {
    RewardModel m;
    m.kind = RewardKind::kBernoulliArms;
    m.arm_means = std::move(means);
    return m;
  }

  // Uniform on [mu - w, mu + w] with w = min(mu, 1 - mu).
  static RewardModel uniform(std::vector<double> means) {
    RewardModel m;
    m.kind = RewardKind::kUniformArms;
    m.arm_means = std::move(means);
    return m;
  }

  static RewardModel linear_gaussian(
      std::vector<Vector> thetas, double noise_sd, bool clamp,
      ContextGenerator contexts = ContextGenerator::unit_sphere()) {
    RewardModel m;
    m.kind = RewardKind::kLinearGaussian;
    m.thetas = std::move(thetas);
    m.noise_sd = noise_sd;
    m.clamp = clamp;
    m.contexts = std::move(contexts);
    return m;
  }

  bool contextual() const noexcept {
    return kind == RewardKind::kLinearGaussian;
  }

  std::size_t arms() const noexcept {
    return contextual() ? thetas.size() : arm_means.size();
  }

  std::size_t dim() const noexcept {
    return contextual() && !thetas.empty()
               ? static_cast<std::size_t>(thetas.front().size())
               : 0;
  }

  // Rewards are guaranteed to lie in [0, 1].
  bool bounded() const noexcept { return !contextual() || clamp; }

  void validate() const {
    using detail::require;
    require(arms() >= 1, "reward model needs at least one arm");
    if (!contextual()) {
      for (double mu : arm_means) {
        require(mu >= 0.0 && mu <= 1.0, "arm means must lie in [0, 1]");
      }
      return;
    }
    const auto d = thetas.front().size();
    require(d >= 1, "theta dimension must be positive");
    for (const auto& theta : thetas) {
      require(theta.size() == d, "all thetas must share one dimension");
      require(theta.norm() <= 1.0 + 1e-12, "theta must have norm <= 1");
    }
    require(noise_sd >= 0.0 && std::isfinite(noise_sd),
            "noise_sd must be finite and >= 0");
    if (contexts.kind == ContextGenerator::Kind::kFixedList) {
      require(!contexts.fixed.empty(), "fixed context list is empty");
      for (const auto& x : contexts.fixed) {
        require(x.size() == d, "fixed context dimension mismatch");
        require(x.norm() <= 1.0 + 1e-12, "context must have norm <= 1");
      }
    }
  }

  // Expected reward of a stochastic arm.
  double mean(std::size_t arm) const { return arm_means.at(arm); }

  // Linear predictor theta_i . x (the expected reward before clamping).
  double mean(std::size_t arm, const Eigen::Ref<const Vector>& x) const {
    return thetas.at(arm).dot(x);
  }
};

// mu_i = top - i * gap for i = 0..K-1.
inline std::vector<double> spaced_means(std::size_t arms, double gap,
                                        double top = 1.0) {
  std::vector<double> means(arms);
  for (std::size_t i = 0; i < arms; ++i) {
    means[i] = top - static_cast<double>(i) * gap;
  }
  return means;
}

// On-demand source of tableau entries. Entry (t, i) consumes exactly stream
// element t*K + i of the reward stream; contexts for (t, i) come from the
// same element index of an independent context stream.
class RewardOracle {
 public:
  RewardOracle(RewardModel model, std::uint64_t seed)
      : model_(std::move(model)),
        rewards_(derive_seed(seed, stream_tag::kRewards)),
        contexts_(derive_seed(seed, stream_tag::kContexts)) {
    model_.validate();
  }

  const RewardModel& model() const noexcept { return model_; }
  std::size_t arms() const noexcept { return model_.arms(); }
  std::size_t dim() const noexcept { return model_.dim(); }

  // Writes the d x K contexts of round t into out (column per arm).
  void contexts(std::size_t t, std::span<double> out) const {
    const std::size_t k = arms();
    const std::size_t d = dim();
    for (std::size_t i = 0; i < k; ++i) {
      Eigen::Map<Vector> x(out.data() + i * d, static_cast<Eigen::Index>(d));
      const std::uint64_t element = t * k + i;
      if (model_.contexts.kind == ContextGenerator::Kind::kFixedList) {
        const auto& list = model_.contexts.fixed;
        x = list[element % list.size()];
        continue;
      }
      for (std::size_t c = 0; c < d; ++c) {
        x[static_cast<Eigen::Index>(c)] = contexts_.normal(element, c);
      }
      // A zero draw cannot be redrawn from a counter stream; map it to e_1.
      const double norm = x.norm();
      if (norm > 0.0) {
        x /= norm;
      } else {
        x = Vector::Unit(static_cast<Eigen::Index>(d), 0);
      }
    }
  }

  double reward(std::size_t t, std::size_t arm, const ContextView& ctx) const {
    const std::uint64_t element = t * arms() + arm;
    switch (model_.kind) {
      case RewardKind::kBernoulliArms:
        return rewards_.uniform(element) < model_.arm_means[arm] ? 1.0 : 0.0;
      case RewardKind::kUniformArms: {
        const double mu = model_.arm_means[arm];
        const double w = std::min(mu, 1.0 - mu);
        return mu - w + 2.0 * w * rewards_.uniform(element);
      }
      case RewardKind::kLinearGaussian: {
        double y = model_.mean(arm, ctx.arm(arm)) +
                   model_.noise_sd * rewards_.normal(element);
        if (model_.clamp) y = std::clamp(y, 0.0, 1.0);
        return y;
      }
    }
    return 0.0;
  }

 private:
  RewardModel model_;
  CounterStream rewards_;
  CounterStream contexts_;
};

// Pre-drawn T x K reward matrix, plus T x K contexts in the contextual case.
class BanditTableau {
 public:
  // bounded=false admits rewards outside [0, 1] (unclamped linear-gaussian).
  BanditTableau(std::size_t horizon, std::size_t arms,
                std::vector<double> rewards, std::size_t dim = 0,
                std::vector<double> context_data = {}, bool bounded = true)
      : horizon_(horizon),
        arms_(arms),
        dim_(dim),
        rewards_(std::move(rewards)),
        contexts_(std::move(context_data)) {
    using detail::require;
    require(horizon >= 1 && arms >= 1, "tableau needs T, K >= 1");
    require(rewards_.size() == horizon * arms, "reward matrix must be T x K");
    for (double y : rewards_) {
      require(std::isfinite(y), "tableau rewards must be finite");
      if (bounded) require(y >= 0.0 && y <= 1.0, "rewards must lie in [0, 1]");
    }
    if (!contexts_.empty()) {
      require(dim >= 1, "context dimension must be positive");
      require(contexts_.size() == horizon * arms * dim,
              "context tensor must be T x K x d");
      for (std::size_t t = 0; t < horizon; ++t) {
        for (std::size_t i = 0; i < arms; ++i) {
          require(contexts(t).arm(i).norm() <= 1.0 + 1e-12,
                  "contexts must have norm <= 1");
        }
      }
    }
  }

  std::size_t horizon() const noexcept { return horizon_; }
  std::size_t arms() const noexcept { return arms_; }
  std::size_t dim() const noexcept { return dim_; }
  bool has_contexts() const noexcept { return !contexts_.empty(); }

  double reward(std::size_t t, std::size_t arm) const {
    return rewards_[t * arms_ + arm];
  }

  ContextView contexts(std::size_t t) const {
    if (contexts_.empty()) return {};
    return {contexts_.data() + t * arms_ * dim_, dim_, arms_};
  }

 private:
  std::size_t horizon_;
  std::size_t arms_;
  std::size_t dim_;
  std::vector<double> rewards_;
  std::vector<double> contexts_;
};

inline BanditTableau generate_tableau(const RewardModel& model,
                                      std::size_t horizon, std::size_t arms,
                                      std::uint64_t seed) {
  detail::require(horizon >= 1 && arms >= 1, "T and K must be >= 1");
  detail::require(arms == model.arms(), "K does not match the reward model");
  const RewardOracle oracle(model, seed);
  const std::size_t d = model.dim();
  std::vector<double> rewards(horizon * arms);
  std::vector<double> contexts(model.contextual() ? horizon * arms * d : 0);
  for (std::size_t t = 0; t < horizon; ++t) {
    ContextView view;
    if (model.contextual()) {
      std::span<double> row(contexts.data() + t * arms * d, arms * d);
      oracle.contexts(t, row);
      view = ContextView(row.data(), d, arms);
    }
    for (std::size_t i = 0; i < arms; ++i) {
      rewards[t * arms + i] = oracle.reward(t, i, view);
    }
  }
  return BanditTableau(horizon, arms, std::move(rewards), d,
                       std::move(contexts), model.bounded());
}

struct RunRecord {
  std::vector<std::size_t> choices;
  std::vector<double> observed_rewards;
  std::vector<std::size_t> arm_counts;
  std::vector<double> arm_sums;

  explicit RunRecord(std::size_t arms = 0)
      : arm_counts(arms, 0), arm_sums(arms, 0.0) {}

  std::size_t horizon() const noexcept { return choices.size(); }
  std::size_t arms() const noexcept { return arm_counts.size(); }

  void record(std::size_t arm, double reward) {
    choices.push_back(arm);
    observed_rewards.push_back(reward);
    ++arm_counts[arm];
    arm_sums[arm] += reward;
  }

  // Absent when the arm was never pulled.
  std::optional<double> sample_mean(std::size_t arm) const {
    if (arm_counts[arm] == 0) return std::nullopt;
    return arm_sums[arm] / static_cast<double>(arm_counts[arm]);
  }

  std::vector<std::optional<double>> sample_means() const {
    std::vector<std::optional<double>> out(arms());
    for (std::size_t i = 0; i < arms(); ++i) out[i] = sample_mean(i);
    return out;
  }
};

// select() receives the 1-based round index and that round's contexts (empty
// in the stochastic setting). Given identical seeds and observations, select
// must be reproducible bit for bit.
template <class P>
concept BanditPolicy = requires(P& p, const P& cp, std::size_t t,
                                std::size_t arm, double y,
                                const ContextView& ctx) {
  { cp.arms() } -> std::convertible_to<std::size_t>;
  { p.select(t, ctx) } -> std::convertible_to<std::size_t>;
  p.observe(arm, y);
};

// Lowest index wins ties.
template <class Range>
std::size_t argmax_lowest(const Range& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < std::size(values); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace detail {

template <class P>
std::size_t checked_select(P& policy, std::size_t round,
                           const ContextView& ctx, std::size_t arms) {
  const std::size_t arm = policy.select(round, ctx);
  if (arm >= arms) {
    throw ProtocolViolation("policy selected arm " + std::to_string(arm + 1) +
                            " outside [1, " + std::to_string(arms) +
                            "] at round " + std::to_string(round));
  }
  return arm;
}

}  // namespace detail

// Algorithm Interact: rewards come from a pre-drawn tableau.
template <BanditPolicy P>
RunRecord interact_tableau(const BanditTableau& tab, P& policy) {
  detail::require(policy.arms() == tab.arms(),
                  "policy arm count does not match the tableau");
  RunRecord record(tab.arms());
  record.choices.reserve(tab.horizon());
  record.observed_rewards.reserve(tab.horizon());
  for (std::size_t t = 0; t < tab.horizon(); ++t) {
    const ContextView ctx = tab.contexts(t);
    const std::size_t arm = detail::checked_select(policy, t + 1, ctx, tab.arms());
    const double y = tab.reward(t, arm);
    policy.observe(arm, y);
    record.record(arm, y);
  }
  return record;
}

// Algorithm Bandit: rewards are drawn only for the pulled arm, from the same
// stream element generate_tableau would have used for that entry.
template <BanditPolicy P>
RunRecord interact_online(const RewardModel& model, std::size_t horizon,
                          P& policy, std::uint64_t seed) {
  detail::require(horizon >= 1, "T must be >= 1");
  detail::require(policy.arms() == model.arms(),
                  "policy arm count does not match the reward model");
  const RewardOracle oracle(model, seed);
  const std::size_t k = model.arms();
  const std::size_t d = model.dim();
  std::vector<double> row(k * d);
  RunRecord record(k);
  record.choices.reserve(horizon);
  record.observed_rewards.reserve(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    ContextView ctx;
    if (model.contextual()) {
      oracle.contexts(t, row);
      ctx = ContextView(row.data(), d, k);
    }
    const std::size_t arm = detail::checked_select(policy, t + 1, ctx, k);
    const double y = oracle.reward(t, arm, ctx);
    policy.observe(arm, y);
    record.record(arm, y);
  }
  return record;
}

// Cumulative pseudo-regret after each round, stochastic case.
inline std::vector<double> regret_curve_stochastic(const RunRecord& record,
                                                   const RewardModel& model) {
  detail::require(!model.contextual(),
                  "stochastic regret needs a stochastic reward model");
  const double best =
      *std::max_element(model.arm_means.begin(), model.arm_means.end());
  std::vector<double> curve(record.horizon());
  double total = 0.0;
  for (std::size_t t = 0; t < record.horizon(); ++t) {
    total += best - model.mean(record.choices[t]);
    curve[t] = total;
  }
  return curve;
}

// T * max_i mu_i - sum_t mu_{i_t}.
inline double pseudo_regret_stochastic(const RunRecord& record,
                                       const RewardModel& model) {
  const auto curve = regret_curve_stochastic(record, model);
  return curve.empty() ? 0.0 : std::max(0.0, curve.back());
}

// Cumulative pseudo-regret against the best arm of each round.
inline std::vector<double> regret_curve_contextual(
    const RunRecord& record, const RewardModel& model,
    const std::function<ContextView(std::size_t)>& contexts_of_round) {
  detail::require(model.contextual(),
                  "contextual regret needs a linear reward model");
  std::vector<double> curve(record.horizon());
  double total = 0.0;
  for (std::size_t t = 0; t < record.horizon(); ++t) {
    const ContextView ctx = contexts_of_round(t);
    detail::require(!ctx.empty(), "contextual regret needs contexts");
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < model.arms(); ++i) {
      best = std::max(best, model.mean(i, ctx.arm(i)));
    }
    const std::size_t chosen = record.choices[t];
    total += best - model.mean(chosen, ctx.arm(chosen));
    curve[t] = total;
  }
  return curve;
}

inline double pseudo_regret_contextual(const RunRecord& record,
                                       const BanditTableau& tab,
                                       const RewardModel& model) {
  detail::require(tab.has_contexts(), "tableau carries no contexts");
  const auto curve = regret_curve_contextual(
      record, model, [&tab](std::size_t t) { return tab.contexts(t); });
  return curve.empty() ? 0.0 : curve.back();
}

// Regret curve of an online run, regenerating its contexts from the seed.
inline std::vector<double> regret_curve_contextual(const RunRecord& record,
                                                   const RewardModel& model,
                                                   std::uint64_t seed) {
  const RewardOracle oracle(model, seed);
  std::vector<double> row(model.arms() * model.dim());
  return regret_curve_contextual(record, model, [&](std::size_t t) {
    oracle.contexts(t, row);
    return ContextView(row.data(), model.dim(), model.arms());
  });
}

}  // namespace dpbandit
