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

// Linear contextual bandits: per-arm ridge state, the OFUL baseline, the
// reward-private LinPriv variant, and a Monte Carlo estimator of prediction
// bias on gathered contexts.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/QR>

#include "dpbandit/core.hpp"
#include "dpbandit/privacy.hpp"
#include "dpbandit/random.hpp"
#include "dpbandit/stats.hpp"
#include "dpbandit/stochastic.hpp"

namespace dpbandit {

// Per-arm accumulators: V = X'X + lambda I, X'Y, and (when private) a vector
// counter releasing X'Y + eta. Items x*y have ||x y||_1 <= sqrt(d) because
// ||x||_2 <= 1 and y in [0, 1].
class ArmRegressionState {
 public:
  ArmRegressionState(std::size_t dim, double lambda,
                     std::optional<double> epsilon = std::nullopt,
                     std::uint64_t seed = 0)
      : dim_(dim),
        lambda_(lambda),
        gram_(Matrix::Identity(static_cast<Eigen::Index>(dim),
                               static_cast<Eigen::Index>(dim)) *
              lambda),
        xty_(Vector::Zero(static_cast<Eigen::Index>(dim))) {
    detail::require(dim >= 1, "dimension must be >= 1");
    detail::require(lambda > 0.0 && std::isfinite(lambda),
                    "lambda must be positive");
    if (epsilon) {
      private_xty_.emplace(dim, *epsilon,
                           std::sqrt(static_cast<double>(dim)), seed);
    }
    refactor();
  }

  std::size_t dim() const noexcept { return dim_; }
  double lambda() const noexcept { return lambda_; }
  std::size_t count() const noexcept { return count_; }
  bool is_private() const noexcept { return private_xty_.has_value(); }
  const Matrix& gram() const noexcept { return gram_; }
  const Vector& xty() const noexcept { return xty_; }
  const VectorTreeCounter* private_xty() const {
    return private_xty_ ? &*private_xty_ : nullptr;
  }

  void update(const Eigen::Ref<const Vector>& x, double y) {
    detail::require(static_cast<std::size_t>(x.size()) == dim_,
                    "context dimension mismatch");
    gram_.noalias() += x * x.transpose();
    xty_ += y * x;
    if (private_xty_) {
      detail::require(y >= 0.0 && y <= 1.0,
                      "private regression needs rewards in [0, 1]");
      private_xty_->add(y * x);
    }
    ++count_;
    refactor();
  }

  // V^{-1} rhs through the cached Cholesky factor.
  Vector solve(const Eigen::Ref<const Vector>& rhs) const {
    return llt_.solve(rhs);
  }

  // sqrt(x' V^{-1} x).
  double inverse_norm(const Eigen::Ref<const Vector>& x) const {
    return std::sqrt(std::max(0.0, x.dot(solve(x))));
  }

  // The released X'Y + eta (X'Y when nothing was added or not private).
  Vector released_xty() const {
    if (!private_xty_ || count_ == 0) return xty_;
    return private_xty_->release();
  }

 private:
  void refactor() {
    llt_.compute(gram_);
    if (llt_.info() != Eigen::Success) {
      throw InvariantFailure("Gram matrix lost positive definiteness");
    }
  }

  std::size_t dim_;
  double lambda_;
  Matrix gram_;
  Vector xty_;
  std::size_t count_ = 0;
  std::optional<VectorTreeCounter> private_xty_;
  Eigen::LLT<Matrix> llt_;
};

// theta = V^{-1} X'Y.
inline Vector ridge_estimate(const ArmRegressionState& state) {
  return state.solve(state.xty());
}

// theta_priv = V^{-1}(X'Y + eta) with the counter's released noise.
inline Vector private_estimate(const ArmRegressionState& state) {
  return state.solve(state.released_xty());
}

// V^{-1}(X'Y + eta) for an explicitly supplied noise vector.
inline Vector perturbed_estimate(const ArmRegressionState& state,
                                 const Eigen::Ref<const Vector>& eta) {
  detail::require(static_cast<std::size_t>(eta.size()) == state.dim(),
                  "noise dimension mismatch");
  return state.solve(state.xty() + eta);
}

// ||x||_{V^{-1}} (sqrt(2 d ln((1 + t/lambda)/delta)) + sqrt(lambda)).
inline double confidence_width(const ArmRegressionState& state,
                               const Eigen::Ref<const Vector>& x,
                               std::size_t t, double delta) {
  detail::require(x.norm() <= 1.0 + 1e-12, "context must have norm <= 1");
  detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  const double d = static_cast<double>(state.dim());
  const double lambda = state.lambda();
  const double radius =
      std::sqrt(2.0 * d *
                std::log((1.0 + static_cast<double>(t) / lambda) / delta)) +
      std::sqrt(lambda);
  return state.inverse_norm(x) * radius;
}

struct LinUcbConfig {
  std::size_t arms = 1;
  std::size_t dim = 1;
  std::size_t horizon = 1;
  double lambda = 1.0;
  double delta = 0.05;
  std::optional<double> epsilon;  // absent: non-private OFUL

  void validate() const {
    using detail::require;
    require(arms >= 1 && dim >= 1 && horizon >= 1, "K, d, T must be >= 1");
    require(lambda >= 1.0, "lambda must be >= 1");
    require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    if (epsilon) require(*epsilon > 0.0, "epsilon must be positive");
  }
};

// <theta_priv, x> + s / sqrt(lambda) + w, where s is the vector counter's
// noise radius at failure probability delta/K. The noise enters the
// prediction through ||eta||_{V^{-1}} <= ||eta||_2 / sqrt(lambda), hence the
// square root (identical to the 1/lambda scaling at lambda = 1).
inline double linpriv_index(const ArmRegressionState& state,
                            const Eigen::Ref<const Vector>& x, std::size_t t,
                            double delta, double noise_radius) {
  return private_estimate(state).dot(x) +
         noise_radius / std::sqrt(state.lambda()) +
         confidence_width(state, x, t, delta);
}

inline double oful_index(const ArmRegressionState& state,
                         const Eigen::Ref<const Vector>& x, std::size_t t,
                         double delta) {
  return ridge_estimate(state).dot(x) + confidence_width(state, x, t, delta);
}

// OFUL when cfg.epsilon is absent, LinPriv otherwise. Each arm's counter gets
// the full epsilon: reward-neighboring tableaux differ in one row, which
// changes at most one item of one arm's stream, and the arms' streams are
// disjoint (parallel composition).
class LinUcbPolicy {
 public:
  LinUcbPolicy(const LinUcbConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), index_(cfg.arms), chosen_(Vector::Zero(1)) {
    cfg_.validate();
    arms_.reserve(cfg_.arms);
    for (std::size_t i = 0; i < cfg_.arms; ++i) {
      arms_.emplace_back(cfg_.dim, cfg_.lambda, cfg_.epsilon,
                         derive_seed(seed, i));
    }
    if (cfg_.epsilon) {
      const double d = static_cast<double>(cfg_.dim);
      radius_.emplace(*cfg_.epsilon / std::sqrt(d),
                      cfg_.delta / (static_cast<double>(cfg_.arms) * d));
      accountant_.charge("per-arm X'Y counters (parallel composition)",
                         *cfg_.epsilon);
    }
  }

  std::size_t arms() const noexcept { return cfg_.arms; }
  bool is_private() const noexcept { return cfg_.epsilon.has_value(); }
  const LinUcbConfig& config() const noexcept { return cfg_; }
  const ArmRegressionState& state(std::size_t arm) const { return arms_[arm]; }
  const BudgetAccountant& accountant() const noexcept { return accountant_; }

  // s_it for an arm pulled n >= 1 times (0 when not private).
  double noise_radius(std::size_t n) {
    if (!radius_) return 0.0;
    return std::sqrt(static_cast<double>(cfg_.dim)) * (*radius_)(n);
  }

  double index(std::size_t arm, const Eigen::Ref<const Vector>& x,
               std::size_t t) {
    const auto& state = arms_[arm];
    if (state.count() == 0) return kForcePull;
    if (!is_private()) return oful_index(state, x, t, cfg_.delta);
    return linpriv_index(state, x, t, cfg_.delta, noise_radius(state.count()));
  }

  std::size_t select(std::size_t t, const ContextView& contexts) {
    detail::require(!contexts.empty(), "linear policies need contexts");
    detail::require(contexts.dim() == cfg_.dim,
                    "context dimension does not match the policy");
    detail::require(contexts.arms() == cfg_.arms,
                    "context arm count does not match the policy");
    for (std::size_t i = 0; i < cfg_.arms; ++i) {
      index_[i] = index(i, contexts.arm(i), t);
    }
    const std::size_t arm = argmax_lowest(index_);
    chosen_ = contexts.arm(arm);
    return arm;
  }

  void observe(std::size_t arm, double reward) {
    arms_[arm].update(chosen_, reward);
  }

 private:
  LinUcbConfig cfg_;
  std::vector<ArmRegressionState> arms_;
  std::optional<NoiseRadius> radius_;
  BudgetAccountant accountant_;
  std::vector<double> index_;
  Vector chosen_;
};

enum class GatherPolicy { kRoundRobin, kOful, kLinPriv };

struct ContextBias {
  std::size_t context = 0;  // index into the fixed context list
  double bias = 0.0;        // mean of (theta_hat - theta) . x
  double se = 0.0;
  std::size_t n = 0;        // replications in which the context was gathered
};

struct PredictionBiasReport {
  std::size_t arm = 0;
  std::size_t reps = 0;
  std::size_t reps_without_pulls = 0;
  std::size_t reps_rank_deficient = 0;
  std::vector<ContextBias> ridge;
  std::vector<ContextBias> ols;

  // Largest |bias| among contexts seen in at least two replications.
  static std::optional<ContextBias> max_abs(const std::vector<ContextBias>& v) {
    std::optional<ContextBias> best;
    for (const auto& c : v) {
      if (c.n < 2) continue;
      if (!best || std::abs(c.bias) > std::abs(best->bias)) best = c;
    }
    return best;
  }
};

// Monte Carlo estimate of E[(theta_hat_i - theta_i) . x] for every context of
// a fixed list that arm i gathered, conditioning on the context having been
// gathered. Replication r runs online with seed derive_seed(seed, r). Both a
// ridge estimator (the gathering lambda) and, when the arm's design has full
// column rank, ordinary least squares are reported.
inline PredictionBiasReport prediction_bias(const RewardModel& model,
                                            const LinUcbConfig& cfg,
                                            GatherPolicy kind, std::size_t arm,
                                            std::size_t reps,
                                            std::uint64_t seed) {
  using detail::require;
  model.validate();
  cfg.validate();
  require(model.contextual(), "prediction bias needs a linear model");
  require(model.contexts.kind == ContextGenerator::Kind::kFixedList,
          "prediction bias needs a fixed context list");
  require(model.arms() == cfg.arms && model.dim() == cfg.dim,
          "config does not match the model");
  require(arm < cfg.arms, "arm out of range");
  require(kind != GatherPolicy::kLinPriv || cfg.epsilon.has_value(),
          "LinPriv gathering needs epsilon");

  const auto& list = model.contexts.fixed;
  const std::size_t d = cfg.dim;
  const Vector& theta = model.thetas[arm];
  std::vector<RunningStats> ridge_acc(list.size());
  std::vector<RunningStats> ols_acc(list.size());

  PredictionBiasReport report;
  report.arm = arm;
  report.reps = reps;

  LinUcbConfig gather_cfg = cfg;
  if (kind == GatherPolicy::kOful) gather_cfg.epsilon.reset();

  for (std::size_t r = 0; r < reps; ++r) {
    const std::uint64_t rep_seed = derive_seed(seed, r);
    RunRecord record;
    if (kind == GatherPolicy::kRoundRobin) {
      RoundRobinPolicy policy(cfg.arms);
      record = interact_online(model, cfg.horizon, policy, rep_seed);
    } else {
      LinUcbPolicy policy(gather_cfg, derive_seed(rep_seed, stream_tag::kPolicy));
      record = interact_online(model, cfg.horizon, policy, rep_seed);
    }
    const std::size_t n = record.arm_counts[arm];
    if (n == 0) {
      ++report.reps_without_pulls;
      continue;
    }
    Matrix X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    Vector y(static_cast<Eigen::Index>(n));
    std::vector<bool> gathered(list.size(), false);
    Eigen::Index row = 0;
    for (std::size_t t = 0; t < record.horizon(); ++t) {
      if (record.choices[t] != arm) continue;
      const std::size_t c = (t * cfg.arms + arm) % list.size();
      X.row(row) = list[c].transpose();
      y[row] = record.observed_rewards[t];
      gathered[c] = true;
      ++row;
    }
    const Matrix gram =
        X.transpose() * X +
        cfg.lambda * Matrix::Identity(static_cast<Eigen::Index>(d),
                                      static_cast<Eigen::Index>(d));
    const Vector ridge = gram.llt().solve(X.transpose() * y);
    std::optional<Vector> ols;
    const Eigen::ColPivHouseholderQR<Matrix> qr(X);
    if (static_cast<std::size_t>(qr.rank()) == d) {
      ols = qr.solve(y);
    } else {
      ++report.reps_rank_deficient;
    }
    for (std::size_t c = 0; c < list.size(); ++c) {
      if (!gathered[c]) continue;
      ridge_acc[c].add((ridge - theta).dot(list[c]));
      if (ols) ols_acc[c].add((*ols - theta).dot(list[c]));
    }
  }

  for (std::size_t c = 0; c < list.size(); ++c) {
    if (ridge_acc[c].n > 0) {
      report.ridge.push_back(
          {c, ridge_acc[c].mean, ridge_acc[c].se(), ridge_acc[c].n});
    }
    if (ols_acc[c].n > 0) {
      report.ols.push_back({c, ols_acc[c].mean, ols_acc[c].se(), ols_acc[c].n});
    }
  }
  return report;
}

}  // namespace dpbandit
