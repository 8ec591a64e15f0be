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

// Laplace sampling, epsilon-DP continual release of prefix sums, the
// matching high-probability error radius, and budget bookkeeping.
//
// The counters use dyadic epochs: epoch e holds items 2^e .. 2^{e+1}-1
// (1-based) under its own complete binary tree with e+1 levels. Every node of
// epoch e is noised with Laplace((e+1)/epsilon), so an item, which touches one
// node per level of exactly one epoch, costs epsilon in total. A prefix query
// at t sums the roots of the completed epochs and the dyadic decomposition of
// the current epoch's prefix, at most 2*ceil(log2 t)+1 noisy nodes.
//
// Node noise is derived from (seed, epoch, level, index) through a counter
// stream, so it is fixed the first time it is needed and every later query
// sees the same value.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dpbandit/error.hpp"
#include "dpbandit/linalg.hpp"
#include "dpbandit/random.hpp"

namespace dpbandit {

// Inverse CDF of the zero-mean Laplace distribution with scale b.
inline double laplace_inv_cdf(double u, double b) {
  detail::require(u > 0.0 && u < 1.0, "laplace_inv_cdf: u must lie in (0, 1)");
  detail::require(b > 0.0, "laplace_inv_cdf: scale must be positive");
  const double centered = u - 0.5;
  if (centered == 0.0) return 0.0;
  const double magnitude = -b * std::log1p(-2.0 * std::abs(centered));
  return centered < 0.0 ? -magnitude : magnitude;
}

struct LaplaceSpec {
  double scale;

  explicit LaplaceSpec(double b) : scale(b) {
    detail::require(b > 0.0, "Laplace scale must be positive");
  }

  double sample(double u) const { return laplace_inv_cdf(u, scale); }
};

// 1-based inclusive interval of a node at the given tree level (leaves = 0).
struct DyadicInterval {
  std::size_t begin;
  std::size_t end;
  unsigned level;

  friend bool operator==(const DyadicInterval&, const DyadicInterval&) = default;
};

// Decomposition of the prefix [1..m] of a complete binary tree over `slots`
// leaves, largest nodes first.
inline std::vector<DyadicInterval> dyadic_prefix(std::size_t m,
                                                 std::size_t slots) {
  detail::require(std::has_single_bit(slots), "slots must be a power of two");
  detail::require(m <= slots, "prefix longer than the tree");
  std::vector<DyadicInterval> nodes;
  std::size_t pos = 0;
  for (int level = std::bit_width(slots) - 1; level >= 0; --level) {
    const std::size_t width = std::size_t{1} << level;
    if (m & width) {
      nodes.push_back({pos + 1, pos + width, static_cast<unsigned>(level)});
      pos += width;
    }
  }
  return nodes;
}

// A node of the epoch ledger; begin/end are global 1-based item positions.
struct CounterNode {
  unsigned epoch;
  unsigned level;
  std::uint64_t index;  // position of the node within its level
  std::size_t begin;
  std::size_t end;

  // Noise scale of this node in units of 1/epsilon.
  double scale_units() const noexcept { return epoch + 1.0; }

  friend bool operator==(const CounterNode&, const CounterNode&) = default;
};

namespace detail {

// Number of epochs completed after t items: largest c with 2^c - 1 <= t.
inline unsigned completed_epochs(std::size_t t) noexcept {
  return static_cast<unsigned>(std::bit_width(t + 1) - 1);
}

inline std::uint64_t node_lane(unsigned epoch, unsigned level) noexcept {
  return std::uint64_t{epoch} * 64 + level;
}

}  // namespace detail

// Noisy nodes whose sum answers a prefix query after t items.
inline std::vector<CounterNode> counter_nodes(std::size_t t) {
  std::vector<CounterNode> nodes;
  const unsigned c = detail::completed_epochs(t);
  for (unsigned e = 0; e < c; ++e) {
    const std::size_t start = std::size_t{1} << e;
    nodes.push_back({e, e, 0, start, 2 * start - 1});
  }
  const std::size_t offset = (std::size_t{1} << c) - 1;
  const std::size_t m = t - offset;
  for (const auto& iv : dyadic_prefix(m, std::size_t{1} << c)) {
    nodes.push_back({c, iv.level, (iv.begin - 1) >> iv.level,
                     offset + iv.begin, offset + iv.end});
  }
  return nodes;
}

namespace detail {

// Sum of |eta_j| radius, scales in units of 1/epsilon. The union bound over n
// nodes: P(exists j: |eta_j| > b_j ln(n/delta)) <= n * delta/n.
inline double union_radius(const std::vector<double>& scales, double delta) {
  double total = 0.0;
  for (double b : scales) total += b;
  return std::log(static_cast<double>(scales.size()) / delta) * total;
}

// Two-sided Chernoff radius for a sum of independent Laplace(b_j):
// E exp(l X) = 1/(1 - l^2 b^2), so P(|S| > r) <= 2 exp(-l r) prod 1/(1-l^2 b_j^2)
// for 0 < l < 1/max b. The radius below is the infimum over l of the r that
// makes the right side equal delta; the objective is unimodal in l.
inline double chernoff_radius(const std::vector<double>& scales,
                              double delta) {
  const double bmax = *std::max_element(scales.begin(), scales.end());
  const double log_term = std::log(2.0 / delta);
  auto radius_at = [&](double s) {
    double acc = log_term;
    for (double b : scales) {
      const double q = s * b / bmax;
      acc -= std::log1p(-q * q);
    }
    return acc * bmax / s;
  };
  constexpr double kInvPhi = 0.6180339887498949;
  double lo = 1e-9;
  double hi = 1.0 - 1e-12;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = radius_at(x1);
  double f2 = radius_at(x2);
  for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = radius_at(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = radius_at(x2);
    }
  }
  return std::min(f1, f2);
}

// Node scales (units of 1/epsilon) for a query after t items; depends on t
// only through (completed epochs, popcount of the partial prefix).
inline std::vector<double> node_scale_units(unsigned completed,
                                            unsigned partial_nodes) {
  std::vector<double> scales;
  for (unsigned e = 0; e < completed; ++e) scales.push_back(e + 1.0);
  for (unsigned j = 0; j < partial_nodes; ++j) scales.push_back(completed + 1.0);
  return scales;
}

inline std::pair<unsigned, unsigned> query_shape(std::size_t t) noexcept {
  const unsigned c = completed_epochs(t);
  const std::size_t m = t - ((std::size_t{1} << c) - 1);
  return {c, static_cast<unsigned>(std::popcount(m))};
}

inline double unit_noise_radius(std::size_t t, double delta_fail) {
  const auto [c, pc] = query_shape(t);
  const auto scales = node_scale_units(c, pc);
  return std::min(union_radius(scales, delta_fail),
                  chernoff_radius(scales, delta_fail));
}

inline void check_bound_args(std::size_t t, double epsilon, double delta_fail) {
  require(t >= 1, "noise_bound: t must be >= 1");
  require(epsilon > 0.0, "noise_bound: epsilon must be positive");
  require(delta_fail > 0.0 && delta_fail < 1.0,
          "noise_bound: delta_fail must lie in (0, 1)");
}

}  // namespace detail

// Radius r such that, with probability >= 1 - delta_fail, the released sum
// after t items is within r of the true sum. It is the smaller of two valid
// radii over the query's actual noisy nodes: the union bound over per-node
// Laplace tails, ln(n/delta) * sum_j b_j, and the Chernoff radius of the sum.
// The Chernoff radius grows like log^{1.5}(t) log(1/delta) / epsilon; the
// union bound is exact for a single node (t = 1: ln(1/delta)/epsilon).
// epsilon = +inf (noise disabled) gives 0.
inline double noise_bound(std::size_t t, double epsilon, double delta_fail) {
  detail::check_bound_args(t, epsilon, delta_fail);
  if (std::isinf(epsilon)) return 0.0;
  return detail::unit_noise_radius(t, delta_fail) / epsilon;
}

// Radius on the Euclidean norm of a d-dimensional counter's noise when items
// satisfy ||v||_1 <= l1_sensitivity: per-coordinate radius at delta/d,
// times sqrt(d).
inline double vector_noise_bound(std::size_t t, double epsilon,
                                 double delta_fail, double l1_sensitivity,
                                 std::size_t dim) {
  detail::require(l1_sensitivity > 0.0, "l1 sensitivity must be positive");
  detail::require(dim >= 1, "dimension must be >= 1");
  return std::sqrt(static_cast<double>(dim)) *
         noise_bound(t, epsilon / l1_sensitivity,
                     delta_fail / static_cast<double>(dim));
}

// noise_bound for fixed (epsilon, delta), memoized by query shape. The radius
// takes only O(log^2 T) distinct values over t <= T.
class NoiseRadius {
 public:
  NoiseRadius(double epsilon, double delta_fail)
      : epsilon_(epsilon), delta_(delta_fail) {
    detail::check_bound_args(1, epsilon, delta_fail);
  }

  double operator()(std::size_t t) {
    detail::require(t >= 1, "noise_bound: t must be >= 1");
    if (std::isinf(epsilon_)) return 0.0;
    const auto shape = detail::query_shape(t);
    auto it = cache_.find(shape);
    if (it == cache_.end()) {
      it = cache_.emplace(shape, detail::unit_noise_radius(t, delta_) / epsilon_)
               .first;
    }
    return it->second;
  }

 private:
  double epsilon_;
  double delta_;
  std::map<std::pair<unsigned, unsigned>, double> cache_;
};

// One entry of the audit ledger: a node and the noise it carries.
struct NoiseLedgerEntry {
  CounterNode node;
  std::vector<double> noise;  // one value per coordinate
};

// Continual-release counter over items in [0, 1] (scalar) or d-vectors with
// ||v||_1 <= l1_sensitivity. epsilon = +inf disables noise.
class VectorTreeCounter {
 public:
  VectorTreeCounter(std::size_t dim, double epsilon, double l1_sensitivity,
                    std::uint64_t seed)
      : dim_(dim),
        epsilon_(epsilon),
        sensitivity_(l1_sensitivity),
        stream_(seed),
        sum_(Vector::Zero(static_cast<Eigen::Index>(dim))),
        closed_noise_(Vector::Zero(static_cast<Eigen::Index>(dim))) {
    detail::require(dim >= 1, "counter dimension must be >= 1");
    detail::require(epsilon > 0.0, "counter epsilon must be positive");
    detail::require(l1_sensitivity > 0.0 && std::isfinite(l1_sensitivity),
                    "l1 sensitivity must be positive and finite");
  }

  std::size_t dim() const noexcept { return dim_; }
  double epsilon() const noexcept { return epsilon_; }
  double l1_sensitivity() const noexcept { return sensitivity_; }
  std::size_t size() const noexcept { return count_; }
  bool noiseless() const noexcept { return std::isinf(epsilon_); }

  void add(const Eigen::Ref<const Vector>& item) {
    detail::require(static_cast<std::size_t>(item.size()) == dim_,
                    "counter item dimension mismatch");
    detail::require(item.allFinite(), "counter item must be finite");
    detail::require(item.lpNorm<1>() <= sensitivity_ * (1.0 + 1e-12),
                    "counter item exceeds the declared l1 sensitivity");
    sum_ += item;
    ++count_;
    // An epoch just closed: fold its root into the running closed total.
    if (std::has_single_bit(count_ + 1)) {
      const unsigned e = detail::completed_epochs(count_) - 1;
      closed_noise_ += node_noise(e, e, 0);
    }
    release_valid_ = false;
  }

  // Noisy prefix sum over everything added so far.
  const Vector& release() const {
    detail::require(count_ >= 1, "release needs at least one item");
    if (!release_valid_) {
      release_ = sum_ + closed_noise_;
      const unsigned c = detail::completed_epochs(count_);
      const std::size_t m = count_ - ((std::size_t{1} << c) - 1);
      std::size_t pos = 0;
      for (int level = static_cast<int>(c); level >= 0; --level) {
        const std::size_t width = std::size_t{1} << level;
        if (m & width) {
          release_ += node_noise(c, static_cast<unsigned>(level), pos >> level);
          pos += width;
        }
      }
      release_valid_ = true;
    }
    return release_;
  }

  // Exact running sum; for tests and audits only, never for decisions.
  const Vector& exact_sum() const noexcept { return sum_; }

  std::size_t noise_terms() const { return counter_nodes(count_).size(); }

  // Nodes used by the current query together with their noise.
  std::vector<NoiseLedgerEntry> noise_ledger() const {
    std::vector<NoiseLedgerEntry> out;
    if (count_ == 0) return out;
    for (const auto& node : counter_nodes(count_)) {
      const Vector eta = node_noise(node.epoch, node.level, node.index);
      out.push_back({node, std::vector<double>(eta.begin(), eta.end())});
    }
    return out;
  }

  // Noise of a node; a pure function of the seed and the node position.
  Vector node_noise(unsigned epoch, unsigned level, std::uint64_t index) const {
    Vector eta = Vector::Zero(static_cast<Eigen::Index>(dim_));
    if (noiseless()) return eta;
    const double scale = sensitivity_ * (epoch + 1.0) / epsilon_;
    const std::uint64_t lane = detail::node_lane(epoch, level) << 16;
    for (std::size_t c = 0; c < dim_; ++c) {
      eta[static_cast<Eigen::Index>(c)] =
          laplace_inv_cdf(stream_.uniform(index, lane + c), scale);
    }
    return eta;
  }

 private:
  std::size_t dim_;
  double epsilon_;
  double sensitivity_;
  CounterStream stream_;
  std::size_t count_ = 0;
  Vector sum_;
  Vector closed_noise_;
  mutable Vector release_;
  mutable bool release_valid_ = false;
};

// Scalar counter for items in [0, 1].
class TreeCounter {
 public:
  TreeCounter(double epsilon, std::uint64_t seed)
      : inner_(1, epsilon, 1.0, seed) {}

  double epsilon() const noexcept { return inner_.epsilon(); }
  std::size_t size() const noexcept { return inner_.size(); }
  bool noiseless() const noexcept { return inner_.noiseless(); }

  void add(double y) {
    detail::require(y >= 0.0 && y <= 1.0,
                    "counter item must lie in [0, 1] (sensitivity 1)");
    Vector v(1);
    v[0] = y;
    inner_.add(v);
  }

  double release() const { return inner_.release()[0]; }
  double exact_sum() const noexcept { return inner_.exact_sum()[0]; }
  std::size_t noise_terms() const { return inner_.noise_terms(); }
  std::vector<NoiseLedgerEntry> noise_ledger() const {
    return inner_.noise_ledger();
  }
  double node_noise(unsigned epoch, unsigned level, std::uint64_t index) const {
    return inner_.node_noise(epoch, level, index)[0];
  }

 private:
  VectorTreeCounter inner_;
};

// Basic composition ledger.
class BudgetAccountant {
 public:
  struct Charge {
    std::string mechanism;
    double epsilon;
    double delta;
  };

  void charge(std::string mechanism, double epsilon, double delta = 0.0) {
    detail::require(epsilon >= 0.0 && delta >= 0.0,
                    "privacy charges must be non-negative");
    ledger_.push_back({std::move(mechanism), epsilon, delta});
  }

  double total_epsilon() const {
    double total = 0.0;
    for (const auto& c : ledger_) total += c.epsilon;
    return total;
  }

  double total_delta() const {
    double total = 0.0;
    for (const auto& c : ledger_) total += c.delta;
    return total;
  }

  const std::vector<Charge>& ledger() const noexcept { return ledger_; }

 private:
  std::vector<Charge> ledger_;
};

}  // namespace dpbandit
