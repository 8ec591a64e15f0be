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

// Experiment driver: strict key-value configuration, seeded replications
// run on a worker pool, aggregation through the stats module and atomic
// emission of CSV/JSON outputs.
//
// Replication r uses seed base_seed + r for everything it draws (rewards,
// contexts, parameters, policy noise), and results are aggregated in
// replication order after all workers join, so every emitted number is a
// pure function of the configuration and independent of the thread count.

#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "dpbandit/core.hpp"
#include "dpbandit/io.hpp"
#include "dpbandit/linear.hpp"
#include "dpbandit/privacy.hpp"
#include "dpbandit/random.hpp"
#include "dpbandit/stats.hpp"
#include "dpbandit/stochastic.hpp"

namespace dpbandit::harness {

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class ExperimentKind {
  kStochBias,
  kStochRegret,
  kLinearPvalue,
  kLinearBias,
  kSweep
};

enum class PolicyKind { kUcb, kPrivUcb, kOful, kLinPriv, kRoundRobin, kUniform };

inline std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kStochBias: return "stoch-bias";
    case ExperimentKind::kStochRegret: return "stoch-regret";
    case ExperimentKind::kLinearPvalue: return "linear-pvalue";
    case ExperimentKind::kLinearBias: return "linear-bias";
    case ExperimentKind::kSweep: return "sweep";
  }
  return "?";
}

inline std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kUcb: return "ucb";
    case PolicyKind::kPrivUcb: return "privucb";
    case PolicyKind::kOful: return "oful";
    case PolicyKind::kLinPriv: return "linpriv";
    case PolicyKind::kRoundRobin: return "roundrobin";
    case PolicyKind::kUniform: return "uniform";
  }
  return "?";
}

inline bool is_private(PolicyKind kind) {
  return kind == PolicyKind::kPrivUcb || kind == PolicyKind::kLinPriv;
}

inline bool is_stochastic_policy(PolicyKind kind) {
  return kind != PolicyKind::kOful && kind != PolicyKind::kLinPriv;
}

inline bool is_linear_policy(PolicyKind kind) {
  return kind != PolicyKind::kUcb && kind != PolicyKind::kPrivUcb;
}

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::kStochBias;
  std::size_t arms = 20;
  std::size_t horizon = 500;
  std::size_t dim = 5;
  double gap = 0.05;
  double top_mean = 1.0;
  RewardKind reward_law = RewardKind::kBernoulliArms;
  std::vector<PolicyKind> policies;  // empty: experiment default
  std::optional<double> epsilon;
  bool epsilon_inv_sqrt_t = false;  // epsilon = 1/sqrt(T)
  double lambda = 1.0;
  std::optional<double> delta;  // default 1/T
  double noise_sd = 1.0;
  bool clamp = false;
  std::optional<double> test_noise_sd;  // default noise_sd
  std::size_t reps = 100;
  std::uint64_t base_seed = 1;
  std::string output = "out";
  std::size_t threads = 1;
  std::vector<double> eps_grid;
  std::size_t regret_points = 100;
  double alpha = 0.05;
  double beta = 0.01;
  std::size_t context_pool = 7;

  bool linear() const {
    return experiment == ExperimentKind::kLinearPvalue ||
           experiment == ExperimentKind::kLinearBias;
  }

  double effective_delta() const {
    return delta.value_or(default_delta(horizon));
  }

  std::optional<double> effective_epsilon() const {
    if (epsilon_inv_sqrt_t) {
      return 1.0 / std::sqrt(static_cast<double>(horizon));
    }
    return epsilon;
  }

  double effective_test_noise_sd() const {
    return test_noise_sd.value_or(noise_sd);
  }

  std::vector<PolicyKind> effective_policies() const {
    if (!policies.empty()) return policies;
    switch (experiment) {
      case ExperimentKind::kStochBias:
      case ExperimentKind::kStochRegret:
        return {PolicyKind::kUcb, PolicyKind::kPrivUcb};
      case ExperimentKind::kLinearPvalue:
      case ExperimentKind::kLinearBias:
        return {PolicyKind::kOful};
      case ExperimentKind::kSweep:
        return {PolicyKind::kPrivUcb};
    }
    return {};
  }

  std::vector<double> arm_means() const {
    return spaced_means(arms, gap, top_mean);
  }

  void validate() const {
    auto require = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    require(arms >= 1, "arms must be >= 1");
    require(horizon >= 1, "horizon must be >= 1");
    require(reps >= 1, "reps must be >= 1");
    require(threads >= 1, "threads must be >= 1");
    require(regret_points >= 1, "regret_points must be >= 1");
    const double d = effective_delta();
    require(d > 0.0 && d < 1.0, "delta must lie in (0, 1)");
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
    require(beta >= 0.0 && beta < 1.0, "beta must lie in [0, 1)");
    if (const auto eps = effective_epsilon()) {
      require(*eps > 0.0, "epsilon must be positive");
    }
    if (!linear()) {
      require(gap >= 0.0, "gap must be >= 0");
      require(top_mean <= 1.0 &&
                  top_mean - gap * static_cast<double>(arms - 1) >= -1e-12,
              "arm means top_mean - i*gap must lie in [0, 1]");
      require(reward_law != RewardKind::kLinearGaussian,
              "reward_law must be bernoulli or uniform");
    } else {
      require(dim >= 2, "dim must be >= 2 for linear experiments");
      require(lambda >= 1.0, "lambda must be >= 1");
      require(noise_sd >= 0.0, "noise_sd must be >= 0");
      require(effective_test_noise_sd() > 0.0, "test_noise_sd must be positive");
      require(context_pool >= 1, "context_pool must be >= 1");
      // Round t shows arm i context (t K + i) mod pool; a shared factor would
      // confine each arm to a fraction of the pool.
      require(experiment != ExperimentKind::kLinearBias ||
                  std::gcd(context_pool, arms) == 1,
              "context_pool must be coprime to arms");
    }
    if (experiment == ExperimentKind::kSweep) {
      require(!eps_grid.empty(), "sweep needs eps_grid");
      for (double e : eps_grid) require(e > 0.0, "eps_grid values must be > 0");
    }
    for (const auto p : effective_policies()) {
      if (linear()) {
        require(is_linear_policy(p),
                "policy " + to_string(p) + " does not apply to " +
                    to_string(experiment));
      } else {
        require(is_stochastic_policy(p),
                "policy " + to_string(p) + " does not apply to " +
                    to_string(experiment));
      }
      if (is_private(p) && experiment != ExperimentKind::kSweep) {
        require(effective_epsilon().has_value(),
                "policy " + to_string(p) + " needs epsilon");
      }
      if (p == PolicyKind::kLinPriv) {
        require(clamp, "linpriv needs clamp = true (rewards in [0, 1])");
      }
    }
  }

  // Effective settings, one key per line in key order; the manifest echo and
  // the content hash are computed from this text.
  std::map<std::string, std::string> canonical() const {
    std::map<std::string, std::string> m;
    auto list = [](const auto& values, auto fmt) {
      std::string s;
      for (const auto& v : values) {
        if (!s.empty()) s += ',';
        s += fmt(v);
      }
      return s;
    };
    m["experiment"] = to_string(experiment);
    m["arms"] = std::to_string(arms);
    m["horizon"] = std::to_string(horizon);
    m["policies"] = list(effective_policies(),
                         [](PolicyKind p) { return to_string(p); });
    m["delta"] = format_number(effective_delta());
    if (epsilon_inv_sqrt_t) {
      m["epsilon"] = "inv-sqrt-T";
    } else if (epsilon) {
      m["epsilon"] = format_number(*epsilon);
    }
    m["reps"] = std::to_string(reps);
    m["base_seed"] = std::to_string(base_seed);
    m["regret_points"] = std::to_string(regret_points);
    if (linear()) {
      m["dim"] = std::to_string(dim);
      m["lambda"] = format_number(lambda);
      m["noise_sd"] = format_number(noise_sd);
      m["clamp"] = clamp ? "true" : "false";
      m["test_noise_sd"] = format_number(effective_test_noise_sd());
      m["alpha"] = format_number(alpha);
      m["beta"] = format_number(beta);
      m["context_pool"] = std::to_string(context_pool);
    } else {
      m["gap"] = format_number(gap);
      m["top_mean"] = format_number(top_mean);
      m["reward_law"] =
          reward_law == RewardKind::kUniformArms ? "uniform" : "bernoulli";
    }
    if (experiment == ExperimentKind::kSweep) {
      m["eps_grid"] = list(eps_grid, [](double e) { return format_number(e); });
    }
    return m;
  }

  std::string canonical_text() const {
    std::string text;
    for (const auto& [k, v] : canonical()) text += k + " = " + v + "\n";
    return text;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (true) {
    const auto comma = s.find(',');
    const auto item = trim(s.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

inline double parse_double(const std::string& key, std::string_view v) {
  double x = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': '" + std::string(v) +
                      "' is not a number");
  }
  return x;
}

inline std::uint64_t parse_uint(const std::string& key, std::string_view v) {
  std::uint64_t x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': '" + std::string(v) +
                      "' is not a non-negative integer");
  }
  return x;
}

inline bool parse_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false");
}

inline PolicyKind parse_policy(std::string_view v) {
  for (auto p : {PolicyKind::kUcb, PolicyKind::kPrivUcb, PolicyKind::kOful,
                 PolicyKind::kLinPriv, PolicyKind::kRoundRobin,
                 PolicyKind::kUniform}) {
    if (v == to_string(p)) return p;
  }
  throw ConfigError("unknown policy '" + std::string(v) + "'");
}

inline ExperimentKind parse_experiment(std::string_view v) {
  for (auto k : {ExperimentKind::kStochBias, ExperimentKind::kStochRegret,
                 ExperimentKind::kLinearPvalue, ExperimentKind::kLinearBias,
                 ExperimentKind::kSweep}) {
    if (v == to_string(k)) return k;
  }
  throw ConfigError("unknown experiment '" + std::string(v) + "'");
}

}  // namespace detail

// Applies one key = value setting. Unknown keys are errors.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key,
                          std::string_view raw) {
  using namespace detail;
  const std::string_view v = trim(raw);
  using Setter = std::function<void(std::string_view)>;
  const std::map<std::string, Setter> setters = {
      {"experiment", [&](auto s) { cfg.experiment = parse_experiment(s); }},
      {"arms", [&](auto s) { cfg.arms = parse_uint(key, s); }},
      {"horizon", [&](auto s) { cfg.horizon = parse_uint(key, s); }},
      {"dim", [&](auto s) { cfg.dim = parse_uint(key, s); }},
      {"gap", [&](auto s) { cfg.gap = parse_double(key, s); }},
      {"top_mean", [&](auto s) { cfg.top_mean = parse_double(key, s); }},
      {"reward_law",
       [&](auto s) {
         if (s == "bernoulli") {
           cfg.reward_law = RewardKind::kBernoulliArms;
         } else if (s == "uniform") {
           cfg.reward_law = RewardKind::kUniformArms;
         } else {
           throw ConfigError("reward_law must be bernoulli or uniform");
         }
       }},
      {"policies",
       [&](auto s) {
         cfg.policies.clear();
         for (const auto& p : split_list(s)) {
           cfg.policies.push_back(parse_policy(p));
         }
       }},
      {"epsilon",
       [&](auto s) {
         cfg.epsilon_inv_sqrt_t = (s == "inv-sqrt-T");
         if (cfg.epsilon_inv_sqrt_t) {
           cfg.epsilon.reset();
         } else {
           cfg.epsilon = parse_double(key, s);
         }
       }},
      {"lambda", [&](auto s) { cfg.lambda = parse_double(key, s); }},
      {"delta", [&](auto s) { cfg.delta = parse_double(key, s); }},
      {"noise_sd", [&](auto s) { cfg.noise_sd = parse_double(key, s); }},
      {"clamp", [&](auto s) { cfg.clamp = parse_bool(key, s); }},
      {"test_noise_sd",
       [&](auto s) { cfg.test_noise_sd = parse_double(key, s); }},
      {"reps", [&](auto s) { cfg.reps = parse_uint(key, s); }},
      {"base_seed", [&](auto s) { cfg.base_seed = parse_uint(key, s); }},
      {"output", [&](auto s) { cfg.output = std::string(s); }},
      {"threads", [&](auto s) { cfg.threads = parse_uint(key, s); }},
      {"eps_grid",
       [&](auto s) {
         cfg.eps_grid.clear();
         for (const auto& e : split_list(s)) {
           cfg.eps_grid.push_back(parse_double(key, e));
         }
       }},
      {"regret_points",
       [&](auto s) { cfg.regret_points = parse_uint(key, s); }},
      {"alpha", [&](auto s) { cfg.alpha = parse_double(key, s); }},
      {"beta", [&](auto s) { cfg.beta = parse_double(key, s); }},
      {"context_pool", [&](auto s) { cfg.context_pool = parse_uint(key, s); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown key '" + key + "'");
  if (v.empty()) throw ConfigError("key '" + key + "' has an empty value");
  it->second(v);
}

// "key=value" as given on a command line.
inline void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) +
                      "' is not key=value");
  }
  apply_setting(cfg, std::string(detail::trim(assignment.substr(0, eq))),
                assignment.substr(eq + 1));
}

// Lines of "key = value"; '#' starts a comment. Keys may appear once.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key +
                        "' already set on line " + std::to_string(it->second));
    }
    try {
      apply_setting(cfg, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// SHA-1 of "blob <size>\0<content>", as git hashes file contents.
inline std::string git_blob_hash(std::string_view content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob.append(content);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(),
                 nullptr) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

// Runs body(i) for i in [0, n) on up to `threads` workers. The first exception
// stops further work and is rethrown after the join.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next.store(n);
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

inline std::uint64_t replication_seed(const ExperimentConfig& cfg,
                                      std::size_t rep) {
  return cfg.base_seed + rep;
}

inline std::uint64_t policy_seed(std::uint64_t rep_seed) {
  return derive_seed(rep_seed, stream_tag::kPolicy);
}

// Round indices (1-based) at which regret curves are sampled.
inline std::vector<std::size_t> regret_grid(std::size_t horizon,
                                            std::size_t points) {
  std::vector<std::size_t> grid;
  points = std::min(points, horizon);
  for (std::size_t k = 1; k <= points; ++k) {
    const std::size_t t = (k * horizon + points - 1) / points;
    if (grid.empty() || grid.back() != t) grid.push_back(t);
  }
  return grid;
}

inline RewardModel stochastic_model(const ExperimentConfig& cfg) {
  return cfg.reward_law == RewardKind::kUniformArms
             ? RewardModel::uniform(cfg.arm_means())
             : RewardModel::bernoulli(cfg.arm_means());
}

// Calls f(policy) with a freshly constructed stochastic policy.
template <class F>
decltype(auto) with_stochastic_policy(PolicyKind kind, std::size_t arms,
                                      std::size_t horizon, double epsilon,
                                      double delta, std::uint64_t seed, F&& f) {
  switch (kind) {
    case PolicyKind::kUcb: {
      UcbPolicy p(arms, delta);
      return f(p);
    }
    case PolicyKind::kPrivUcb: {
      PrivUcbPolicy p(arms, horizon, epsilon, delta, seed);
      return f(p);
    }
    case PolicyKind::kRoundRobin: {
      RoundRobinPolicy p(arms);
      return f(p);
    }
    case PolicyKind::kUniform: {
      UniformRandomPolicy p(arms, seed);
      return f(p);
    }
    default:
      throw ConfigError(to_string(kind) + " is not a stochastic policy");
  }
}

// Calls f(policy) with a freshly constructed linear-setting policy.
template <class F>
decltype(auto) with_linear_policy(PolicyKind kind, const LinUcbConfig& lcfg,
                                  std::uint64_t seed, F&& f) {
  switch (kind) {
    case PolicyKind::kOful: {
      LinUcbConfig c = lcfg;
      c.epsilon.reset();
      LinUcbPolicy p(c, seed);
      return f(p);
    }
    case PolicyKind::kLinPriv: {
      dpbandit::detail::require(lcfg.epsilon.has_value(),
                                "linpriv needs epsilon");
      LinUcbPolicy p(lcfg, seed);
      return f(p);
    }
    case PolicyKind::kRoundRobin: {
      RoundRobinPolicy p(lcfg.arms);
      return f(p);
    }
    case PolicyKind::kUniform: {
      UniformRandomPolicy p(lcfg.arms, seed);
      return f(p);
    }
    default:
      throw ConfigError(to_string(kind) + " is not a linear-setting policy");
  }
}

struct StochasticReplication {
  std::vector<std::size_t> counts;
  std::vector<double> sums;
  std::vector<double> regret;  // cumulative regret at the grid rounds
};

struct StochasticResult {
  PolicyKind policy = PolicyKind::kUcb;
  double epsilon = kNaN;
  std::vector<std::size_t> grid;
  std::vector<StochasticReplication> reps;
  BiasReport bias;
  std::vector<double> regret_mean;
  std::vector<double> regret_se;
};

inline StochasticResult simulate_stochastic(const ExperimentConfig& cfg,
                                            PolicyKind policy,
                                            std::optional<double> epsilon) {
  const RewardModel model = stochastic_model(cfg);
  StochasticResult result;
  result.policy = policy;
  result.epsilon = epsilon.value_or(kNaN);
  result.grid = regret_grid(cfg.horizon, cfg.regret_points);
  result.reps.resize(cfg.reps);
  const double delta = cfg.effective_delta();
  const double eps = epsilon.value_or(std::numeric_limits<double>::infinity());

  parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
    const std::uint64_t seed = replication_seed(cfg, r);
    const RunRecord record = with_stochastic_policy(
        policy, cfg.arms, cfg.horizon, eps, delta, policy_seed(seed),
        [&](auto& p) { return interact_online(model, cfg.horizon, p, seed); });
    const auto curve = regret_curve_stochastic(record, model);
    StochasticReplication& out = result.reps[r];
    out.counts = record.arm_counts;
    out.sums = record.arm_sums;
    out.regret.reserve(result.grid.size());
    for (std::size_t t : result.grid) out.regret.push_back(curve[t - 1]);
  });

  BiasAccumulator bias(model.arm_means);
  std::vector<RunningStats> regret(result.grid.size());
  for (const auto& rep : result.reps) {
    bias.add(rep.counts, rep.sums);
    for (std::size_t g = 0; g < regret.size(); ++g) regret[g].add(rep.regret[g]);
  }
  result.bias = bias.report();
  for (const auto& s : regret) {
    result.regret_mean.push_back(s.mean);
    result.regret_se.push_back(s.se());
  }
  return result;
}

// K thetas with theta_{i,1} = 0 and the remaining d-1 coordinates uniform on
// the unit sphere.
inline std::vector<Vector> draw_null_thetas(std::size_t arms, std::size_t dim,
                                            std::uint64_t seed) {
  SequentialStream stream(derive_seed(seed, stream_tag::kParameters));
  std::vector<Vector> thetas;
  for (std::size_t i = 0; i < arms; ++i) {
    Vector theta = Vector::Zero(static_cast<Eigen::Index>(dim));
    do {
      for (std::size_t c = 1; c < dim; ++c) {
        theta[static_cast<Eigen::Index>(c)] = stream.normal();
      }
    } while (theta.norm() == 0.0);
    theta /= theta.norm();
    thetas.push_back(std::move(theta));
  }
  return thetas;
}

inline LinUcbConfig linear_config(const ExperimentConfig& cfg) {
  LinUcbConfig lcfg;
  lcfg.arms = cfg.arms;
  lcfg.dim = cfg.dim;
  lcfg.horizon = cfg.horizon;
  lcfg.lambda = cfg.lambda;
  lcfg.delta = cfg.effective_delta();
  lcfg.epsilon = cfg.effective_epsilon();
  return lcfg;
}

struct PvalueReplication {
  double p_value = kNaN;  // NaN when the coordinate was untestable
  double z = kNaN;
  std::size_t arm_star = 0;
  bool reject_corrected = false;
};

struct PvalueResult {
  PolicyKind policy = PolicyKind::kOful;
  std::vector<PvalueReplication> reps;
  std::vector<double> p_values;  // testable replications only
  std::size_t untestable = 0;
  double fraction_below_alpha = kNaN;
  double threshold = kNaN;  // corrected gamma(alpha), private gathering only
  double corrected_rejection_rate = kNaN;
  double ks_distance = kNaN;
};

// Per replication: draw thetas with a zero first coordinate, gather T rounds
// with the policy on fresh unit-sphere contexts, pick the most-pulled arm i*
// and z-test theta_{i*,1} = 0 on i*'s gathered data.
inline PvalueResult simulate_linear_pvalue(const ExperimentConfig& cfg,
                                           PolicyKind policy) {
  const LinUcbConfig lcfg = linear_config(cfg);
  PvalueResult result;
  result.policy = policy;
  result.reps.resize(cfg.reps);
  std::vector<char> testable(cfg.reps, 0);
  const bool corrected = is_private(policy);
  if (corrected) {
    result.threshold = pvalue_correction(
        cfg.alpha, cfg.beta,
        max_info_bound(*lcfg.epsilon, cfg.horizon, cfg.beta));
  }

  parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
    const std::uint64_t seed = replication_seed(cfg, r);
    const RewardModel model = RewardModel::linear_gaussian(
        draw_null_thetas(cfg.arms, cfg.dim, seed), cfg.noise_sd, cfg.clamp);
    const RunRecord record =
        with_linear_policy(policy, lcfg, policy_seed(seed), [&](auto& p) {
          return interact_online(model, cfg.horizon, p, seed);
        });
    const std::size_t star = argmax_lowest(record.arm_counts);
    const auto n = static_cast<Eigen::Index>(record.arm_counts[star]);
    const auto d = static_cast<Eigen::Index>(cfg.dim);
    Matrix X(n, d);
    Vector y(n);
    const RewardOracle oracle(model, seed);
    std::vector<double> row(cfg.arms * cfg.dim);
    Eigen::Index k = 0;
    for (std::size_t t = 0; t < record.horizon(); ++t) {
      if (record.choices[t] != star) continue;
      oracle.contexts(t, row);
      X.row(k) = ContextView(row.data(), cfg.dim, cfg.arms).arm(star).transpose();
      y[k] = record.observed_rewards[t];
      ++k;
    }
    PvalueReplication& out = result.reps[r];
    out.arm_star = star;
    try {
      TestResult test =
          z_test_coefficient(X, y, 0, 0.0, cfg.effective_test_noise_sd());
      if (corrected) {
        test = corrected_test(test, *lcfg.epsilon, cfg.horizon, cfg.beta,
                              cfg.alpha);
      }
      out.p_value = test.p_value;
      out.z = test.statistic;
      out.reject_corrected = test.reject_corrected;
      testable[r] = 1;
    } catch (const UntestableCoordinate&) {
    }
  });

  std::size_t corrected_rejections = 0;
  for (std::size_t r = 0; r < cfg.reps; ++r) {
    if (!testable[r]) {
      ++result.untestable;
      continue;
    }
    result.p_values.push_back(result.reps[r].p_value);
    if (result.reps[r].reject_corrected) ++corrected_rejections;
  }
  if (!result.p_values.empty()) {
    result.fraction_below_alpha = fraction_below(result.p_values, cfg.alpha);
    result.ks_distance = ks_uniform_distance(result.p_values);
    if (corrected) {
      result.corrected_rejection_rate =
          static_cast<double>(corrected_rejections) /
          static_cast<double>(result.p_values.size());
    }
  }
  return result;
}

struct NullTestResult {
  std::vector<double> p_values;
  double threshold = kNaN;
  double raw_rejection_rate = kNaN;
  double corrected_rejection_rate = kNaN;
};

// Stochastic analogue of the corrected-validity experiment: gather with
// PrivUCB, select the most-pulled arm i*, test "mean of i* = mu_{i*}" (a true
// null) with the standardized sum and the arm's known Bernoulli standard
// deviation, and reject at the max-information-corrected threshold.
inline NullTestResult simulate_adaptive_mean_test(const ExperimentConfig& cfg) {
  const RewardModel model = stochastic_model(cfg);
  const double eps = cfg.effective_epsilon().value();
  const double delta = cfg.effective_delta();
  NullTestResult result;
  result.threshold = pvalue_correction(
      cfg.alpha, cfg.beta, max_info_bound(eps, cfg.horizon, cfg.beta));
  result.p_values.resize(cfg.reps);
  parallel_for(cfg.reps, cfg.threads, [&](std::size_t r) {
    const std::uint64_t seed = replication_seed(cfg, r);
    PrivUcbPolicy policy(cfg.arms, cfg.horizon, eps, delta, policy_seed(seed));
    const RunRecord record = interact_online(model, cfg.horizon, policy, seed);
    const std::size_t star = argmax_lowest(record.arm_counts);
    const double mu = model.mean(star);
    const AdaptiveStatistic stat = adaptive_t_statistic(record, mu);
    const double sd = std::sqrt(mu * (1.0 - mu));
    result.p_values[r] = sd > 0.0 ? two_sided_p_value(stat.value / sd) : 1.0;
  });
  std::size_t raw = 0;
  std::size_t corrected = 0;
  for (double p : result.p_values) {
    raw += p <= cfg.alpha ? 1 : 0;
    corrected += p <= result.threshold ? 1 : 0;
  }
  const auto reps = static_cast<double>(cfg.reps);
  result.raw_rejection_rate = static_cast<double>(raw) / reps;
  result.corrected_rejection_rate = static_cast<double>(corrected) / reps;
  return result;
}

// Fixed model for the linear-bias experiment: thetas and a context pool drawn
// once from base_seed, every context in the positive orthant so that mean
// rewards theta . x stay inside [0, 1].
inline RewardModel linear_bias_model(const ExperimentConfig& cfg) {
  SequentialStream stream(derive_seed(cfg.base_seed, stream_tag::kParameters));
  auto positive_unit = [&](double radius) {
    Vector v(static_cast<Eigen::Index>(cfg.dim));
    for (auto& c : v) c = std::abs(stream.normal()) + 1e-3;
    return Vector(v / v.norm() * radius);
  };
  std::vector<Vector> thetas;
  for (std::size_t i = 0; i < cfg.arms; ++i) thetas.push_back(positive_unit(0.9));
  std::vector<Vector> pool;
  for (std::size_t c = 0; c < cfg.context_pool; ++c) {
    pool.push_back(positive_unit(1.0));
  }
  return RewardModel::linear_gaussian(std::move(thetas), cfg.noise_sd,
                                      cfg.clamp,
                                      ContextGenerator::fixed_list(std::move(pool)));
}

struct TraceResult {
  RunRecord record;
  nlohmann::json noise_ledger;  // per-arm counter ledgers (privucb only)
};

// A single replication, kept whole for inspection.
inline TraceResult trace_replication(const ExperimentConfig& cfg,
                                     PolicyKind policy, std::size_t rep) {
  const std::uint64_t seed = replication_seed(cfg, rep);
  TraceResult out;
  if (!cfg.linear()) {
    const RewardModel model = stochastic_model(cfg);
    const double eps = cfg.effective_epsilon().value_or(
        std::numeric_limits<double>::infinity());
    with_stochastic_policy(
        policy, cfg.arms, cfg.horizon, eps, cfg.effective_delta(),
        policy_seed(seed), [&](auto& p) {
          out.record = interact_online(model, cfg.horizon, p, seed);
          if constexpr (std::is_same_v<std::decay_t<decltype(p)>,
                                       PrivUcbPolicy>) {
            out.noise_ledger = nlohmann::json::array();
            for (std::size_t i = 0; i < p.arms(); ++i) {
              out.noise_ledger.push_back(
                  {{"arm", i + 1},
                   {"items", p.counter(i).size()},
                   {"nodes", noise_ledger_json(p.counter(i).noise_ledger())}});
            }
          }
          return 0;
        });
    return out;
  }
  const RewardModel model =
      cfg.experiment == ExperimentKind::kLinearBias
          ? linear_bias_model(cfg)
          : RewardModel::linear_gaussian(
                draw_null_thetas(cfg.arms, cfg.dim, seed), cfg.noise_sd,
                cfg.clamp);
  with_linear_policy(policy, linear_config(cfg), policy_seed(seed),
                     [&](auto& p) {
                       out.record = interact_online(model, cfg.horizon, p, seed);
                       return 0;
                     });
  return out;
}

struct ExperimentOutput {
  std::filesystem::path directory;
  nlohmann::json manifest;
  std::vector<std::string> files;
};

namespace detail {

// Files are written into a staging directory that replaces the destination
// only once everything succeeded; on failure the staging directory is removed.
class StagedOutput {
 public:
  explicit StagedOutput(std::filesystem::path dest)
      : dest_(std::move(dest)), stage_(dest_.string() + ".partial") {
    std::filesystem::remove_all(stage_);
    std::filesystem::create_directories(stage_);
  }

  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;

  ~StagedOutput() {
    if (!committed_) {
      std::error_code ec;
      std::filesystem::remove_all(stage_, ec);
    }
  }

  template <class Writer>
  void write(const std::string& relative, Writer&& writer) {
    const auto path = stage_ / relative;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    writer(out);
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + path.string());
    files_.push_back(relative);
  }

  void commit() {
    std::filesystem::remove_all(dest_);
    std::filesystem::rename(stage_, dest_);
    committed_ = true;
  }

  const std::vector<std::string>& files() const noexcept { return files_; }

 private:
  std::filesystem::path dest_;
  std::filesystem::path stage_;
  std::vector<std::string> files_;
  bool committed_ = false;
};

inline void write_regret_rows(std::ostream& out, const StochasticResult& r) {
  for (std::size_t g = 0; g < r.grid.size(); ++g) {
    out << r.grid[g] << ',' << format_number(r.regret_mean[g]) << ','
        << format_number(r.regret_se[g]) << ',' << to_string(r.policy) << '\n';
  }
}

inline void write_replications(std::ostream& out, const StochasticResult& r) {
  out << "rep,arm,count,sample_mean\n";
  for (std::size_t rep = 0; rep < r.reps.size(); ++rep) {
    const auto& x = r.reps[rep];
    for (std::size_t i = 0; i < x.counts.size(); ++i) {
      const double mean =
          x.counts[i] ? x.sums[i] / static_cast<double>(x.counts[i]) : kNaN;
      out << rep << ',' << i + 1 << ',' << x.counts[i] << ','
          << format_number(mean) << '\n';
    }
  }
}

inline nlohmann::json stochastic_summary(const StochasticResult& r) {
  const ArmBias* worst = r.bias.most_biased();
  return {{"policy", to_string(r.policy)},
          {"epsilon", json_number(r.epsilon)},
          {"mean_abs_bias", json_number(r.bias.mean_abs_bias)},
          {"most_biased_arm", worst ? nlohmann::json(worst->arm + 1) : nullptr},
          {"most_biased_value",
           worst ? nlohmann::json(*worst->bias) : nullptr},
          {"final_regret_mean", json_number(r.regret_mean.back())},
          {"final_regret_se", json_number(r.regret_se.back())}};
}

}  // namespace detail

// Runs the configured experiment and writes its outputs under cfg.output:
//   stoch-bias    <policy>/bias.csv, <policy>/replications.csv, regret.csv
//   stoch-regret  regret.csv, <policy>/replications.csv
//   linear-pvalue pvalues.csv (first policy), <policy>/pvalues.csv otherwise
//   linear-bias   linear_bias.csv
//   sweep         sweep.csv
// plus manifest.json. Only manifest.json carries run-dependent content (wall
// time); every CSV is a pure function of the configuration.
inline ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  detail::StagedOutput stage(cfg.output);
  nlohmann::json summary = nlohmann::json::object();
  const auto policies = cfg.effective_policies();

  switch (cfg.experiment) {
    case ExperimentKind::kStochBias:
    case ExperimentKind::kStochRegret: {
      const bool bias = cfg.experiment == ExperimentKind::kStochBias;
      std::vector<StochasticResult> results;
      for (const auto p : policies) {
        results.push_back(simulate_stochastic(
            cfg, p, is_private(p) ? cfg.effective_epsilon() : std::nullopt));
      }
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& r : results) {
        const std::string dir = to_string(r.policy) + "/";
        if (bias) {
          stage.write(dir + "bias.csv",
                      [&](std::ostream& o) { write_bias_csv(o, r.bias); });
        }
        stage.write(dir + "replications.csv", [&](std::ostream& o) {
          detail::write_replications(o, r);
        });
        rows.push_back(detail::stochastic_summary(r));
      }
      stage.write("regret.csv", [&](std::ostream& o) {
        o << "t,regret_mean,regret_se,policy\n";
        for (const auto& r : results) detail::write_regret_rows(o, r);
      });
      summary["policies"] = rows;
      break;
    }
    case ExperimentKind::kLinearPvalue: {
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t k = 0; k < policies.size(); ++k) {
        const PvalueResult r = simulate_linear_pvalue(cfg, policies[k]);
        const std::string name =
            k == 0 ? "pvalues.csv" : to_string(policies[k]) + "/pvalues.csv";
        stage.write(name, [&](std::ostream& o) {
          o << "rep,pvalue,zstat,arm_star\n";
          for (std::size_t rep = 0; rep < r.reps.size(); ++rep) {
            o << rep << ',' << format_number(r.reps[rep].p_value) << ','
              << format_number(r.reps[rep].z) << ','
              << r.reps[rep].arm_star + 1 << '\n';
          }
        });
        rows.push_back({{"policy", to_string(r.policy)},
                        {"file", name},
                        {"fraction_below_alpha", json_number(r.fraction_below_alpha)},
                        {"untestable", r.untestable},
                        {"ks_distance", json_number(r.ks_distance)},
                        {"corrected_threshold", json_number(r.threshold)},
                        {"corrected_rejection_rate",
                         json_number(r.corrected_rejection_rate)}});
      }
      summary["policies"] = rows;
      break;
    }
    case ExperimentKind::kLinearBias: {
      const RewardModel model = linear_bias_model(cfg);
      const LinUcbConfig lcfg = linear_config(cfg);
      nlohmann::json rows = nlohmann::json::array();
      std::ostringstream csv;
      csv << "policy,arm,context,estimator,bias,se,n_reps\n";
      for (const auto p : policies) {
        GatherPolicy kind = GatherPolicy::kOful;
        if (p == PolicyKind::kRoundRobin) kind = GatherPolicy::kRoundRobin;
        else if (p == PolicyKind::kLinPriv) kind = GatherPolicy::kLinPriv;
        else if (p != PolicyKind::kOful)
          throw ConfigError("linear-bias supports oful, linpriv, roundrobin");
        for (std::size_t arm = 0; arm < cfg.arms; ++arm) {
          const auto rep = prediction_bias(model, lcfg, kind, arm, cfg.reps,
                                           cfg.base_seed);
          for (const auto& [name, list] :
               {std::pair{"ridge", &rep.ridge}, std::pair{"ols", &rep.ols}}) {
            for (const auto& c : *list) {
              csv << to_string(p) << ',' << arm + 1 << ',' << c.context + 1
                  << ',' << name << ',' << format_number(c.bias) << ','
                  << format_number(c.se) << ',' << c.n << '\n';
            }
          }
          const auto worst = PredictionBiasReport::max_abs(rep.ols);
          rows.push_back(
              {{"policy", to_string(p)},
               {"arm", arm + 1},
               {"max_abs_ols_bias",
                worst ? nlohmann::json(std::abs(worst->bias)) : nullptr},
               {"max_abs_ols_se", worst ? nlohmann::json(worst->se) : nullptr},
               {"reps_without_pulls", rep.reps_without_pulls},
               {"reps_rank_deficient", rep.reps_rank_deficient}});
        }
      }
      stage.write("linear_bias.csv", [&](std::ostream& o) { o << csv.str(); });
      summary["arms"] = rows;
      break;
    }
    case ExperimentKind::kSweep: {
      std::ostringstream csv;
      csv << "epsilon,policy,mean_abs_bias,max_abs_bias,regret_mean,regret_se\n";
      nlohmann::json rows = nlohmann::json::array();
      for (const double eps : cfg.eps_grid) {
        for (const auto p : policies) {
          const auto r = simulate_stochastic(
              cfg, p, is_private(p) ? std::optional(eps) : std::nullopt);
          const ArmBias* worst = r.bias.most_biased();
          csv << format_number(eps) << ',' << to_string(p) << ','
              << format_number(r.bias.mean_abs_bias) << ','
              << format_number(worst ? std::abs(*worst->bias) : kNaN) << ','
              << format_number(r.regret_mean.back()) << ','
              << format_number(r.regret_se.back()) << '\n';
          auto row = detail::stochastic_summary(r);
          row["epsilon"] = eps;
          rows.push_back(row);
        }
      }
      stage.write("sweep.csv", [&](std::ostream& o) { o << csv.str(); });
      summary["rows"] = rows;
      break;
    }
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  const std::string canonical = cfg.canonical_text();
  nlohmann::json manifest = {{"tool", "dpbandit"},
                             {"version", kVersion},
                             {"config", cfg.canonical()},
                             {"content_hash", git_blob_hash(canonical)},
                             {"threads", cfg.threads},
                             {"wall_time_seconds", wall},
                             {"summary", summary}};
  std::vector<std::string> files = stage.files();
  manifest["files"] = files;
  stage.write("manifest.json",
              [&](std::ostream& o) { o << manifest.dump(2) << '\n'; });
  stage.commit();
  files.push_back("manifest.json");
  return {cfg.output, manifest, files};
}

}  // namespace dpbandit::harness
