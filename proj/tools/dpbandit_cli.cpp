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

// dpbandit: experiment driver.
//
//   dpbandit run <config> [--set key=value]... [--threads N]
//   dpbandit sweep <config> [--eps-grid a,b,...] [--set ...] [--threads N]
//   dpbandit correct --alpha A --beta B --eps E --T T
//   dpbandit trace <config> --policy P [--rep R] [--out run.csv]
//                  [--dump-noise noise.json]
//   dpbandit selftest
//
// Exit status: 0 success, 2 configuration or usage error, 3 runtime error.

#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpbandit/harness.hpp"
#include "dpbandit/io.hpp"
#include "dpbandit/selftest.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

namespace h = dpbandit::harness;

h::ExperimentConfig load(const std::string& path,
                         const std::vector<std::string>& overrides,
                         std::size_t threads) {
  h::ExperimentConfig cfg = h::load_config(path);
  for (const auto& o : overrides) h::apply_override(cfg, o);
  if (threads > 0) cfg.threads = threads;
  return cfg;
}

void print_summary(const dpbandit::harness::ExperimentOutput& out) {
  std::cout << "wrote " << out.directory.string() << " (";
  for (std::size_t i = 0; i < out.files.size(); ++i) {
    std::cout << (i ? ", " : "") << out.files[i];
  }
  std::cout << ")\n" << out.manifest["summary"].dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private bandit simulations"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::size_t threads = 0;

  auto* run = app.add_subcommand("run", "run the experiment in a config file");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--set", overrides, "override a config key (key=value)");
  run->add_option("--threads", threads, "replication parallelism");

  std::string eps_grid;
  auto* sweep = app.add_subcommand("sweep", "grid of runs over epsilon");
  sweep->add_option("config", config_path, "config file")->required();
  sweep->add_option("--eps-grid", eps_grid, "comma-separated epsilon values");
  sweep->add_option("--set", overrides, "override a config key (key=value)");
  sweep->add_option("--threads", threads, "replication parallelism");

  double alpha = 0.05;
  double beta = 0.0;
  double eps = 0.0;
  std::size_t horizon = 0;
  auto* correct =
      app.add_subcommand("correct", "print the corrected p-value threshold");
  correct->add_option("--alpha", alpha, "nominal level")->required();
  correct->add_option("--beta", beta, "max-information slack")->required();
  correct->add_option("--eps", eps, "privacy level of the gathering")->required();
  correct->add_option("--T", horizon, "horizon")->required();

  std::string trace_policy;
  std::size_t trace_rep = 0;
  std::string trace_out;
  std::string noise_out;
  auto* trace = app.add_subcommand("trace", "dump one replication");
  trace->add_option("config", config_path, "config file")->required();
  trace->add_option("--policy", trace_policy, "policy to trace")->required();
  trace->add_option("--rep", trace_rep, "replication index");
  trace->add_option("--out", trace_out, "CSV of t,arm,reward (default stdout)");
  trace->add_option("--dump-noise", noise_out,
                    "JSON of every counter noise node (privucb)");
  trace->add_option("--set", overrides, "override a config key (key=value)");

  auto* selftest = app.add_subcommand("selftest", "run the invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      print_summary(h::run_experiment(load(config_path, overrides, threads)));
    } else if (*sweep) {
      auto cfg = load(config_path, overrides, threads);
      cfg.experiment = h::ExperimentKind::kSweep;
      if (!eps_grid.empty()) h::apply_setting(cfg, "eps_grid", eps_grid);
      print_summary(h::run_experiment(cfg));
    } else if (*correct) {
      const double k = dpbandit::max_info_bound(eps, horizon, beta);
      std::cout << dpbandit::format_number(
                       dpbandit::pvalue_correction(alpha, beta, k))
                << '\n';
    } else if (*trace) {
      const auto cfg = load(config_path, overrides, 0);
      cfg.validate();
      const auto result = h::trace_replication(
          cfg, h::detail::parse_policy(trace_policy), trace_rep);
      if (trace_out.empty()) {
        dpbandit::write_run_csv(std::cout, result.record);
      } else {
        std::ofstream out(trace_out);
        if (!out) throw std::runtime_error("cannot write " + trace_out);
        dpbandit::write_run_csv(out, result.record);
      }
      if (!noise_out.empty()) {
        std::ofstream out(noise_out);
        if (!out) throw std::runtime_error("cannot write " + noise_out);
        out << result.noise_ledger.dump(2) << '\n';
      }
    } else if (*selftest) {
      bool ok = true;
      for (const auto& r : dpbandit::selftest::run_all()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
        if (!r.passed) std::cout << ": " << r.detail;
        std::cout << '\n';
        ok = ok && r.passed;
      }
      return ok ? EXIT_SUCCESS : kExitRuntime;
    }
  } catch (const dpbandit::InvalidArgument& e) {
    std::cerr << "dpbandit: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "dpbandit: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return EXIT_SUCCESS;
}
