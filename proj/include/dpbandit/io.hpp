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

// CSV and JSON forms of run records, bias reports, test results and the
// counter noise ledger. Arms and rounds are written 1-based; numbers use the
// shortest round-trip representation so outputs are byte-reproducible.

#pragma once

#include <charconv>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpbandit/core.hpp"
#include "dpbandit/privacy.hpp"
#include "dpbandit/stats.hpp"

namespace dpbandit {

// Shortest representation that parses back to the same double; "NA" for NaN.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "NA";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline nlohmann::json json_number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

// t,arm,reward
inline void write_run_csv(std::ostream& out, const RunRecord& record) {
  out << "t,arm,reward\n";
  for (std::size_t t = 0; t < record.horizon(); ++t) {
    out << t + 1 << ',' << record.choices[t] + 1 << ','
        << format_number(record.observed_rewards[t]) << '\n';
  }
}

inline nlohmann::json run_summary_json(const RunRecord& record) {
  nlohmann::json arms = nlohmann::json::array();
  for (std::size_t i = 0; i < record.arms(); ++i) {
    const auto mean = record.sample_mean(i);
    arms.push_back({{"arm", i + 1},
                    {"count", record.arm_counts[i]},
                    {"sum", record.arm_sums[i]},
                    {"mean", mean ? nlohmann::json(*mean) : nullptr}});
  }
  return {{"horizon", record.horizon()}, {"arms", arms}};
}

// arm,bias,se,ci_lo,ci_hi,n_reps; an arm without an estimate is written NA.
inline void write_bias_csv(std::ostream& out, const BiasReport& report) {
  out << "arm,bias,se,ci_lo,ci_hi,n_reps\n";
  for (const auto& a : report.arms) {
    out << a.arm + 1 << ',' << format_number(a.bias.value_or(kNaN)) << ','
        << format_number(a.se) << ',' << format_number(a.ci_lo) << ','
        << format_number(a.ci_hi) << ',' << a.n_reps << '\n';
  }
}

inline nlohmann::json bias_report_json(const BiasReport& report) {
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& a : report.arms) {
    arms.push_back({{"arm", a.arm + 1},
                    {"bias", a.bias ? nlohmann::json(*a.bias) : nullptr},
                    {"se", json_number(a.se)},
                    {"ci_lo", json_number(a.ci_lo)},
                    {"ci_hi", json_number(a.ci_hi)},
                    {"n_reps", a.n_reps}});
  }
  return {{"runs", report.runs},
          {"mean_abs_bias", json_number(report.mean_abs_bias)},
          {"arms", arms}};
}

inline nlohmann::json test_result_json(const TestResult& r) {
  return {{"test", r.descriptor},
          {"statistic", json_number(r.statistic)},
          {"p_value", json_number(r.p_value)},
          {"alpha", json_number(r.alpha)},
          {"threshold", json_number(r.threshold)},
          {"reject_raw", r.reject_raw},
          {"reject_corrected", r.reject_corrected}};
}

inline void write_test_results_csv(std::ostream& out,
                                   std::span<const TestResult> results) {
  out << "test,statistic,p_value,alpha,threshold,reject_raw,reject_corrected\n";
  for (const auto& r : results) {
    out << r.descriptor << ',' << format_number(r.statistic) << ','
        << format_number(r.p_value) << ',' << format_number(r.alpha) << ','
        << format_number(r.threshold) << ',' << (r.reject_raw ? 1 : 0) << ','
        << (r.reject_corrected ? 1 : 0) << '\n';
  }
}

inline nlohmann::json noise_ledger_json(
    const std::vector<NoiseLedgerEntry>& ledger) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& e : ledger) {
    nodes.push_back({{"epoch", e.node.epoch},
                     {"level", e.node.level},
                     {"index", e.node.index},
                     {"begin", e.node.begin},
                     {"end", e.node.end},
                     {"noise", e.noise}});
  }
  return nodes;
}

}  // namespace dpbandit
