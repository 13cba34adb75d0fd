#pragma once

#include <string>
#include <vector>

#include "jobshop/baselines.hpp"
#include "jobshop/policy.hpp"

namespace jssp {

// Percent excess makespan over the best reference value.
double gap_percent(double makespan, double best);

struct EvalRow {
  std::string size;
  std::string method;
  double mean_makespan = 0.0;
  double gap_pct = 0.0;
  int n_instances = 0;
  int n_scenarios = 0;
  uint64_t seed = 0;
};

struct EvalOptions {
  std::vector<std::pair<int, int>> sizes;
  int n_instances = 100;
  int n_scenarios = 1;
  uint64_t seed = 0;
  bool stochastic = true;
  bool include_rules = true;
  bool include_exact = false;
  double exact_time_limit = 60.0;
};

// Per size: fresh instances and paired scenario draws shared by every
// method; the policy dispatches once per instance (argmax) and machine
// sequences are replayed under each scenario. Gap is computed against the
// best mean in the size group.
template <typename Scalar>
std::vector<EvalRow> evaluate_policy(const Network<Scalar>& net, const EvalOptions& opts);

// Baselines only (no checkpoint needed).
std::vector<EvalRow> evaluate_baselines(const EvalOptions& opts, const std::vector<Rule>& rules);

// Per-instance baseline detail: the rule's mode makespan and replay
// statistics over the instance's scenario draws.
struct BaselineRow {
  std::string size;
  int instance = 0;
  std::string rule;
  double mode_makespan = 0.0;
  double mean_replay = 0.0;
  double p10 = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
};

std::vector<BaselineRow> baseline_details(const EvalOptions& opts, const std::vector<Rule>& rules);
void write_baseline_csv(const std::vector<BaselineRow>& rows, const EvalOptions& opts,
                        const std::string& path);

void write_results_csv(const std::vector<EvalRow>& rows, const std::string& path);
std::string format_results_table(const std::vector<EvalRow>& rows);

struct CurveRow {
  std::string method;
  int rank = 0;
  double makespan = 0.0;
};

// Empirical distribution support: per method the sorted replay makespans
// of one instance over shared scenario draws.
std::vector<CurveRow> cumulative_curve(const std::vector<std::pair<std::string, State>>& solvers,
                                       const std::vector<Scenario>& scenarios);
std::vector<CurveRow> cumulative_curve(const Instance& inst,
                                       const std::vector<std::pair<std::string, State>>& solvers,
                                       int n_scenarios, uint64_t seed);

void write_curve_csv(const std::vector<CurveRow>& rows, const std::string& path);

std::vector<std::pair<int, int>> parse_sizes(const std::string& spec);

}  // namespace jssp
