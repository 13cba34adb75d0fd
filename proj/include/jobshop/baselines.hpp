#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jobshop/environment.hpp"

namespace jssp {

// Priority dispatching rules. All priorities are computed from mode
// durations; ties go to the lowest job index.
enum class Rule { MOPNR, SPT, MWKR, FDD_WKR, Random };

const char* rule_name(Rule r);
Rule rule_from_name(const std::string& s);
std::vector<Rule> all_rules();  // deterministic rules only (no Random)

// Runs the dispatch MDP to a terminal state picking the rule's best legal
// action at each step. seed is only used by Rule::Random.
State pdr_dispatch(const Instance& inst, Rule rule, uint64_t seed = 0);

// Keeps the machine sequences of a terminal state and recomputes start
// dates with the scenario's real durations.
double sgs_replay(const State& terminal, const Scenario& scenario);

struct ExactResult {
  bool optimal = false;  // false means the time limit was hit
  double makespan = 0.0;
  std::vector<int> dispatch;  // a dispatch order achieving makespan
  int64_t nodes_explored = 0;
};

// Depth-first branch and bound over dispatch sequences on mode durations.
// Lower bound: max over machines and jobs of head completion + remaining
// work. States with elementwise-dominated ready times are pruned.
// Intended for small instances (up to roughly 6x6).
ExactResult exact_makespan(const Instance& inst, double time_limit_seconds = 60.0);

}  // namespace jssp
