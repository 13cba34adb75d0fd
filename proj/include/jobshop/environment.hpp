#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "jobshop/instance.hpp"

namespace jssp {

// Partial selection of the dispatch MDP. Machine orders are kept as
// per-machine chains (dispatch order), which is the transitive reduction
// of the selection and is acyclic by construction.
struct State {
  std::shared_ptr<const Instance> instance;
  std::vector<uint8_t> scheduled;           // per op
  std::vector<int> next_rank;               // per job, first unscheduled rank
  std::vector<std::vector<int>> machine_chain;  // per machine, ops in dispatch order
  std::vector<int> dispatch_order;          // ops in the order they were scheduled
  int step_count = 0;

  bool terminal() const { return step_count == instance->n_ops(); }
  int n_ops() const { return instance->n_ops(); }
  // Previous op on the same machine chain, or -1. Only defined for
  // scheduled ops.
  int machine_pred(int op) const;
};

State reset(std::shared_ptr<const Instance> instance);

// Mask of dispatchable operations: the first unscheduled op of each job.
std::vector<uint8_t> legal_actions(const State& s);
int count_legal(const State& s);

// Throws std::invalid_argument naming the violated condition.
void apply_step(State& s, int op);
State step(const State& s, int op);

struct Schedule {
  std::vector<double> start;     // -1 for ops without a start (unscheduled)
  std::vector<double> duration;  // the duration vector the starts used

  double makespan() const;
};

// Earliest start dates under the current selection: each scheduled op
// starts at max(job predecessor completion, machine predecessor
// completion). Unscheduled ops get start -1.
Schedule sgs_starts(const State& s, std::span<const double> durations);

// Sampled makespan of a terminal state; the only nonzero cost of an episode.
double terminal_cost(const State& s, const Scenario& scenario);

struct Violation {
  enum class Kind { JobPrecedence, MachineOverlap };
  Kind kind;
  int op_a;
  int op_b;
  std::string describe(const Instance& inst) const;
};

// Empty iff job precedence and machine exclusivity hold for all ops that
// have a start date.
std::vector<Violation> validate_schedule(const Instance& inst, const Schedule& sched);

// CSV export: job,rank,machine,start,duration,completion.
void write_schedule_csv(const Instance& inst, const Schedule& sched, const std::string& path);

}  // namespace jssp
