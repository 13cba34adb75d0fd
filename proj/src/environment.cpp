#include "jobshop/environment.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace jssp {

int State::machine_pred(int op) const {
  const auto& chain = machine_chain[instance->ops[op].machine];
  for (size_t i = 0; i < chain.size(); ++i) {
    if (chain[i] == op) return i == 0 ? -1 : chain[i - 1];
  }
  return -1;
}

State reset(std::shared_ptr<const Instance> instance) {
  instance->validate();
  State s;
  s.instance = std::move(instance);
  s.scheduled.assign(s.instance->n_ops(), 0);
  s.next_rank.assign(s.instance->n_jobs, 0);
  s.machine_chain.assign(s.instance->n_machines, {});
  s.dispatch_order.reserve(s.instance->n_ops());
  return s;
}

std::vector<uint8_t> legal_actions(const State& s) {
  std::vector<uint8_t> mask(s.n_ops(), 0);
  for (int j = 0; j < s.instance->n_jobs; ++j) {
    if (s.next_rank[j] < s.instance->n_machines) {
      mask[s.instance->op_index(j, s.next_rank[j])] = 1;
    }
  }
  return mask;
}

int count_legal(const State& s) {
  int c = 0;
  for (int j = 0; j < s.instance->n_jobs; ++j) {
    if (s.next_rank[j] < s.instance->n_machines) ++c;
  }
  return c;
}

void apply_step(State& s, int op) {
  if (op < 0 || op >= s.n_ops()) {
    throw std::invalid_argument("step: operation index out of range");
  }
  const Operation& o = s.instance->ops[op];
  if (s.scheduled[op]) {
    throw std::invalid_argument("step: operation already scheduled");
  }
  if (o.rank != s.next_rank[o.job]) {
    throw std::invalid_argument("step: job predecessor not scheduled yet");
  }
  s.scheduled[op] = 1;
  s.next_rank[o.job] += 1;
  s.machine_chain[o.machine].push_back(op);
  s.dispatch_order.push_back(op);
  s.step_count += 1;
}

State step(const State& s, int op) {
  State out = s;
  apply_step(out, op);
  return out;
}

double Schedule::makespan() const {
  double m = 0.0;
  for (size_t i = 0; i < start.size(); ++i) {
    if (start[i] >= 0.0) m = std::max(m, start[i] + duration[i]);
  }
  return m;
}

Schedule sgs_starts(const State& s, std::span<const double> durations) {
  const Instance& inst = *s.instance;
  for (int i = 0; i < inst.n_ops(); ++i) {
    if (s.scheduled[i] && !(durations[i] > 0.0)) {
      throw std::invalid_argument("sgs_starts: durations must be strictly positive");
    }
  }
  Schedule sched;
  sched.start.assign(inst.n_ops(), -1.0);
  sched.duration.assign(durations.begin(), durations.end());
  std::vector<int> last_on_machine(inst.n_machines, -1);
  for (int op : s.dispatch_order) {
    const Operation& o = inst.ops[op];
    double start = 0.0;
    if (o.rank > 0) {
      const int jp = inst.op_index(o.job, o.rank - 1);
      start = std::max(start, sched.start[jp] + sched.duration[jp]);
    }
    const int mp = last_on_machine[o.machine];
    if (mp >= 0) {
      start = std::max(start, sched.start[mp] + sched.duration[mp]);
    }
    sched.start[op] = start;
    last_on_machine[o.machine] = op;
  }
  return sched;
}

double terminal_cost(const State& s, const Scenario& scenario) {
  if (!s.terminal()) {
    throw std::invalid_argument("terminal_cost: state is not terminal");
  }
  return sgs_starts(s, scenario.real).makespan();
}

std::string Violation::describe(const Instance& inst) const {
  const Operation& a = inst.ops[op_a];
  const Operation& b = inst.ops[op_b];
  std::string where = "ops (" + std::to_string(a.job) + "," + std::to_string(a.rank) + ") and (" +
                      std::to_string(b.job) + "," + std::to_string(b.rank) + ")";
  return kind == Kind::JobPrecedence ? "job precedence violated between " + where
                                     : "machine overlap on machine " +
                                           std::to_string(a.machine) + " between " + where;
}

std::vector<Violation> validate_schedule(const Instance& inst, const Schedule& sched) {
  constexpr double kEps = 1e-9;
  std::vector<Violation> out;
  for (int j = 0; j < inst.n_jobs; ++j) {
    for (int r = 1; r < inst.n_machines; ++r) {
      const int cur = inst.op_index(j, r);
      const int pred = inst.op_index(j, r - 1);
      if (sched.start[cur] < 0.0) continue;
      if (sched.start[pred] < 0.0 ||
          sched.start[cur] + kEps < sched.start[pred] + sched.duration[pred]) {
        out.push_back({Violation::Kind::JobPrecedence, pred, cur});
      }
    }
  }
  std::vector<std::vector<int>> per_machine(inst.n_machines);
  for (int i = 0; i < inst.n_ops(); ++i) {
    if (sched.start[i] >= 0.0) per_machine[inst.ops[i].machine].push_back(i);
  }
  for (auto& ops : per_machine) {
    std::sort(ops.begin(), ops.end(),
              [&](int a, int b) { return sched.start[a] < sched.start[b]; });
    for (size_t i = 1; i < ops.size(); ++i) {
      const int prev = ops[i - 1];
      if (sched.start[ops[i]] + kEps < sched.start[prev] + sched.duration[prev]) {
        out.push_back({Violation::Kind::MachineOverlap, prev, ops[i]});
      }
    }
  }
  return out;
}

void write_schedule_csv(const Instance& inst, const Schedule& sched, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "job,rank,machine,start,duration,completion\n";
  for (int i = 0; i < inst.n_ops(); ++i) {
    if (sched.start[i] < 0.0) continue;
    const Operation& o = inst.ops[i];
    out << o.job << ',' << o.rank << ',' << o.machine << ',' << sched.start[i] << ','
        << sched.duration[i] << ',' << sched.start[i] + sched.duration[i] << '\n';
  }
}

}  // namespace jssp
