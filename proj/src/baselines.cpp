#include "jobshop/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "jobshop/rng.hpp"

namespace jssp {

const char* rule_name(Rule r) {
  switch (r) {
    case Rule::MOPNR: return "mopnr";
    case Rule::SPT: return "spt";
    case Rule::MWKR: return "mwkr";
    case Rule::FDD_WKR: return "fdd_wkr";
    case Rule::Random: return "random";
  }
  return "?";
}

Rule rule_from_name(const std::string& s) {
  for (Rule r : {Rule::MOPNR, Rule::SPT, Rule::MWKR, Rule::FDD_WKR, Rule::Random}) {
    if (s == rule_name(r)) return r;
  }
  throw std::invalid_argument("unknown rule '" + s + "'");
}

std::vector<Rule> all_rules() {
  return {Rule::MOPNR, Rule::SPT, Rule::MWKR, Rule::FDD_WKR};
}

namespace {
// Larger is better. Minimizing rules return the negated criterion.
double priority(const Instance& inst, Rule rule, int job, int rank) {
  const int m = inst.n_machines;
  switch (rule) {
    case Rule::MOPNR:
      return m - rank;
    case Rule::SPT:
      return -inst.op(job, rank).duration.mode;
    case Rule::MWKR: {
      double rem = 0.0;
      for (int r = rank; r < m; ++r) rem += inst.op(job, r).duration.mode;
      return rem;
    }
    case Rule::FDD_WKR: {
      double fdd = 0.0, rem = 0.0;
      for (int r = 0; r <= rank; ++r) fdd += inst.op(job, r).duration.mode;
      for (int r = rank; r < m; ++r) rem += inst.op(job, r).duration.mode;
      return -fdd / rem;
    }
    case Rule::Random:
      return 0.0;
  }
  return 0.0;
}
}  // namespace

State pdr_dispatch(const Instance& inst, Rule rule, uint64_t seed) {
  auto shared = std::make_shared<Instance>(inst);
  State s = reset(shared);
  Rng rng(derive_seed(seed, 0x7064725full));
  const int total = inst.n_ops();
  for (int t = 0; t < total; ++t) {
    int best_op = -1;
    if (rule == Rule::Random) {
      int n = count_legal(s);
      int pick = static_cast<int>(rng.uniform_int(0, n - 1));
      for (int j = 0; j < inst.n_jobs && best_op < 0; ++j) {
        if (s.next_rank[j] < inst.n_machines && pick-- == 0) {
          best_op = inst.op_index(j, s.next_rank[j]);
        }
      }
    } else {
      double best = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < inst.n_jobs; ++j) {
        const int r = s.next_rank[j];
        if (r >= inst.n_machines) continue;
        const double p = priority(inst, rule, j, r);
        if (p > best) {
          best = p;
          best_op = inst.op_index(j, r);
        }
      }
    }
    apply_step(s, best_op);
  }
  return s;
}

double sgs_replay(const State& terminal, const Scenario& scenario) {
  return terminal_cost(terminal, scenario);
}

namespace {

struct BnB {
  const Instance& inst;
  int n, m;
  std::vector<double> mode;       // per op
  std::vector<int> next_rank;     // per job
  std::vector<double> job_ready;  // per job
  std::vector<double> mach_ready; // per machine
  std::vector<double> job_rem;    // remaining work per job
  std::vector<double> mach_rem;   // remaining work per machine
  std::vector<int> order;         // current dispatch prefix
  std::vector<int> best_order;
  double best = std::numeric_limits<double>::infinity();
  int64_t nodes = 0;
  bool timed_out = false;
  std::chrono::steady_clock::time_point deadline;

  // Pareto ready-time vectors already expanded, per job-progress key.
  std::unordered_map<uint64_t, std::vector<std::vector<double>>> seen;

  explicit BnB(const Instance& i, double time_limit)
      : inst(i), n(i.n_jobs), m(i.n_machines), mode(mode_durations(i)) {
    next_rank.assign(n, 0);
    job_ready.assign(n, 0.0);
    mach_ready.assign(m, 0.0);
    job_rem.assign(n, 0.0);
    mach_rem.assign(m, 0.0);
    for (const auto& o : inst.ops) {
      job_rem[o.job] += o.duration.mode;
      mach_rem[o.machine] += o.duration.mode;
    }
    deadline = std::chrono::steady_clock::now() +
               std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                   std::chrono::duration<double>(time_limit));
  }

  uint64_t progress_key() const {
    uint64_t k = 0;
    for (int j = 0; j < n; ++j) k = k * static_cast<uint64_t>(m + 1) + next_rank[j];
    return k;
  }

  double lower_bound() const {
    double lb = 0.0;
    for (int j = 0; j < n; ++j) lb = std::max(lb, job_ready[j] + job_rem[j]);
    for (int k = 0; k < m; ++k) lb = std::max(lb, mach_ready[k] + mach_rem[k]);
    return lb;
  }

  bool dominated() {
    auto& vecs = seen[progress_key()];
    std::vector<double> cur;
    cur.reserve(n + m);
    cur.insert(cur.end(), job_ready.begin(), job_ready.end());
    cur.insert(cur.end(), mach_ready.begin(), mach_ready.end());
    for (const auto& v : vecs) {
      bool dom = true;
      for (size_t i = 0; i < cur.size() && dom; ++i) dom = v[i] <= cur[i];
      if (dom) return true;
    }
    std::erase_if(vecs, [&](const std::vector<double>& v) {
      for (size_t i = 0; i < cur.size(); ++i) {
        if (cur[i] > v[i]) return false;
      }
      return true;
    });
    vecs.push_back(std::move(cur));
    return false;
  }

  void dfs(int depth, double current_max) {
    if ((++nodes & 0xfff) == 0 && std::chrono::steady_clock::now() > deadline) {
      timed_out = true;
    }
    if (timed_out) return;
    if (depth == n * m) {
      if (current_max < best) {
        best = current_max;
        best_order = order;
      }
      return;
    }
    if (dominated()) return;

    struct Child {
      int job;
      double lb;
    };
    std::vector<Child> children;
    children.reserve(n);
    for (int j = 0; j < n; ++j) {
      const int r = next_rank[j];
      if (r >= m) continue;
      const int op = inst.op_index(j, r);
      const int mach = inst.ops[op].machine;
      const double d = mode[op];
      const double start = std::max(job_ready[j], mach_ready[mach]);

      const double jr = job_ready[j], mr = mach_ready[mach];
      job_ready[j] = mach_ready[mach] = start + d;
      job_rem[j] -= d;
      mach_rem[mach] -= d;
      const double lb = std::max(lower_bound(), std::max(current_max, start + d));
      job_ready[j] = jr;
      mach_ready[mach] = mr;
      job_rem[j] += d;
      mach_rem[mach] += d;
      if (lb < best) children.push_back({j, lb});
    }
    std::stable_sort(children.begin(), children.end(),
                     [](const Child& a, const Child& b) { return a.lb < b.lb; });
    for (const Child& c : children) {
      if (c.lb >= best) continue;
      const int j = c.job;
      const int r = next_rank[j];
      const int op = inst.op_index(j, r);
      const int mach = inst.ops[op].machine;
      const double d = mode[op];
      const double start = std::max(job_ready[j], mach_ready[mach]);

      const double jr = job_ready[j], mr = mach_ready[mach];
      next_rank[j] += 1;
      job_ready[j] = mach_ready[mach] = start + d;
      job_rem[j] -= d;
      mach_rem[mach] -= d;
      order.push_back(op);

      dfs(depth + 1, std::max(current_max, start + d));

      order.pop_back();
      next_rank[j] -= 1;
      job_ready[j] = jr;
      mach_ready[mach] = mr;
      job_rem[j] += d;
      mach_rem[mach] += d;
      if (timed_out) return;
    }
  }
};

}  // namespace

ExactResult exact_makespan(const Instance& inst, double time_limit_seconds) {
  inst.validate();
  BnB bnb(inst, time_limit_seconds);
  // Warm start from the dispatching rules.
  for (Rule r : all_rules()) {
    State s = pdr_dispatch(inst, r);
    const double ms = sgs_starts(s, mode_durations(inst)).makespan();
    if (ms < bnb.best) {
      bnb.best = ms;
      bnb.best_order = s.dispatch_order;
    }
  }
  bnb.dfs(0, 0.0);
  ExactResult res;
  res.optimal = !bnb.timed_out;
  res.makespan = bnb.best;
  res.dispatch = bnb.best_order;
  res.nodes_explored = bnb.nodes;
  return res;
}

}  // namespace jssp
