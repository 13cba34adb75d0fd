#pragma once

// Test-only oracles, implemented independently of the library paths they
// check.

#include <algorithm>
#include <functional>
#include <queue>
#include <vector>

#include "jobshop/environment.hpp"
#include "jobshop/policy.hpp"

namespace jssp::oracle {

// Direct evaluation of the candidate-action set definition: an operation
// is a candidate iff it is unscheduled and every earlier rank of its job
// is scheduled. Reads only the scheduled set.
inline std::vector<uint8_t> candidate_mask(const State& s) {
  const Instance& inst = *s.instance;
  std::vector<uint8_t> mask(inst.n_ops(), 0);
  for (int j = 0; j < inst.n_jobs; ++j) {
    for (int r = 0; r < inst.n_machines; ++r) {
      const int op = inst.op_index(j, r);
      if (s.scheduled[op]) continue;
      bool preds_done = true;
      for (int q = 0; q < r; ++q) {
        if (!s.scheduled[inst.op_index(j, q)]) preds_done = false;
      }
      mask[op] = preds_done ? 1 : 0;
    }
  }
  return mask;
}

// Longest-path start dates over the full oriented selection: job arcs plus
// every ordered same-machine pair of scheduled ops, topological order via
// Kahn's algorithm. Unscheduled ops get -1.
inline std::vector<double> longest_path_starts(const State& s, std::span<const double> dur) {
  const Instance& inst = *s.instance;
  const int n = inst.n_ops();
  std::vector<std::vector<int>> succ(n);
  std::vector<int> indeg(n, 0);
  auto add_arc = [&](int a, int b) {
    succ[a].push_back(b);
    indeg[b] += 1;
  };
  for (int j = 0; j < inst.n_jobs; ++j) {
    for (int r = 1; r < inst.n_machines; ++r) {
      const int a = inst.op_index(j, r - 1);
      const int b = inst.op_index(j, r);
      if (s.scheduled[a] && s.scheduled[b]) add_arc(a, b);
    }
  }
  for (const auto& chain : s.machine_chain) {
    for (size_t i = 0; i < chain.size(); ++i) {
      for (size_t k = i + 1; k < chain.size(); ++k) add_arc(chain[i], chain[k]);
    }
  }
  std::vector<double> start(n, -1.0);
  std::queue<int> ready;
  for (int i = 0; i < n; ++i) {
    if (s.scheduled[i]) {
      start[i] = 0.0;
      if (indeg[i] == 0) ready.push(i);
    }
  }
  while (!ready.empty()) {
    const int a = ready.front();
    ready.pop();
    for (int b : succ[a]) {
      start[b] = std::max(start[b], start[a] + dur[a]);
      if (--indeg[b] == 0) ready.push(b);
    }
  }
  return start;
}

inline double longest_path_makespan(const State& s, std::span<const double> dur) {
  const auto start = longest_path_starts(s, dur);
  double m = 0.0;
  for (size_t i = 0; i < start.size(); ++i) {
    if (start[i] >= 0.0) m = std::max(m, start[i] + dur[i]);
  }
  return m;
}

// Enumerates complete dispatch sequences (DFS over candidate actions) up
// to a cap; returns the number visited. The callback receives each
// terminal state.
inline int64_t enumerate_dispatch_sequences(const std::shared_ptr<const Instance>& inst,
                                            int64_t cap,
                                            const std::function<void(const State&)>& fn) {
  int64_t count = 0;
  State s = reset(inst);
  std::function<void(State&)> dfs = [&](State& cur) {
    if (count >= cap) return;
    if (cur.terminal()) {
      ++count;
      fn(cur);
      return;
    }
    for (int j = 0; j < inst->n_jobs; ++j) {
      if (cur.next_rank[j] >= inst->n_machines) continue;
      State next = step(cur, inst->op_index(j, cur.next_rank[j]));
      dfs(next);
      if (count >= cap) return;
    }
  };
  dfs(s);
  return count;
}

// Central finite differences of a scalar loss with respect to every
// network parameter.
template <typename Scalar, typename LossFn>
std::vector<double> numeric_gradient(Network<Scalar>& net, LossFn loss, double h = 1e-5) {
  std::vector<double> grad(net.n_params());
  for (size_t i = 0; i < net.n_params(); ++i) {
    const Scalar saved = net.params[i];
    net.params[i] = saved + Scalar(h);
    const double up = loss();
    net.params[i] = saved - Scalar(h);
    const double down = loss();
    net.params[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

// Analytic triangular moments used as Monte-Carlo references.
inline double triangular_mean(double lo, double mode, double hi) { return (lo + mode + hi) / 3.0; }
inline double triangular_cdf_at_mode(double lo, double mode, double hi) {
  return (mode - lo) / (hi - lo);
}

}  // namespace jssp::oracle
