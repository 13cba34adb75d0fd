#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "jobshop/baselines.hpp"
#include "jobshop/rng.hpp"
#include "oracles.hpp"

using namespace jssp;

namespace {

std::shared_ptr<const Instance> make_instance(int n, int m,
                                              const std::vector<std::vector<int>>& machines,
                                              const std::vector<std::vector<double>>& durations) {
  auto inst = std::make_shared<Instance>();
  inst->n_jobs = n;
  inst->n_machines = m;
  inst->ops.resize(size_t(n) * m);
  for (int j = 0; j < n; ++j) {
    for (int r = 0; r < m; ++r) {
      inst->ops[inst->op_index(j, r)] =
          Operation{j, r, machines[j][r], DurationModel::deterministic(durations[j][r])};
    }
  }
  return inst;
}

// Step-by-step reference simulation of a priority rule, recomputing the
// priority definition from scratch at each step.
std::vector<int> reference_rule_order(const Instance& inst, Rule rule) {
  std::vector<int> next(inst.n_jobs, 0);
  std::vector<int> order;
  auto mode = [&](int j, int r) { return inst.op(j, r).duration.mode; };
  for (int t = 0; t < inst.n_ops(); ++t) {
    int best_job = -1;
    double best = 0.0;
    for (int j = 0; j < inst.n_jobs; ++j) {
      const int r = next[j];
      if (r >= inst.n_machines) continue;
      double p = 0.0;
      switch (rule) {
        case Rule::MOPNR: p = inst.n_machines - r; break;
        case Rule::SPT: p = -mode(j, r); break;
        case Rule::MWKR: {
          for (int q = r; q < inst.n_machines; ++q) p += mode(j, q);
          break;
        }
        case Rule::FDD_WKR: {
          double fdd = 0.0, wkr = 0.0;
          for (int q = 0; q <= r; ++q) fdd += mode(j, q);
          for (int q = r; q < inst.n_machines; ++q) wkr += mode(j, q);
          p = -fdd / wkr;
          break;
        }
        case Rule::Random: break;
      }
      if (best_job < 0 || p > best) {
        best_job = j;
        best = p;
      }
    }
    order.push_back(inst.op_index(best_job, next[best_job]));
    next[best_job] += 1;
  }
  return order;
}

}  // namespace

TEST_CASE("single job: unique order for every rule") {
  auto inst = make_instance(1, 3, {{2, 0, 1}}, {{4, 5, 6}});
  for (Rule r : all_rules()) {
    State s = pdr_dispatch(*inst, r);
    CHECK(s.dispatch_order == std::vector<int>{0, 1, 2});
  }
}

TEST_CASE("spt on a single machine dispatches the short job first") {
  auto inst = make_instance(2, 1, {{0}, {0}}, {{3}, {5}});
  State s = pdr_dispatch(*inst, Rule::SPT);
  CHECK(s.dispatch_order == std::vector<int>{0, 1});
  auto sched = sgs_starts(s, mode_durations(*inst));
  CHECK(sched.makespan() == 8.0);
  CHECK(sched.start[0] == 0.0);
  CHECK(sched.start[1] == 3.0);

  // Reversed priorities: same single-machine makespan, different starts.
  auto rev = make_instance(2, 1, {{0}, {0}}, {{5}, {3}});
  State s2 = pdr_dispatch(*rev, Rule::SPT);
  CHECK(s2.dispatch_order == std::vector<int>{1, 0});
  auto sched2 = sgs_starts(s2, mode_durations(*rev));
  CHECK(sched2.makespan() == 8.0);
  CHECK(sched2.start[0] == 3.0);
}

TEST_CASE("rules match the reference simulation on random instances") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Instance inst = generate_taillard(3, 3, 3100 + seed);
    for (Rule r : all_rules()) {
      CHECK(pdr_dispatch(inst, r).dispatch_order == reference_rule_order(inst, r));
    }
  }
}

TEST_CASE("rule dispatch is deterministic and ties break by job index") {
  Instance inst = generate_taillard(4, 4, 9);
  for (Rule r : all_rules()) {
    CHECK(pdr_dispatch(inst, r).dispatch_order == pdr_dispatch(inst, r).dispatch_order);
  }
  // All-equal durations: MOPNR and MWKR tie everywhere; dispatch follows
  // job index round robin.
  auto flat = make_instance(2, 2, {{0, 1}, {1, 0}}, {{5, 5}, {5, 5}});
  CHECK(pdr_dispatch(*flat, Rule::MOPNR).dispatch_order == std::vector<int>{0, 2, 1, 3});
  // Random rule is reproducible under a fixed seed.
  CHECK(pdr_dispatch(inst, Rule::Random, 5).dispatch_order ==
        pdr_dispatch(inst, Rule::Random, 5).dispatch_order);
}

TEST_CASE("replay: mode scenario equals the rule's deterministic makespan") {
  Instance st = stochasticize(generate_taillard(4, 4, 17), 18);
  for (Rule r : all_rules()) {
    State terminal = pdr_dispatch(st, r);
    Scenario mode{mode_durations(st)};
    CHECK(sgs_replay(terminal, mode) == sgs_starts(terminal, mode.real).makespan());
    // 100 scenario replays stay within the min/max envelope.
    const double lo = sgs_starts(terminal, min_durations(st)).makespan();
    const double hi = sgs_starts(terminal, max_durations(st)).makespan();
    double mean = 0.0;
    for (int k = 0; k < 100; ++k) {
      const double v = sgs_replay(terminal, sample_scenario(st, 100 + k));
      CHECK(v >= lo);
      CHECK(v <= hi);
      mean += v;
    }
    mean /= 100.0;
    CHECK(mean >= lo);
    CHECK(mean <= hi);
  }
  // Degenerate bounds: replay is invariant across scenarios.
  Instance degenerate = stochasticize(generate_taillard(3, 3, 4), 5, 1.0, 1.0);
  State t = pdr_dispatch(degenerate, Rule::SPT);
  const double m0 = sgs_replay(t, sample_scenario(degenerate, 1));
  for (int k = 2; k < 10; ++k) CHECK(sgs_replay(t, sample_scenario(degenerate, k)) == m0);
}

TEST_CASE("every rule's schedule validates under replay") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Instance st = stochasticize(generate_taillard(4, 4, 500 + seed), 600 + seed);
    for (Rule r : all_rules()) {
      State terminal = pdr_dispatch(st, r);
      Scenario sc = sample_scenario(st, seed);
      CHECK(validate_schedule(st, sgs_starts(terminal, sc.real)).empty());
    }
  }
}

TEST_CASE("exact: single job chain is the duration sum") {
  auto inst = make_instance(1, 4, {{0, 1, 2, 3}}, {{2, 3, 4, 5}});
  ExactResult r = exact_makespan(*inst);
  CHECK(r.optimal);
  CHECK(r.makespan == 14.0);
}

TEST_CASE("exact matches exhaustive enumeration on small-duration 2x2 instances") {
  // All machine layouts and durations in {1,2,3}.
  const std::vector<std::vector<std::vector<int>>> layouts = {
      {{0, 1}, {0, 1}}, {{0, 1}, {1, 0}}, {{1, 0}, {0, 1}}, {{1, 0}, {1, 0}}};
  int instances = 0;
  for (const auto& layout : layouts) {
    for (int d0 = 1; d0 <= 3; ++d0) {
      for (int d1 = 1; d1 <= 3; ++d1) {
        for (int d2 = 1; d2 <= 3; ++d2) {
          for (int d3 = 1; d3 <= 3; ++d3) {
            auto inst = make_instance(2, 2, layout,
                                      {{double(d0), double(d1)}, {double(d2), double(d3)}});
            auto durs = mode_durations(*inst);
            double best = std::numeric_limits<double>::infinity();
            oracle::enumerate_dispatch_sequences(inst, 100, [&](const State& t) {
              best = std::min(best, oracle::longest_path_makespan(t, durs));
            });
            ExactResult r = exact_makespan(*inst);
            CHECK(r.optimal);
            CHECK(r.makespan == best);
            ++instances;
          }
        }
      }
    }
  }
  CHECK(instances == 324);
}

TEST_CASE("exact matches exhaustive enumeration on random 3x3 instances") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    auto inst = std::make_shared<Instance>(generate_taillard(3, 3, 777 + seed));
    auto durs = mode_durations(*inst);
    double best = std::numeric_limits<double>::infinity();
    oracle::enumerate_dispatch_sequences(inst, 100000, [&](const State& t) {
      best = std::min(best, oracle::longest_path_makespan(t, durs));
    });
    ExactResult r = exact_makespan(*inst);
    CHECK(r.optimal);
    CHECK(r.makespan == best);
    // The returned dispatch order realizes the optimum.
    State s = reset(inst);
    for (int op : r.dispatch) apply_step(s, op);
    CHECK(sgs_starts(s, durs).makespan() == r.makespan);
  }
}

TEST_CASE("exact lower-bounds every dispatching rule on 4x4 instances") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Instance inst = generate_taillard(4, 4, 4400 + seed);
    ExactResult r = exact_makespan(inst);
    REQUIRE(r.optimal);
    auto durs = mode_durations(inst);
    for (Rule rule : all_rules()) {
      CHECK(r.makespan <= sgs_starts(pdr_dispatch(inst, rule), durs).makespan());
    }
  }
}

TEST_CASE("exact reports timeouts distinctly") {
  Instance inst = generate_taillard(8, 8, 1);
  ExactResult r = exact_makespan(inst, 0.05);
  CHECK(!r.optimal);
  CHECK(r.makespan > 0.0);  // still returns the incumbent
}
