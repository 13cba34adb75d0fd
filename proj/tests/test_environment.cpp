#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "jobshop/environment.hpp"
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

// The 3x3 toy instance used for the worked selection example: job0 visits
// machines 0,1,2; jobs 1 and 2 visit 2,0,1.
std::shared_ptr<const Instance> toy3x3() {
  return make_instance(3, 3, {{0, 1, 2}, {2, 0, 1}, {2, 0, 1}},
                       {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}});
}

// Both jobs visit machine 0 then machine 1; durations (2,3) and (4,2).
std::shared_ptr<const Instance> worked2x2() {
  return make_instance(2, 2, {{0, 1}, {0, 1}}, {{2, 3}, {4, 2}});
}

std::shared_ptr<const Instance> random_stochastic(int n, int m, uint64_t seed) {
  return std::make_shared<Instance>(stochasticize(generate_taillard(n, m, seed), seed + 1));
}

State random_partial_state(const std::shared_ptr<const Instance>& inst, int n_steps, Rng& rng) {
  State s = reset(inst);
  for (int t = 0; t < n_steps && !s.terminal(); ++t) {
    const auto mask = legal_actions(s);
    std::vector<int> legal;
    for (int i = 0; i < int(mask.size()); ++i) {
      if (mask[i]) legal.push_back(i);
    }
    apply_step(s, legal[rng.uniform_int(0, int(legal.size()) - 1)]);
  }
  return s;
}

}  // namespace

TEST_CASE("reset exposes the first operation of each job") {
  auto inst = toy3x3();
  State s = reset(inst);
  CHECK(s.step_count == 0);
  auto mask = legal_actions(s);
  CHECK(mask == std::vector<uint8_t>{1, 0, 0, 1, 0, 0, 1, 0, 0});
  CHECK(count_legal(s) == 3);

  State s2 = step(s, 0);
  CHECK(s2.step_count == 1);
  CHECK(s.step_count == 0);  // original untouched

  auto one = std::make_shared<Instance>(generate_taillard(1, 1, 3));
  CHECK(count_legal(reset(one)) == 1);
}

TEST_CASE("worked selection example: candidates after four dispatches") {
  auto inst = toy3x3();
  State s = reset(inst);
  for (int op : {0, 3, 4, 6}) apply_step(s, op);  // O00, O10, O11, O20
  auto mask = legal_actions(s);
  CHECK(mask == std::vector<uint8_t>{0, 1, 0, 0, 0, 1, 0, 1, 0});
  // Machine chains carry exactly the oriented pairs of the reduced selection.
  CHECK(s.machine_chain[0] == std::vector<int>{0, 4});
  CHECK(s.machine_chain[1].empty());
  CHECK(s.machine_chain[2] == std::vector<int>{3, 6});
}

TEST_CASE("legal_actions equals the candidate-set formula on random partial states") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + int(rng.uniform_int(0, 3));
    const int m = 2 + int(rng.uniform_int(0, 3));
    auto inst = std::make_shared<Instance>(generate_taillard(n, m, 500 + trial));
    State s = random_partial_state(inst, int(rng.uniform_int(0, n * m)), rng);
    CHECK(legal_actions(s) == oracle::candidate_mask(s));
  }
}

TEST_CASE("step rejects illegal actions with the violated condition") {
  auto inst = toy3x3();
  State s = reset(inst);
  apply_step(s, 0);
  CHECK_THROWS_WITH_AS(apply_step(s, 0), "step: operation already scheduled",
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(apply_step(s, 2), "step: job predecessor not scheduled yet",
                       std::invalid_argument);
  CHECK_THROWS_AS(apply_step(s, 99), std::invalid_argument);
}

TEST_CASE("episodes are exactly n_jobs x n_machines steps and chains partition ops") {
  Rng rng(7);
  auto inst = std::make_shared<Instance>(generate_taillard(4, 3, 9));
  State s = random_partial_state(inst, inst->n_ops(), rng);
  CHECK(s.terminal());
  CHECK(s.step_count == 12);
  CHECK(legal_actions(s) == std::vector<uint8_t>(12, 0));
  int chained = 0;
  for (const auto& c : s.machine_chain) {
    CHECK(int(c.size()) == inst->n_jobs);  // square instance: n ops per machine
    chained += int(c.size());
  }
  CHECK(chained == 12);
}

TEST_CASE("sgs on one machine is a chain sum") {
  auto inst = make_instance(2, 1, {{0}, {0}}, {{3}, {5}});
  State s = reset(inst);
  apply_step(s, inst->op_index(0, 0));
  apply_step(s, inst->op_index(1, 0));
  auto durs = mode_durations(*inst);
  Schedule sched = sgs_starts(s, durs);
  CHECK(sched.start[0] == 0.0);
  CHECK(sched.start[1] == 3.0);
  CHECK(sched.makespan() == 8.0);

  auto one = make_instance(1, 1, {{0}}, {{4}});
  State t = reset(one);
  apply_step(t, 0);
  CHECK(sgs_starts(t, mode_durations(*one)).makespan() == 4.0);
}

TEST_CASE("worked 2x2 instance reaches makespan 8") {
  auto inst = worked2x2();
  State s = reset(inst);
  for (int op : {0, 2, 1, 3}) apply_step(s, op);  // O00, O10, O01, O11
  Scenario mode{mode_durations(*inst)};
  CHECK(terminal_cost(s, mode) == 8.0);
  // Cross-check the same dispatch against the longest-path oracle and an
  // exhaustive scan of every dispatch sequence.
  CHECK(oracle::longest_path_makespan(s, mode.real) == 8.0);
  bool seen_this_sequence = false;
  oracle::enumerate_dispatch_sequences(inst, 1000, [&](const State& t) {
    CHECK(terminal_cost(t, mode) == oracle::longest_path_makespan(t, mode.real));
    if (t.dispatch_order == std::vector<int>{0, 2, 1, 3}) {
      seen_this_sequence = true;
      CHECK(terminal_cost(t, mode) == 8.0);
    }
  });
  CHECK(seen_this_sequence);
}

TEST_CASE("sgs equals longest path on every dispatch sequence of 3x3 instances") {
  for (uint64_t seed = 0; seed < 3; ++seed) {
    auto inst = std::make_shared<Instance>(generate_taillard(3, 3, 40 + seed));
    auto durs = mode_durations(*inst);
    int64_t n = oracle::enumerate_dispatch_sequences(inst, 100000, [&](const State& t) {
      Schedule sched = sgs_starts(t, durs);
      auto lp = oracle::longest_path_starts(t, durs);
      for (int i = 0; i < inst->n_ops(); ++i) CHECK(sched.start[i] == lp[i]);
    });
    CHECK(n == 1680);  // 9! / (3!)^3
  }
}

TEST_CASE("terminal_cost demands a terminal state and matches mode sgs") {
  auto inst = random_stochastic(3, 3, 77);
  State s = reset(inst);
  Scenario mode{mode_durations(*inst)};
  CHECK_THROWS_AS(terminal_cost(s, mode), std::invalid_argument);
  Rng rng(5);
  s = random_partial_state(inst, inst->n_ops(), rng);
  CHECK(terminal_cost(s, mode) == sgs_starts(s, mode.real).makespan());
}

TEST_CASE("sgs monotonicity bounds every sampled cost") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_stochastic(3, 4, 900 + trial);
    State s = random_partial_state(inst, inst->n_ops(), rng);
    const double lo = sgs_starts(s, min_durations(*inst)).makespan();
    const double hi = sgs_starts(s, max_durations(*inst)).makespan();
    CHECK(lo <= hi);
    for (int k = 0; k < 20; ++k) {
      const double real = terminal_cost(s, sample_scenario(*inst, trial * 100 + k));
      CHECK(real >= lo);
      CHECK(real <= hi);
    }
  }
}

TEST_CASE("partial sgs covers scheduled ops only") {
  auto inst = toy3x3();
  State s = reset(inst);
  apply_step(s, 0);
  apply_step(s, 3);
  Schedule sched = sgs_starts(s, mode_durations(*inst));
  CHECK(sched.start[0] == 0.0);
  CHECK(sched.start[3] == 0.0);
  CHECK(sched.start[1] == -1.0);
  CHECK(validate_schedule(*inst, sched).empty());
}

TEST_CASE("validate_schedule flags shifted starts") {
  auto inst = worked2x2();
  State s = reset(inst);
  for (int op : {0, 2, 1, 3}) apply_step(s, op);
  Schedule sched = sgs_starts(s, mode_durations(*inst));
  CHECK(validate_schedule(*inst, sched).empty());

  Schedule overlap = sched;
  overlap.start[2] = 1.0;  // job1 op0 now overlaps job0 op0 on machine 0
  auto v1 = validate_schedule(*inst, overlap);
  REQUIRE(v1.size() == 1);
  CHECK(v1[0].kind == Violation::Kind::MachineOverlap);
  CHECK(!v1[0].describe(*inst).empty());

  Schedule precedence = sched;
  precedence.start[1] = 0.0;  // job0 op1 starts before op0 completes
  auto v2 = validate_schedule(*inst, precedence);
  REQUIRE(!v2.empty());
  CHECK(v2[0].kind == Violation::Kind::JobPrecedence);
}

TEST_CASE("random policies always produce valid schedules") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = random_stochastic(2 + trial % 4, 2 + (trial / 2) % 4, 3000 + trial);
    State s = random_partial_state(inst, inst->n_ops(), rng);
    REQUIRE(s.terminal());
    CHECK(validate_schedule(*inst, sgs_starts(s, mode_durations(*inst))).empty());
    Scenario sc = sample_scenario(*inst, 71 + trial);
    CHECK(validate_schedule(*inst, sgs_starts(s, sc.real)).empty());
  }
}

TEST_CASE("schedule csv export") {
  auto inst = worked2x2();
  State s = reset(inst);
  for (int op : {0, 2, 1, 3}) apply_step(s, op);
  Schedule sched = sgs_starts(s, mode_durations(*inst));
  const std::string path =
      (std::filesystem::temp_directory_path() / "jssp_schedule.csv").string();
  write_schedule_csv(*inst, sched, path);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header == "job,rank,machine,start,duration,completion");
  int rows = 0;
  for (std::string line; std::getline(f, line);) ++rows;
  CHECK(rows == 4);
}
