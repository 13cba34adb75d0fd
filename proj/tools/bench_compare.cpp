// Wall-time comparison of the serial and OpenMP paths for the three hot
// loops: batched policy forward/backward, episode collection, and
// scenario replay. The outputs are identical by construction; this only
// measures throughput.

#include <chrono>
#include <cstdio>
#include <vector>

#include "jobshop/baselines.hpp"
#include "jobshop/parallel.hpp"
#include "jobshop/ppo.hpp"

using namespace jssp;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Timing {
  const char* name;
  double serial_s;
  double parallel_s;
};

std::vector<std::shared_ptr<const Instance>> make_instances(int count, int n, int m) {
  std::vector<std::shared_ptr<const Instance>> out;
  for (int i = 0; i < count; ++i) {
    out.push_back(std::make_shared<Instance>(
        stochasticize(generate_taillard(n, m, derive_seed(1, 0, i)), derive_seed(1, 1, i))));
  }
  return out;
}

template <typename Fn>
double timed(int threads, int repeat, Fn&& fn) {
  set_threads(threads);
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < repeat; ++r) fn();
  return seconds_since(t0) / repeat;
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 2;
  int repeat = 3;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--threads") threads = std::atoi(argv[i + 1]);
    if (flag == "--repeat") repeat = std::atoi(argv[i + 1]);
  }

  std::vector<Timing> timings;
  NetworkConfig nc;  // defaults: 10 layers, hidden 64, 4 heads
  auto net = NetworkF::random_init(nc, 7);

  {
    auto instances = make_instances(64, 6, 6);
    std::vector<Trajectory> trajs = collect(instances, net, 3);
    auto targets = compute_advantages(trajs, PPOConfig{});
    rewire_trajectories(trajs, false);
    std::vector<const RewiredGraph*> ptrs;
    for (const auto& tr : trajs) {
      for (const auto& s : tr.steps) ptrs.push_back(&s.graph);
    }
    ptrs.resize(128);
    GraphBatch batch = GraphBatch::build(ptrs);
    NetworkF::Workspace ws;
    std::vector<float> grad(net.n_params());
    std::vector<float> dlogits(batch.n_nodes, 1e-3f), dvalues(batch.n_graphs, 1e-3f);
    auto fwd_bwd = [&] {
      net.forward(batch, ws, true);
      std::fill(grad.begin(), grad.end(), 0.0f);
      net.backward(batch, ws, dlogits, dvalues, grad);
    };
    timings.push_back({"forward+backward, 128-graph 6x6 batch", timed(1, repeat, fwd_bwd),
                       timed(threads, repeat, fwd_bwd)});
  }

  {
    auto instances = make_instances(32, 6, 6);
    auto collect_once = [&] { collect(instances, net, 11); };
    timings.push_back({"collection, 32 episodes 6x6", timed(1, repeat, collect_once),
                       timed(threads, repeat, collect_once)});
  }

  {
    auto instances = make_instances(200, 6, 6);
    std::vector<State> terminals;
    std::vector<std::vector<Scenario>> scenarios;
    for (const auto& inst : instances) {
      terminals.push_back(pdr_dispatch(*inst, Rule::SPT));
      std::vector<Scenario> scens;
      for (int k = 0; k < 100; ++k) scens.push_back(sample_scenario(*inst, k));
      scenarios.push_back(std::move(scens));
    }
    volatile double sink = 0.0;
    auto replay = [&] { sink = mean_replay_makespan(terminals, scenarios); };
    timings.push_back({"scenario replay, 200 instances x 100 scenarios",
                       timed(1, repeat, replay), timed(threads, repeat, replay)});
    (void)sink;
  }

  std::printf("%-46s %10s %10s %8s\n", "kernel", "serial", "threads", "speedup");
  for (const auto& t : timings) {
    std::printf("%-46s %9.3fs %9.3fs %7.2fx\n", t.name, t.serial_s, t.parallel_s,
                t.serial_s / t.parallel_s);
  }
  return 0;
}
