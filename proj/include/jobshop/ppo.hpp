#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "jobshop/policy.hpp"

namespace jssp {

struct PPOConfig {
  double clip_eps = 0.2;
  double learning_rate = 2e-4;
  double entropy_coef = 0.005;
  double value_coef = 0.5;
  int minibatch_size = 128;
  int epochs = 8;
  double target_kl = 0.02;
  int episodes_per_iter = 64;
  double gamma = 1.0;
  double gae_lambda = 1.0;
  double reward_scale = 0.0;  // 0 selects 1 / (max duration * n_machines) per instance
  bool normalize_advantages = true;

  void validate() const;
};
void to_json(nlohmann::json& j, const PPOConfig& c);
void from_json(const nlohmann::json& j, PPOConfig& c);

struct StepRecord {
  State state;  // snapshot before the action
  int action = -1;
  double log_prob = 0.0;
  double value = 0.0;
  RewiredGraph graph;  // filled by rewire_trajectories before the update
};

struct Trajectory {
  std::shared_ptr<const Instance> instance;
  std::vector<StepRecord> steps;
  Scenario scenario;
  double cost = 0.0;          // sampled terminal makespan
  double reward_scale = 1.0;  // cost-to-reward scale used for this instance
};

// One episode per instance, actions sampled from the current policy.
// Episodes advance in lockstep as a single forward batch; per-episode RNG
// and scenario streams are derived from seed, so the result does not
// depend on batching or thread count.
template <typename Scalar>
std::vector<Trajectory> collect(const std::vector<std::shared_ptr<const Instance>>& instances,
                                const Network<Scalar>& net, uint64_t seed);

// Reference path: episodes one at a time, forward batches of one.
template <typename Scalar>
std::vector<Trajectory> collect_serial(
    const std::vector<std::shared_ptr<const Instance>>& instances, const Network<Scalar>& net,
    uint64_t seed);

// Greedy rollouts (argmax policy), no recording.
template <typename Scalar>
std::vector<State> rollout_argmax(const std::vector<std::shared_ptr<const Instance>>& instances,
                                  const Network<Scalar>& net);

struct StepTarget {
  double ret = 0.0;
  double advantage = 0.0;
};

// Monte-Carlo returns from the single terminal cost; GAE for lambda < 1.
std::vector<std::vector<StepTarget>> compute_advantages(const std::vector<Trajectory>& trajs,
                                                        const PPOConfig& cfg);

void rewire_trajectories(std::vector<Trajectory>& trajs, bool with_global_node);

template <typename Scalar>
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::vector<Scalar> m;
  std::vector<Scalar> v;

  explicit Adam(size_t n = 0) : m(n, Scalar(0)), v(n, Scalar(0)) {}
  void step(std::span<Scalar> params, std::span<const Scalar> grad, double lr);
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  int epochs_run = 0;
  bool aborted = false;  // non-finite loss; caller restores the snapshot
};

// Clipped-surrogate PPO update over shuffled minibatches with KL early
// stop: no epoch runs after the epoch-mean approximate KL exceeds
// target_kl.
template <typename Scalar>
UpdateStats ppo_update(const std::vector<Trajectory>& trajs,
                       const std::vector<std::vector<StepTarget>>& targets, Network<Scalar>& net,
                       Adam<Scalar>& adam, const PPOConfig& cfg, Rng& rng);

struct ValidationConfig {
  int instances = 20;
  int scenarios = 5;
};

struct TrainConfig {
  int jobs = 4;
  int machines = 4;
  bool stochastic = true;
  int iterations = 50;
  uint64_t seed = 1;
  int threads = 1;
  NetworkConfig network;
  PPOConfig ppo;
  ValidationConfig validation;

  void validate() const;
};
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_train_config(const std::string& path);

struct IterationRow {
  int iteration = 0;
  double mean_return = 0.0;
  double val_makespan = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double wall_time_s = 0.0;
};

struct TrainResult {
  std::vector<IterationRow> rows;
  double untrained_val = 0.0;
  double best_val = 0.0;
  int best_iteration = 0;
  double spt_val = 0.0;  // SPT baseline on the same validation set and scenarios
  std::string best_checkpoint;
  std::string last_checkpoint;
};

// Full training loop: fresh instances per iteration, collect -> returns ->
// advantages -> rewire -> update -> argmax validation. Writes metrics.csv,
// best.ckpt, last.ckpt and manifest.json under out_dir. resume_path
// continues from a last.ckpt written by a previous run with the same
// config and seed.
TrainResult train_loop(const TrainConfig& cfg, const std::string& out_dir,
                       const std::string& resume_path = "");

// Validation helper shared with the evaluation module: mean replay
// makespan of fixed terminal states over fixed scenarios (paired).
double mean_replay_makespan(const std::vector<State>& terminals,
                            const std::vector<std::vector<Scenario>>& scenarios);

}  // namespace jssp
