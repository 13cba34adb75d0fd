#include "jobshop/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "jobshop/baselines.hpp"
#include "jobshop/format.hpp"
#include "jobshop/parallel.hpp"

namespace jssp {

namespace {
// Seed streams. All randomness inside a run flows from the master seed.
constexpr uint64_t kInitStream = 11;
constexpr uint64_t kEpisodeStream = 12;
constexpr uint64_t kScenStream = 13;
constexpr uint64_t kTrainInstStream = 14;
constexpr uint64_t kTrainStochStream = 15;
constexpr uint64_t kValInstStream = 16;
constexpr uint64_t kValStochStream = 17;
constexpr uint64_t kValScenStream = 18;
constexpr uint64_t kShuffleStream = 19;

double cost_scale(const Instance& inst, const PPOConfig& cfg) {
  if (cfg.reward_scale > 0.0) return cfg.reward_scale;
  return 1.0 / (inst.max_duration() * inst.n_machines);
}
}  // namespace

void PPOConfig::validate() const {
  if (!(clip_eps > 0.0)) throw std::invalid_argument("clip_eps must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw std::invalid_argument("gae_lambda must be in [0, 1]");
  }
  if (minibatch_size < 1 || epochs < 1 || episodes_per_iter < 1) {
    throw std::invalid_argument("minibatch_size, epochs, episodes_per_iter must be >= 1");
  }
}

void to_json(nlohmann::json& j, const PPOConfig& c) {
  j = {{"clip_eps", c.clip_eps},
       {"learning_rate", c.learning_rate},
       {"entropy_coef", c.entropy_coef},
       {"value_coef", c.value_coef},
       {"minibatch_size", c.minibatch_size},
       {"epochs", c.epochs},
       {"target_kl", c.target_kl},
       {"episodes_per_iter", c.episodes_per_iter},
       {"gamma", c.gamma},
       {"gae_lambda", c.gae_lambda},
       {"reward_scale", c.reward_scale},
       {"normalize_advantages", c.normalize_advantages}};
}

void from_json(const nlohmann::json& j, PPOConfig& c) {
  c = PPOConfig{};
  for (auto& [key, val] : j.items()) {
    if (key == "clip_eps") val.get_to(c.clip_eps);
    else if (key == "learning_rate") val.get_to(c.learning_rate);
    else if (key == "entropy_coef") val.get_to(c.entropy_coef);
    else if (key == "value_coef") val.get_to(c.value_coef);
    else if (key == "minibatch_size") val.get_to(c.minibatch_size);
    else if (key == "epochs") val.get_to(c.epochs);
    else if (key == "target_kl") val.get_to(c.target_kl);
    else if (key == "episodes_per_iter") val.get_to(c.episodes_per_iter);
    else if (key == "gamma") val.get_to(c.gamma);
    else if (key == "gae_lambda") val.get_to(c.gae_lambda);
    else if (key == "reward_scale") val.get_to(c.reward_scale);
    else if (key == "normalize_advantages") val.get_to(c.normalize_advantages);
    else throw std::invalid_argument("unknown ppo config key '" + key + "'");
  }
}

namespace {

template <typename Scalar>
std::vector<Trajectory> collect_impl(const std::vector<std::shared_ptr<const Instance>>& instances,
                                     const Network<Scalar>& net, uint64_t seed, bool lockstep) {
  const int B = static_cast<int>(instances.size());
  std::vector<Trajectory> out(B);
  if (B == 0) return out;
  const int T = instances[0]->n_ops();
  for (const auto& inst : instances) {
    if (inst->n_ops() != T) {
      throw std::invalid_argument("collect: instances must share one size per batch");
    }
  }
  const bool global = net.cfg.uses_global_node();

  auto run_group = [&](int begin, int end) {
    const int nb = end - begin;
    std::vector<State> states;
    states.reserve(nb);
    std::vector<Rng> rngs;
    for (int e = begin; e < end; ++e) {
      states.push_back(reset(instances[e]));
      rngs.emplace_back(derive_seed(seed, kEpisodeStream, e));
      out[e].instance = instances[e];
      out[e].steps.reserve(T);
    }
    std::vector<RewiredGraph> graphs(nb);
    std::vector<const RewiredGraph*> ptrs(nb);
    typename Network<Scalar>::Workspace ws;
    for (int t = 0; t < T; ++t) {
#pragma omp parallel for schedule(static)
      for (int i = 0; i < nb; ++i) graphs[i] = features(states[i], global);
      for (int i = 0; i < nb; ++i) ptrs[i] = &graphs[i];
      GraphBatch batch = GraphBatch::build(ptrs);
      net.forward(batch, ws, false);
      for (int i = 0; i < nb; ++i) {
        const int b0 = batch.node_begin[i];
        const int b1 = batch.node_begin[i + 1];
        std::vector<double> logits(ws.logits.begin() + b0, ws.logits.begin() + b1);
        std::span<const uint8_t> mask(batch.mask.data() + b0, b1 - b0);
        MaskedDist dist = masked_distribution(logits, mask);
        const int a = sample_masked(dist, mask, rngs[i]);
        out[begin + i].steps.push_back(
            StepRecord{states[i], a, dist.log_probs[a], double(ws.values[i]), {}});
        apply_step(states[i], a);
      }
    }
    for (int i = 0; i < nb; ++i) {
      const int e = begin + i;
      out[e].scenario = sample_scenario(*instances[e], derive_seed(seed, kScenStream, e));
      out[e].cost = terminal_cost(states[i], out[e].scenario);
    }
  };

  if (lockstep) {
    run_group(0, B);
  } else {
    for (int e = 0; e < B; ++e) run_group(e, e + 1);
  }
  return out;
}

}  // namespace

template <typename Scalar>
std::vector<Trajectory> collect(const std::vector<std::shared_ptr<const Instance>>& instances,
                                const Network<Scalar>& net, uint64_t seed) {
  return collect_impl(instances, net, seed, true);
}

template <typename Scalar>
std::vector<Trajectory> collect_serial(
    const std::vector<std::shared_ptr<const Instance>>& instances, const Network<Scalar>& net,
    uint64_t seed) {
  return collect_impl(instances, net, seed, false);
}

template <typename Scalar>
std::vector<State> rollout_argmax(const std::vector<std::shared_ptr<const Instance>>& instances,
                                  const Network<Scalar>& net) {
  const int B = static_cast<int>(instances.size());
  std::vector<State> states;
  states.reserve(B);
  for (const auto& inst : instances) states.push_back(reset(inst));
  if (B == 0) return states;
  const int T = instances[0]->n_ops();
  for (const auto& inst : instances) {
    if (inst->n_ops() != T) {
      throw std::invalid_argument("rollout_argmax: instances must share one size");
    }
  }
  const bool global = net.cfg.uses_global_node();
  std::vector<RewiredGraph> graphs(B);
  std::vector<const RewiredGraph*> ptrs(B);
  typename Network<Scalar>::Workspace ws;
  for (int t = 0; t < T; ++t) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < B; ++i) graphs[i] = features(states[i], global);
    for (int i = 0; i < B; ++i) ptrs[i] = &graphs[i];
    GraphBatch batch = GraphBatch::build(ptrs);
    net.forward(batch, ws, false);
    for (int i = 0; i < B; ++i) {
      const int b0 = batch.node_begin[i];
      const int b1 = batch.node_begin[i + 1];
      std::vector<double> logits(ws.logits.begin() + b0, ws.logits.begin() + b1);
      std::span<const uint8_t> mask(batch.mask.data() + b0, b1 - b0);
      apply_step(states[i], argmax_masked(logits, mask));
    }
  }
  return states;
}

std::vector<std::vector<StepTarget>> compute_advantages(const std::vector<Trajectory>& trajs,
                                                        const PPOConfig& cfg) {
  std::vector<std::vector<StepTarget>> out(trajs.size());
  for (size_t i = 0; i < trajs.size(); ++i) {
    const Trajectory& tr = trajs[i];
    const int T = static_cast<int>(tr.steps.size());
    out[i].resize(T);
    const double terminal_reward = -tr.cost * cost_scale(*tr.instance, cfg);
    double adv = 0.0;
    double next_value = 0.0;  // terminal state has value 0
    for (int t = T - 1; t >= 0; --t) {
      const double r = t == T - 1 ? terminal_reward : 0.0;
      const double delta = r + cfg.gamma * next_value - tr.steps[t].value;
      adv = delta + cfg.gamma * cfg.gae_lambda * adv;
      out[i][t] = {adv + tr.steps[t].value, adv};
      next_value = tr.steps[t].value;
    }
  }
  return out;
}

void rewire_trajectories(std::vector<Trajectory>& trajs, bool with_global_node) {
  std::vector<StepRecord*> steps;
  for (auto& tr : trajs) {
    for (auto& s : tr.steps) steps.push_back(&s);
  }
  const int n = static_cast<int>(steps.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    steps[i]->graph = features(steps[i]->state, with_global_node);
  }
}

template <typename Scalar>
void Adam<Scalar>::step(std::span<Scalar> params, std::span<const Scalar> grad, double lr) {
  t += 1;
  const double bc1 = 1.0 - std::pow(beta1, double(t));
  const double bc2 = 1.0 - std::pow(beta2, double(t));
  const int n = static_cast<int>(params.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const double g = double(grad[i]);
    const double mi = beta1 * double(m[i]) + (1.0 - beta1) * g;
    const double vi = beta2 * double(v[i]) + (1.0 - beta2) * g * g;
    m[i] = Scalar(mi);
    v[i] = Scalar(vi);
    params[i] -= Scalar(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
  }
}

template <typename Scalar>
UpdateStats ppo_update(const std::vector<Trajectory>& trajs,
                       const std::vector<std::vector<StepTarget>>& targets, Network<Scalar>& net,
                       Adam<Scalar>& adam, const PPOConfig& cfg, Rng& rng) {
  UpdateStats stats;
  struct Point {
    const StepRecord* step;
    double ret;
    double adv;
  };
  std::vector<Point> data;
  for (size_t i = 0; i < trajs.size(); ++i) {
    for (size_t t = 0; t < trajs[i].steps.size(); ++t) {
      data.push_back({&trajs[i].steps[t], targets[i][t].ret, targets[i][t].advantage});
    }
  }
  const int n_data = static_cast<int>(data.size());
  if (n_data == 0) return stats;

  std::vector<int> idx(n_data);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<Scalar> grad(net.n_params());
  typename Network<Scalar>::Workspace ws;

  double sum_policy = 0, sum_value = 0, sum_entropy = 0, sum_kl = 0, sum_clip = 0;
  int64_t n_processed = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(idx);
    double epoch_kl = 0.0;
    int64_t epoch_points = 0;
    for (int mb_begin = 0; mb_begin < n_data; mb_begin += cfg.minibatch_size) {
      const int mb_end = std::min(n_data, mb_begin + cfg.minibatch_size);
      const int mb = mb_end - mb_begin;
      std::vector<const RewiredGraph*> ptrs(mb);
      for (int d = 0; d < mb; ++d) ptrs[d] = &data[idx[mb_begin + d]].step->graph;
      GraphBatch batch = GraphBatch::build(ptrs);

      double adv_mean = 0.0, adv_std = 1.0;
      if (cfg.normalize_advantages) {
        double s1 = 0.0, s2 = 0.0;
        for (int d = 0; d < mb; ++d) s1 += data[idx[mb_begin + d]].adv;
        adv_mean = s1 / mb;
        for (int d = 0; d < mb; ++d) {
          const double a = data[idx[mb_begin + d]].adv - adv_mean;
          s2 += a * a;
        }
        adv_std = std::sqrt(s2 / mb) + 1e-8;
      }

      bool ok = true;
      try {
        net.forward(batch, ws, true);
        std::vector<Scalar> dlogits(batch.n_nodes, Scalar(0));
        std::vector<Scalar> dvalues(mb, Scalar(0));
        double mb_loss = 0.0;
        for (int d = 0; d < mb; ++d) {
          const Point& pt = data[idx[mb_begin + d]];
          const int b0 = batch.node_begin[d];
          const int b1 = batch.node_begin[d + 1];
          std::vector<double> logits(ws.logits.begin() + b0, ws.logits.begin() + b1);
          std::span<const uint8_t> mask(batch.mask.data() + b0, b1 - b0);
          MaskedDist dist = masked_distribution(logits, mask);
          const int a = pt.step->action;
          const double lp_new = dist.log_probs[a];
          const double ratio = std::exp(lp_new - pt.step->log_prob);
          const double adv = (pt.adv - adv_mean) / adv_std;
          const double unclipped = ratio * adv;
          const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
          const double surr = std::min(unclipped, clipped);
          const double value = double(ws.values[d]);
          const double verr = value - pt.ret;
          const double entropy = dist.entropy;

          mb_loss += -surr + cfg.value_coef * verr * verr - cfg.entropy_coef * entropy;
          sum_policy += -surr;
          sum_value += verr * verr;
          sum_entropy += entropy;
          sum_kl += (ratio - 1.0) - std::log(ratio);
          sum_clip += std::abs(ratio - 1.0) > cfg.clip_eps ? 1.0 : 0.0;
          epoch_kl += (ratio - 1.0) - std::log(ratio);

          // d(loss)/d(logit): policy term through the masked softmax plus
          // the entropy bonus; illegal logits stay zero.
          const double g = unclipped <= clipped ? unclipped : 0.0;
          for (int jl = 0; jl < b1 - b0; ++jl) {
            if (!mask[jl]) continue;
            const double lp = dist.log_probs[jl];
            const double p = std::exp(lp);
            const double indicator = jl == a ? 1.0 : 0.0;
            const double dl =
                (-g * (indicator - p) + cfg.entropy_coef * p * (lp + entropy)) / mb;
            dlogits[b0 + jl] = Scalar(dl);
          }
          dvalues[d] = Scalar(2.0 * cfg.value_coef * verr / mb);
        }
        if (!std::isfinite(mb_loss)) {
          ok = false;
        } else {
          std::fill(grad.begin(), grad.end(), Scalar(0));
          net.backward(batch, ws, dlogits, dvalues, grad);
          adam.step(net.params, grad, cfg.learning_rate);
        }
      } catch (const std::runtime_error&) {
        ok = false;  // non-finite activations
      }
      if (!ok) {
        stats.aborted = true;
        return stats;
      }
      n_processed += mb;
      epoch_points += mb;
    }
    stats.epochs_run += 1;
    if (epoch_points > 0 && epoch_kl / double(epoch_points) > cfg.target_kl) break;
  }

  if (n_processed > 0) {
    stats.policy_loss = sum_policy / double(n_processed);
    stats.value_loss = sum_value / double(n_processed);
    stats.entropy = sum_entropy / double(n_processed);
    stats.approx_kl = sum_kl / double(n_processed);
    stats.clip_fraction = sum_clip / double(n_processed);
  }
  return stats;
}

double mean_replay_makespan(const std::vector<State>& terminals,
                            const std::vector<std::vector<Scenario>>& scenarios) {
  const int n = static_cast<int>(terminals.size());
  std::vector<double> per_instance(n, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (const Scenario& sc : scenarios[i]) s += sgs_replay(terminals[i], sc);
    per_instance[i] = s;
  }
  double total = 0.0;
  int64_t count = 0;
  for (int i = 0; i < n; ++i) {
    total += per_instance[i];
    count += scenarios[i].size();
  }
  return total / double(count);
}

void TrainConfig::validate() const {
  if (jobs < 1 || machines < 1) throw std::invalid_argument("jobs, machines must be >= 1");
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  network.validate();
  ppo.validate();
  if (validation.instances < 1 || validation.scenarios < 1) {
    throw std::invalid_argument("validation instances/scenarios must be >= 1");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"jobs", c.jobs},
       {"machines", c.machines},
       {"stochastic", c.stochastic},
       {"iterations", c.iterations},
       {"seed", c.seed},
       {"threads", c.threads},
       {"network", c.network},
       {"ppo", c.ppo},
       {"validation",
        {{"instances", c.validation.instances}, {"scenarios", c.validation.scenarios}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  if (j.contains("jobs")) j.at("jobs").get_to(c.jobs);
  if (j.contains("machines")) j.at("machines").get_to(c.machines);
  if (j.contains("stochastic")) j.at("stochastic").get_to(c.stochastic);
  if (j.contains("iterations")) j.at("iterations").get_to(c.iterations);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("threads")) j.at("threads").get_to(c.threads);
  if (j.contains("network")) j.at("network").get_to(c.network);
  if (j.contains("ppo")) j.at("ppo").get_to(c.ppo);
  if (j.contains("validation")) {
    const auto& v = j.at("validation");
    if (v.contains("instances")) v.at("instances").get_to(c.validation.instances);
    if (v.contains("scenarios")) v.at("scenarios").get_to(c.validation.scenarios);
  }
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open config");
  nlohmann::json j = nlohmann::json::parse(in);
  TrainConfig cfg = j.get<TrainConfig>();
  cfg.validate();
  return cfg;
}

namespace {

struct ValidationSet {
  std::vector<std::shared_ptr<const Instance>> instances;
  std::vector<std::vector<Scenario>> scenarios;
};

ValidationSet make_validation_set(const TrainConfig& cfg) {
  ValidationSet vs;
  for (int i = 0; i < cfg.validation.instances; ++i) {
    Instance inst = generate_taillard(cfg.jobs, cfg.machines,
                                      derive_seed(cfg.seed, kValInstStream, i));
    if (cfg.stochastic) inst = stochasticize(inst, derive_seed(cfg.seed, kValStochStream, i));
    auto sp = std::make_shared<Instance>(std::move(inst));
    std::vector<Scenario> scens;
    for (int k = 0; k < cfg.validation.scenarios; ++k) {
      scens.push_back(sample_scenario(
          *sp, derive_seed(cfg.seed, kValScenStream, uint64_t(i) * 100000 + k)));
    }
    vs.instances.push_back(std::move(sp));
    vs.scenarios.push_back(std::move(scens));
  }
  return vs;
}

std::string metrics_row(const IterationRow& r) {
  std::string s = std::to_string(r.iteration);
  for (double v : {r.mean_return, r.val_makespan, r.policy_loss, r.value_loss, r.entropy,
                   r.approx_kl, r.clip_fraction, r.wall_time_s}) {
    s += ',' + format_double(v);
  }
  return s;
}

}  // namespace

TrainResult train_loop(const TrainConfig& cfg, const std::string& out_dir,
                       const std::string& resume_path) {
  cfg.validate();
  set_threads(cfg.threads);
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  TrainResult result;
  Network<float> net = Network<float>::zeros(cfg.network);
  Adam<float> adam(net.n_params());
  int start_iteration = 1;
  double best_val = std::numeric_limits<double>::infinity();
  int best_iteration = 0;
  double untrained_val = 0.0;

  nlohmann::json cfg_json = cfg;
  if (!resume_path.empty()) {
    auto lc = load_checkpoint<float>(resume_path);
    nlohmann::json stored = lc.meta.at("train_config");
    nlohmann::json current = cfg_json;
    for (auto* j : {&stored, &current}) {
      j->erase("iterations");
      j->erase("threads");
    }
    if (stored != current) {
      throw std::runtime_error("resume: config does not match the checkpoint");
    }
    net = std::move(lc.net);
    if (!lc.adam_m || !lc.adam_v) throw std::runtime_error("resume: checkpoint lacks optimizer state");
    adam.m = std::move(*lc.adam_m);
    adam.v = std::move(*lc.adam_v);
    adam.t = lc.meta.at("adam_t").get<int64_t>();
    start_iteration = lc.meta.at("iteration").get<int>() + 1;
    best_val = lc.meta.at("best_val").get<double>();
    best_iteration = lc.meta.at("best_iteration").get<int>();
    untrained_val = lc.meta.at("untrained_val").get<double>();
  } else {
    net = Network<float>::random_init(cfg.network, derive_seed(cfg.seed, kInitStream));
  }

  ValidationSet vs = make_validation_set(cfg);
  // SPT reference on the same paired scenario set.
  std::vector<State> spt_terminals;
  for (const auto& inst : vs.instances) spt_terminals.push_back(pdr_dispatch(*inst, Rule::SPT));
  result.spt_val = mean_replay_makespan(spt_terminals, vs.scenarios);

  const std::string metrics_path = out_dir + "/metrics.csv";
  const std::string best_path = out_dir + "/best.ckpt";
  const std::string last_path = out_dir + "/last.ckpt";
  std::ofstream metrics(metrics_path, resume_path.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw std::runtime_error(metrics_path + ": cannot open for writing");

  {
    nlohmann::json manifest = {{"command", "train"},
                               {"config", cfg_json},
                               {"out_dir", out_dir},
                               {"resume", resume_path},
                               {"feature_schema", kFeatureSchemaVersion},
                               {"version", "0.1.0"}};
    std::ofstream mf(out_dir + "/manifest.json");
    mf << manifest.dump(2) << '\n';
  }

  auto validate_now = [&]() {
    std::vector<State> terms = rollout_argmax(vs.instances, net);
    return mean_replay_makespan(terms, vs.scenarios);
  };
  auto meta_for = [&](int iteration) {
    return nlohmann::json{{"iteration", iteration},      {"best_val", best_val},
                          {"best_iteration", best_iteration}, {"untrained_val", untrained_val},
                          {"spt_val", result.spt_val},   {"adam_t", adam.t},
                          {"train_config", cfg_json}};
  };

  if (resume_path.empty()) {
    const auto t0 = std::chrono::steady_clock::now();
    untrained_val = validate_now();
    best_val = untrained_val;
    best_iteration = 0;
    save_checkpoint(best_path, net, meta_for(0));
    metrics << "iteration,mean_return,val_makespan,policy_loss,value_loss,entropy,approx_kl,"
               "clip_fraction,wall_time_s\n";
    IterationRow row0;
    row0.iteration = 0;
    row0.val_makespan = untrained_val;
    row0.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics << metrics_row(row0) << '\n' << std::flush;
    result.rows.push_back(row0);
  }
  result.untrained_val = untrained_val;

  for (int iter = start_iteration; iter <= cfg.iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::shared_ptr<const Instance>> instances;
    const uint64_t iter_inst_seed = derive_seed(cfg.seed, kTrainInstStream, iter);
    const uint64_t iter_stoch_seed = derive_seed(cfg.seed, kTrainStochStream, iter);
    for (int e = 0; e < cfg.ppo.episodes_per_iter; ++e) {
      Instance inst = generate_taillard(cfg.jobs, cfg.machines, derive_seed(iter_inst_seed, 0, e));
      if (cfg.stochastic) inst = stochasticize(inst, derive_seed(iter_stoch_seed, 0, e));
      instances.push_back(std::make_shared<Instance>(std::move(inst)));
    }

    std::vector<Trajectory> trajs =
        collect(instances, net, derive_seed(cfg.seed, kEpisodeStream, iter));
    auto targets = compute_advantages(trajs, cfg.ppo);
    rewire_trajectories(trajs, net.cfg.uses_global_node());

    double mean_return = 0.0;
    for (const auto& tr : trajs) mean_return += -tr.cost * cost_scale(*tr.instance, cfg.ppo);
    mean_return /= double(trajs.size());

    const std::vector<float> params_snapshot = net.params;
    const std::vector<float> m_snapshot = adam.m;
    const std::vector<float> v_snapshot = adam.v;
    const int64_t t_snapshot = adam.t;

    Rng update_rng(derive_seed(cfg.seed, kShuffleStream, iter));
    UpdateStats stats = ppo_update(trajs, targets, net, adam, cfg.ppo, update_rng);
    if (stats.aborted) {
      net.params = params_snapshot;
      adam.m = m_snapshot;
      adam.v = v_snapshot;
      adam.t = t_snapshot;
    }

    const double val = validate_now();
    if (val < best_val) {
      best_val = val;
      best_iteration = iter;
      save_checkpoint(best_path, net, meta_for(iter));
    }
    save_checkpoint(last_path, net, meta_for(iter), &adam.m, &adam.v);

    IterationRow row;
    row.iteration = iter;
    row.mean_return = mean_return;
    row.val_makespan = val;
    row.policy_loss = stats.policy_loss;
    row.value_loss = stats.value_loss;
    row.entropy = stats.entropy;
    row.approx_kl = stats.approx_kl;
    row.clip_fraction = stats.clip_fraction;
    row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics << metrics_row(row) << '\n' << std::flush;
    result.rows.push_back(row);
  }

  result.best_val = best_val;
  result.best_iteration = best_iteration;
  result.best_checkpoint = best_path;
  result.last_checkpoint = last_path;
  return result;
}

template std::vector<Trajectory> collect<float>(
    const std::vector<std::shared_ptr<const Instance>>&, const Network<float>&, uint64_t);
template std::vector<Trajectory> collect<double>(
    const std::vector<std::shared_ptr<const Instance>>&, const Network<double>&, uint64_t);
template std::vector<Trajectory> collect_serial<float>(
    const std::vector<std::shared_ptr<const Instance>>&, const Network<float>&, uint64_t);
template std::vector<Trajectory> collect_serial<double>(
    const std::vector<std::shared_ptr<const Instance>>&, const Network<double>&, uint64_t);
template std::vector<State> rollout_argmax<float>(
    const std::vector<std::shared_ptr<const Instance>>&, const Network<float>&);
template std::vector<State> rollout_argmax<double>(
    const std::vector<std::shared_ptr<const Instance>>&, const Network<double>&);
template struct Adam<float>;
template struct Adam<double>;
template UpdateStats ppo_update<float>(const std::vector<Trajectory>&,
                                       const std::vector<std::vector<StepTarget>>&,
                                       Network<float>&, Adam<float>&, const PPOConfig&, Rng&);
template UpdateStats ppo_update<double>(const std::vector<Trajectory>&,
                                        const std::vector<std::vector<StepTarget>>&,
                                        Network<double>&, Adam<double>&, const PPOConfig&, Rng&);

}  // namespace jssp
