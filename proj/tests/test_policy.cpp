#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "jobshop/policy.hpp"
#include "jobshop/rng.hpp"
#include "oracles.hpp"

using namespace jssp;

namespace {

NetworkConfig small_config(Pooling pooling = Pooling::MeanMax) {
  NetworkConfig cfg;
  cfg.hidden_dim = 8;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.embed_layers = 2;
  cfg.machine_emb_dim = 4;
  cfg.max_machines = 8;
  cfg.pooling = pooling;
  return cfg;
}

std::shared_ptr<const Instance> random_instance(int n, int m, uint64_t seed) {
  return std::make_shared<Instance>(stochasticize(generate_taillard(n, m, seed), seed + 1));
}

State random_partial(std::shared_ptr<const Instance> inst, int steps, uint64_t seed) {
  Rng rng(seed);
  State s = reset(inst);
  for (int t = 0; t < steps && !s.terminal(); ++t) {
    auto mask = legal_actions(s);
    std::vector<int> legal;
    for (int i = 0; i < int(mask.size()); ++i) {
      if (mask[i]) legal.push_back(i);
    }
    apply_step(s, legal[rng.uniform_int(0, int(legal.size()) - 1)]);
  }
  return s;
}

// Relabels nodes with new_id = perm[old_id].
RewiredGraph permute_graph(const RewiredGraph& g, const std::vector<int>& perm) {
  RewiredGraph out;
  out.n_nodes = g.n_nodes;
  out.global_node = g.global_node >= 0 ? perm[g.global_node] : -1;
  out.src.resize(g.n_edges());
  out.dst.resize(g.n_edges());
  out.type = g.type;
  for (int e = 0; e < g.n_edges(); ++e) {
    out.src[e] = perm[g.src[e]];
    out.dst[e] = perm[g.dst[e]];
  }
  out.feat.resize(g.feat.size());
  out.machine_id.resize(g.n_nodes);
  out.mask.resize(g.n_nodes);
  for (int i = 0; i < g.n_nodes; ++i) {
    for (int f = 0; f < kFeatCount; ++f) {
      out.feat[size_t(perm[i]) * kFeatCount + f] = g.feat[size_t(i) * kFeatCount + f];
    }
    out.machine_id[perm[i]] = g.machine_id[i];
    out.mask[perm[i]] = g.mask[i];
  }
  return out;
}

// Scalar loss exercising the policy, entropy and value paths at once.
template <typename Scalar>
double policy_loss(const Network<Scalar>& net, const RewiredGraph& g, int action) {
  PolicyOutput po = forward_policy(net, g);
  return po.log_probs[action] + 0.7 * po.value + 0.3 * po.entropy;
}

// Upstream gradients of the same loss, pushed through backward().
template <typename Scalar>
std::vector<Scalar> analytic_gradient(const Network<Scalar>& net, const RewiredGraph& g,
                                      int action) {
  GraphBatch batch = GraphBatch::build(g);
  typename Network<Scalar>::Workspace ws;
  net.forward(batch, ws, true);
  std::vector<double> logits(ws.logits.begin(), ws.logits.end());
  MaskedDist dist = masked_distribution(logits, batch.mask);
  std::vector<Scalar> dlogits(batch.n_nodes, Scalar(0));
  for (int j = 0; j < batch.n_nodes; ++j) {
    if (!batch.mask[j]) continue;
    const double p = std::exp(dist.log_probs[j]);
    const double dlp = (j == action ? 1.0 : 0.0) - p;             // d log_prob[action]
    const double dent = -p * (dist.log_probs[j] + dist.entropy);  // d entropy
    dlogits[j] = Scalar(dlp + 0.3 * dent);
  }
  std::vector<Scalar> dvalues{Scalar(0.7)};
  std::vector<Scalar> grad(net.n_params(), Scalar(0));
  net.backward(batch, ws, dlogits, dvalues, grad);
  return grad;
}

int first_legal(const RewiredGraph& g) {
  for (int i = 0; i < g.n_nodes; ++i) {
    if (g.mask[i]) return i;
  }
  return -1;
}

}  // namespace

TEST_CASE("masked distribution: legal mass sums to one, illegal exactly zero") {
  std::vector<double> logits{2.0, -1.0, 0.5, 3.0};
  std::vector<uint8_t> mask{1, 0, 1, 0};
  MaskedDist d = masked_distribution(logits, mask);
  CHECK(std::exp(d.log_probs[0]) + std::exp(d.log_probs[2]) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::exp(d.log_probs[1]) == 0.0);
  CHECK(std::exp(d.log_probs[3]) == 0.0);
  CHECK(d.entropy > 0.0);
  std::vector<uint8_t> none{0, 0, 0, 0};
  CHECK_THROWS_AS(masked_distribution(logits, none), std::invalid_argument);
}

TEST_CASE("argmax respects the mask and breaks ties low") {
  std::vector<double> logits{5.0, 1.0, 1.0};
  std::vector<uint8_t> all{1, 1, 1};
  CHECK(argmax_masked(logits, all) == 0);
  std::vector<uint8_t> no_first{0, 1, 1};
  CHECK(argmax_masked(logits, no_first) == 1);  // best legal, tie -> lowest index
}

TEST_CASE("uniform logits sample uniformly (chi-squared)") {
  MaskedDist d = masked_distribution(std::vector<double>{0, 0, 0, 0},
                                     std::vector<uint8_t>{1, 0, 1, 1});
  std::vector<uint8_t> mask{1, 0, 1, 1};
  Rng rng(99);
  std::vector<int> counts(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[sample_masked(d, mask, rng)] += 1;
  CHECK(counts[1] == 0);
  const double expected = n / 3.0;
  double chi2 = 0.0;
  for (int i : {0, 2, 3}) chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
  CHECK(chi2 < 13.8);  // df=2, alpha=0.001
}

TEST_CASE("single node graph gets probability one") {
  auto inst = std::make_shared<Instance>(generate_taillard(1, 1, 1));
  auto net = NetworkD::random_init(small_config(), 3);
  PolicyOutput po = forward_policy(net, features(reset(inst)));
  CHECK(po.log_probs[0] == 0.0);
  CHECK(po.entropy == 0.0);
  ActResult r = act(net, features(reset(inst)), ActMode::Argmax, nullptr);
  CHECK(r.action == 0);
}

TEST_CASE("zero-initialized network is uniform over legal actions") {
  auto inst = random_instance(3, 3, 5);
  auto net = NetworkF::zeros(small_config());
  RewiredGraph g = features(reset(inst));
  PolicyOutput po = forward_policy(net, g);
  for (int i = 0; i < g.n_nodes; ++i) {
    if (g.mask[i]) CHECK(std::exp(po.log_probs[i]) == doctest::Approx(1.0 / 3).epsilon(1e-6));
  }
  // All logits tie, so argmax takes the lowest legal node.
  CHECK(act(net, g, ActMode::Argmax, nullptr).action == first_legal(g));
}

TEST_CASE("act in sample mode follows the masked distribution") {
  auto inst = random_instance(3, 3, 15);
  auto net = NetworkF::random_init(small_config(), 16);
  RewiredGraph g = features(reset(inst));
  PolicyOutput po = forward_policy(net, g);
  Rng rng(17);
  std::vector<int> counts(g.n_nodes, 0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    ActResult r = act(net, g, ActMode::Sample, &rng);
    CHECK(g.mask[r.action]);
    counts[r.action] += 1;
  }
  for (int i = 0; i < g.n_nodes; ++i) {
    const double expected = g.mask[i] ? std::exp(po.log_probs[i]) : 0.0;
    CHECK(double(counts[i]) / n == doctest::Approx(expected).epsilon(0.15).scale(1.0));
  }
  CHECK_THROWS_AS(act(net, g, ActMode::Sample, nullptr), std::invalid_argument);
}

TEST_CASE("same parameters evaluate across instance sizes") {
  auto net = NetworkD::random_init(small_config(), 7);
  for (auto [n, m] : {std::pair{2, 2}, {4, 4}, {5, 3}}) {
    auto inst = random_instance(n, m, n * 10 + m);
    PolicyOutput po = forward_policy(net, features(reset(inst)));
    CHECK(int(po.logits.size()) == n * m);
    CHECK(std::isfinite(po.value));
  }
}

TEST_CASE("permutation equivariance: logits permute, value unchanged") {
  for (Pooling pooling : {Pooling::MeanMax, Pooling::LearnedNode}) {
    auto net = NetworkD::random_init(small_config(pooling), 11);
    Rng rng(42);
    for (int trial = 0; trial < 25; ++trial) {
      const int n = 2 + int(rng.uniform_int(0, 2));
      const int m = 2 + int(rng.uniform_int(0, 2));
      auto inst = random_instance(n, m, 7000 + trial);
      // Keep the state non-terminal so the policy query stays legal.
      State s = random_partial(inst, int(rng.uniform_int(0, n * m - 1)), trial);
      RewiredGraph g = features(s, net.cfg.uses_global_node());
      std::vector<int> perm(g.n_nodes);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      RewiredGraph pg = permute_graph(g, perm);
      PolicyOutput a = forward_policy(net, g);
      PolicyOutput b = forward_policy(net, pg);
      CHECK(std::abs(a.value - b.value) < 1e-9);
      for (int i = 0; i < g.n_nodes; ++i) {
        CHECK(a.logits[i] == doctest::Approx(b.logits[perm[i]]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  // Double precision, h = 1e-5, relative error <= 1e-4 on every parameter.
  int checked = 0;
  for (int trial = 0; trial < 3; ++trial) {
    const int n = trial % 2 == 0 ? 2 : 3;
    auto inst = random_instance(n, n, 400 + trial);
    State s = random_partial(inst, trial, 1000 + trial);
    for (Pooling pooling : {Pooling::MeanMax, Pooling::LearnedNode}) {
      auto net = NetworkD::random_init(small_config(pooling), 50 + trial);
      RewiredGraph g = features(s, net.cfg.uses_global_node());
      const int action = first_legal(g);
      auto analytic = analytic_gradient(net, g, action);
      auto fd = oracle::numeric_gradient(
          net, [&]() { return policy_loss(net, g, action); }, 1e-5);
      double worst = 0.0;
      for (size_t i = 0; i < fd.size(); ++i) {
        worst = std::max(worst, oracle::relative_error(double(analytic[i]), fd[i]));
      }
      INFO("pooling=" << pooling_name(pooling) << " trial=" << trial << " worst=" << worst);
      CHECK(worst <= 1e-4);
      checked += int(fd.size());
    }
  }
  CHECK(checked > 10000);
}

TEST_CASE("zero upstream gradient gives zero parameter gradient") {
  auto inst = random_instance(2, 2, 1);
  auto net = NetworkD::random_init(small_config(), 2);
  RewiredGraph g = features(reset(inst));
  GraphBatch batch = GraphBatch::build(g);
  NetworkD::Workspace ws;
  net.forward(batch, ws, true);
  std::vector<double> dlogits(batch.n_nodes, 0.0), dvalues(1, 0.0);
  std::vector<double> grad(net.n_params(), 0.0);
  net.backward(batch, ws, dlogits, dvalues, grad);
  for (double v : grad) CHECK(v == 0.0);
}

TEST_CASE("backward requires a kept forward") {
  auto inst = random_instance(2, 2, 1);
  auto net = NetworkD::random_init(small_config(), 2);
  GraphBatch batch = GraphBatch::build(features(reset(inst)));
  NetworkD::Workspace ws;
  net.forward(batch, ws, false);
  std::vector<double> dlogits(batch.n_nodes, 0.0), dvalues(1, 0.0), grad(net.n_params(), 0.0);
  CHECK_THROWS_AS(net.backward(batch, ws, dlogits, dvalues, grad), std::logic_error);
}

TEST_CASE("batched forward equals per-graph forward") {
  auto net = NetworkF::random_init(small_config(), 9);
  std::vector<RewiredGraph> graphs;
  for (int i = 0; i < 6; ++i) {
    auto inst = random_instance(3, 3, 80 + i);
    graphs.push_back(features(random_partial(inst, i, i)));
  }
  std::vector<const RewiredGraph*> ptrs;
  for (auto& g : graphs) ptrs.push_back(&g);
  GraphBatch batch = GraphBatch::build(ptrs);
  NetworkF::Workspace ws;
  net.forward(batch, ws, false);
  for (int i = 0; i < 6; ++i) {
    PolicyOutput single = forward_policy(net, graphs[i]);
    const int b0 = batch.node_begin[i];
    for (size_t k = 0; k < single.logits.size(); ++k) {
      CHECK(double(ws.logits[b0 + k]) == doctest::Approx(single.logits[k]).epsilon(1e-6));
    }
    CHECK(double(ws.values[i]) == doctest::Approx(single.value).epsilon(1e-6));
  }
}

TEST_CASE("golden logits on a fixed 2x2 state replay bit-exactly") {
  auto inst = std::make_shared<Instance>(generate_taillard(2, 2, 1234));
  State s = reset(inst);
  apply_step(s, 0);
  auto net = NetworkD::random_init(small_config(), 777);
  PolicyOutput po = forward_policy(net, features(s));

  const std::string golden = std::string(TEST_DATA_DIR) + "/golden_logits_2x2.txt";
  if (std::getenv("REGEN_GOLDEN")) {
    std::ofstream out(golden);
    out << std::hexfloat;
    for (double v : po.logits) out << v << '\n';
    out << po.value << '\n';
  }
  std::ifstream in(golden);
  REQUIRE_MESSAGE(in.good(), "golden file missing; run with REGEN_GOLDEN=1");
  std::vector<double> expected;
  for (std::string line; std::getline(in, line);) expected.push_back(std::strtod(line.c_str(), nullptr));
  REQUIRE(expected.size() == po.logits.size() + 1);
  for (size_t i = 0; i < po.logits.size(); ++i) CHECK(po.logits[i] == expected[i]);
  CHECK(po.value == expected.back());
}

TEST_CASE("checkpoint round trip is exact") {
  auto net = NetworkF::random_init(small_config(), 21);
  std::vector<float> m(net.n_params(), 0.25f), v(net.n_params(), 0.5f);
  nlohmann::json meta = {{"iteration", 3}};
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "jssp_test.ckpt").string();
  save_checkpoint(path, net, meta, &m, &v);
  CHECK(checkpoint_dtype(path) == "float");
  auto lc = load_checkpoint<float>(path);
  CHECK(lc.net.params == net.params);  // bitwise
  CHECK(lc.meta.at("iteration") == 3);
  REQUIRE(lc.adam_m.has_value());
  CHECK(*lc.adam_m == m);
  CHECK(*lc.adam_v == v);
  nlohmann::json cfg_a = lc.net.cfg, cfg_b = net.cfg;
  CHECK(cfg_a == cfg_b);
  CHECK_THROWS_AS(load_checkpoint<double>(path), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint<float>("/nonexistent/x.ckpt"), std::runtime_error);
}

TEST_CASE("non-finite parameters abort the forward pass") {
  auto inst = random_instance(2, 2, 1);
  auto net = NetworkF::random_init(small_config(), 2);
  net.params[net.layout.arrays[2].offset] = std::numeric_limits<float>::quiet_NaN();
  NetworkF::Workspace ws;
  GraphBatch batch = GraphBatch::build(features(reset(inst)));
  CHECK_THROWS_AS(net.forward(batch, ws, false), std::runtime_error);
}
