#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jobshop/graph_batch.hpp"
#include "jobshop/rng.hpp"

namespace jssp {

enum class Pooling { MeanMax, LearnedNode };
std::string pooling_name(Pooling p);
Pooling pooling_from_name(const std::string& s);

struct NetworkConfig {
  int hidden_dim = 64;
  int n_layers = 10;
  int n_heads = 4;
  Pooling pooling = Pooling::MeanMax;
  bool residual = true;
  int embed_layers = 2;       // linear layers in the node embedder MLP
  int machine_emb_dim = 8;
  int max_machines = 32;      // embedding table size (one extra row for global nodes)

  bool uses_global_node() const { return pooling == Pooling::LearnedNode; }
  void validate() const;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

// Named views into the flat parameter vector. Weight matrices are stored
// row-major as (out x in) and applied as Y = X * W^T + b.
struct ParamArray {
  std::string name;
  int rows = 0;
  int cols = 0;
  size_t offset = 0;
  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

struct ParamLayout {
  std::vector<ParamArray> arrays;
  size_t total = 0;

  struct Head {
    size_t w_src, w_dst, w_edge, b_att, att, w_msg, w_medge, b_msg;
  };
  struct FF {
    size_t w1, b1, w2, b2;
  };
  size_t machine_emb = 0, edge_emb = 0;
  std::vector<size_t> embed_w, embed_b;
  std::vector<std::vector<Head>> heads;  // [layer][head]
  std::vector<FF> ff;                    // [layer]
  size_t act_w = 0;                      // [(L+1) node blocks | (L+1) graph blocks] x H
  size_t val_w1 = 0, val_b1 = 0, val_w2 = 0, val_b2 = 0;

  static ParamLayout build(const NetworkConfig& cfg);
};

// Actor-critic graph network: node embedder MLP, edge-type embeddings,
// stacked multi-head attention layers conditioned on edge type, per-layer
// pooled summaries, a linear action head over the per-layer concatenation
// and a value head over the pooled stack. forward/backward are exact
// (backward is reverse-mode, verified against finite differences).
template <typename Scalar>
class Network {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  NetworkConfig cfg;
  ParamLayout layout;
  std::vector<Scalar> params;

  static Network random_init(const NetworkConfig& cfg, uint64_t seed);
  static Network zeros(const NetworkConfig& cfg);

  size_t n_params() const { return layout.total; }

  struct LayerState {
    std::vector<Mat> P, Q, M;   // per head, N x H projections
    std::vector<Vec> alpha;     // per head, attention weights per edge
    Mat C;                      // N x heads*H concatenated head outputs
    Mat Z1;                     // N x H, post-activation of the FF hidden layer
  };

  struct Workspace {
    Mat X;                          // embedder input
    std::vector<Mat> embed_z;       // post-activation embedder hiddens
    std::vector<Mat> h;             // n_layers+1 node embeddings
    std::vector<LayerState> layers;
    Mat g;                          // n_graphs x (n_layers+1)*H pooled summaries
    std::vector<Eigen::MatrixXi> argmax;  // per layer, n_graphs x H (MeanMax)
    Mat vz1;                        // value head hidden, post-activation
    std::vector<Scalar> logits;     // per node
    std::vector<Scalar> values;     // per graph
    bool kept = false;
  };

  // keep_for_backward retains per-layer state; without it layer buffers are
  // reused and only logits/values are valid afterwards.
  void forward(const GraphBatch& b, Workspace& ws, bool keep_for_backward) const;

  // Accumulates d(loss)/d(params) into grad (same layout as params) given
  // upstream gradients on logits and values. forward(..., true) must have
  // filled ws for this batch.
  void backward(const GraphBatch& b, const Workspace& ws, std::span<const Scalar> dlogits,
                std::span<const Scalar> dvalues, std::span<Scalar> grad) const;
};

using NetworkF = Network<float>;
using NetworkD = Network<double>;

// Masked categorical over one graph's logits. Illegal actions have
// probability exactly zero; log_probs of illegal actions are -inf.
struct MaskedDist {
  std::vector<double> log_probs;
  double entropy = 0.0;
};
MaskedDist masked_distribution(std::span<const double> logits, std::span<const uint8_t> mask);
int sample_masked(const MaskedDist& d, std::span<const uint8_t> mask, Rng& rng);
int argmax_masked(std::span<const double> logits, std::span<const uint8_t> mask);

struct PolicyOutput {
  std::vector<double> logits;
  double value = 0.0;
  std::vector<double> log_probs;
  double entropy = 0.0;
};

template <typename Scalar>
PolicyOutput forward_policy(const Network<Scalar>& net, const RewiredGraph& g);

enum class ActMode { Sample, Argmax };

struct ActResult {
  int action = -1;
  double log_prob = 0.0;
  double value = 0.0;
  double entropy = 0.0;
};

template <typename Scalar>
ActResult act(const Network<Scalar>& net, const RewiredGraph& g, ActMode mode, Rng* rng);

// Versioned binary checkpoint: config + named parameter arrays (+ optional
// optimizer state), exact round trip.
constexpr int kFeatureSchemaVersion = 1;

template <typename Scalar>
struct LoadedCheckpoint {
  Network<Scalar> net;
  nlohmann::json meta;
  std::optional<std::vector<Scalar>> adam_m;
  std::optional<std::vector<Scalar>> adam_v;
};

template <typename Scalar>
void save_checkpoint(const std::string& path, const Network<Scalar>& net,
                     const nlohmann::json& meta,
                     const std::vector<Scalar>* adam_m = nullptr,
                     const std::vector<Scalar>* adam_v = nullptr);

template <typename Scalar>
LoadedCheckpoint<Scalar> load_checkpoint(const std::string& path);

// Peeks at the stored dtype ("float"/"double") without loading arrays.
std::string checkpoint_dtype(const std::string& path);

}  // namespace jssp
