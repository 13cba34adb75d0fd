#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jobshop/environment.hpp"

namespace jssp {

enum class EdgeType : int8_t {
  Precedence = 0,         // job order and scheduled machine-chain arcs
  ReversePrecedence = 1,
  Conflict = 2,           // same-machine clique, both directions
  ToGlobal = 3,
  FromGlobal = 4,
};
constexpr int kNumEdgeTypes = 5;
const char* edge_type_name(EdgeType t);

// Raw per-node feature columns. machine id is carried separately as an
// integer and embedded by the policy network.
enum NodeFeature {
  kFeatAffected = 0,
  kFeatSelectable,
  kFeatDurMin,
  kFeatDurMode,
  kFeatDurMax,
  kFeatCompMin,
  kFeatCompMode,
  kFeatCompMax,
  kFeatCount,
};

// Message-passing graph for one state. Node i < n_ops is operation i;
// when a global node is requested it is the last node, with machine_id -1
// and a false action mask.
struct RewiredGraph {
  int n_nodes = 0;
  int global_node = -1;
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<EdgeType> type;
  std::vector<double> feat;     // n_nodes x kFeatCount, row-major
  std::vector<int> machine_id;  // n_nodes
  std::vector<uint8_t> mask;    // n_nodes

  int n_edges() const { return static_cast<int>(src.size()); }
  double& at(int node, NodeFeature f) { return feat[node * kFeatCount + f]; }
  double at(int node, NodeFeature f) const { return feat[node * kFeatCount + f]; }
};

struct CompletionChannels {
  std::vector<double> min;
  std::vector<double> mode;
  std::vector<double> max;
};

// Completion-time propagation for one duration vector: scheduled ops use
// max(job predecessor, machine-chain predecessor) + duration; unscheduled
// ops chain through job predecessors only.
std::vector<double> propagate_channel(const State& s, std::span<const double> durations);

CompletionChannels propagate_completion(const State& s);

// Edge structure and action mask only (features zero).
RewiredGraph rewire(const State& s, bool with_global_node = false);

// rewire + node features. Durations are divided by the instance max
// duration, completions additionally by n_machines.
RewiredGraph features(const State& s, bool with_global_node = false);

// Debug dump: "src dst type" edge list and a feature CSV.
void write_graph_edges(const RewiredGraph& g, const std::string& path);
void write_graph_features(const RewiredGraph& g, const std::string& path);

}  // namespace jssp
