#pragma once

#include <span>
#include <vector>

#include "jobshop/rewiring.hpp"

namespace jssp {

// Concatenation of several rewired graphs into flat node/edge arrays,
// with CSR indexes over incoming and outgoing edges. All network kernels
// operate on batches; a single graph is a batch of one.
struct GraphBatch {
  int n_graphs = 0;
  int n_nodes = 0;
  int n_edges = 0;
  std::vector<int> node_begin;   // n_graphs + 1
  std::vector<int> graph_of;     // node -> graph
  std::vector<int> global_node;  // per graph, -1 if absent (batch-global index)

  std::vector<int> src;          // per edge, batch-global node ids
  std::vector<int> dst;
  std::vector<int8_t> type;

  std::vector<int> in_begin;     // n_nodes + 1; edge ids grouped by dst
  std::vector<int> in_edges;
  std::vector<int> out_begin;    // n_nodes + 1; edge ids grouped by src
  std::vector<int> out_edges;

  std::vector<double> feat;      // n_nodes x kFeatCount
  std::vector<int> machine_id;   // -1 for global nodes
  std::vector<uint8_t> mask;

  int nodes_in(int graph) const { return node_begin[graph + 1] - node_begin[graph]; }

  static GraphBatch build(std::span<const RewiredGraph* const> graphs);
  static GraphBatch build(const RewiredGraph& g);
};

}  // namespace jssp
