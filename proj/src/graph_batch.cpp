#include "jobshop/graph_batch.hpp"

namespace jssp {

namespace {
// Stable counting sort of edge ids by key, so per-node edge lists keep the
// canonical emission order regardless of batch composition.
void csr_by(const std::vector<int>& key, int n_nodes, std::vector<int>& begin,
            std::vector<int>& order) {
  begin.assign(n_nodes + 1, 0);
  for (int k : key) begin[k + 1] += 1;
  for (int v = 0; v < n_nodes; ++v) begin[v + 1] += begin[v];
  order.resize(key.size());
  std::vector<int> cursor(begin.begin(), begin.end() - 1);
  for (int e = 0; e < static_cast<int>(key.size()); ++e) {
    order[cursor[key[e]]++] = e;
  }
}
}  // namespace

GraphBatch GraphBatch::build(std::span<const RewiredGraph* const> graphs) {
  GraphBatch b;
  b.n_graphs = static_cast<int>(graphs.size());
  b.node_begin.resize(b.n_graphs + 1, 0);
  for (int g = 0; g < b.n_graphs; ++g) {
    b.node_begin[g + 1] = b.node_begin[g] + graphs[g]->n_nodes;
    b.n_edges += graphs[g]->n_edges();
  }
  b.n_nodes = b.node_begin.back();

  b.graph_of.resize(b.n_nodes);
  b.global_node.resize(b.n_graphs);
  b.src.reserve(b.n_edges);
  b.dst.reserve(b.n_edges);
  b.type.reserve(b.n_edges);
  b.feat.resize(static_cast<size_t>(b.n_nodes) * kFeatCount);
  b.machine_id.resize(b.n_nodes);
  b.mask.resize(b.n_nodes);

  for (int g = 0; g < b.n_graphs; ++g) {
    const RewiredGraph& rg = *graphs[g];
    const int base = b.node_begin[g];
    b.global_node[g] = rg.global_node >= 0 ? base + rg.global_node : -1;
    for (int i = 0; i < rg.n_nodes; ++i) {
      b.graph_of[base + i] = g;
      b.machine_id[base + i] = rg.machine_id[i];
      b.mask[base + i] = rg.mask[i];
    }
    std::copy(rg.feat.begin(), rg.feat.end(),
              b.feat.begin() + static_cast<size_t>(base) * kFeatCount);
    for (int e = 0; e < rg.n_edges(); ++e) {
      b.src.push_back(base + rg.src[e]);
      b.dst.push_back(base + rg.dst[e]);
      b.type.push_back(static_cast<int8_t>(rg.type[e]));
    }
  }
  csr_by(b.dst, b.n_nodes, b.in_begin, b.in_edges);
  csr_by(b.src, b.n_nodes, b.out_begin, b.out_edges);
  return b;
}

GraphBatch GraphBatch::build(const RewiredGraph& g) {
  const RewiredGraph* p = &g;
  return build(std::span<const RewiredGraph* const>(&p, 1));
}

}  // namespace jssp
