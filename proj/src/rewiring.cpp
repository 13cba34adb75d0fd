#include "jobshop/rewiring.hpp"

#include <algorithm>
#include <fstream>

namespace jssp {

const char* edge_type_name(EdgeType t) {
  switch (t) {
    case EdgeType::Precedence: return "precedence";
    case EdgeType::ReversePrecedence: return "reverse_precedence";
    case EdgeType::Conflict: return "conflict";
    case EdgeType::ToGlobal: return "to_global";
    case EdgeType::FromGlobal: return "from_global";
  }
  return "?";
}

std::vector<double> propagate_channel(const State& s, std::span<const double> durations) {
  const Instance& inst = *s.instance;
  std::vector<double> comp(inst.n_ops(), 0.0);
  std::vector<int> machine_pred(inst.n_ops(), -1);
  for (const auto& chain : s.machine_chain) {
    for (size_t i = 1; i < chain.size(); ++i) machine_pred[chain[i]] = chain[i - 1];
  }
  // Scheduled ops in dispatch order: all predecessors already resolved.
  for (int op : s.dispatch_order) {
    const Operation& o = inst.ops[op];
    double ready = 0.0;
    if (o.rank > 0) ready = std::max(ready, comp[inst.op_index(o.job, o.rank - 1)]);
    if (machine_pred[op] >= 0) ready = std::max(ready, comp[machine_pred[op]]);
    comp[op] = ready + durations[op];
  }
  // Unscheduled ops: job chain only, as if there were no conflicts.
  for (int j = 0; j < inst.n_jobs; ++j) {
    for (int r = s.next_rank[j]; r < inst.n_machines; ++r) {
      const int op = inst.op_index(j, r);
      const double ready = r > 0 ? comp[inst.op_index(j, r - 1)] : 0.0;
      comp[op] = ready + durations[op];
    }
  }
  return comp;
}

CompletionChannels propagate_completion(const State& s) {
  const Instance& inst = *s.instance;
  return CompletionChannels{
      propagate_channel(s, min_durations(inst)),
      propagate_channel(s, mode_durations(inst)),
      propagate_channel(s, max_durations(inst)),
  };
}

RewiredGraph rewire(const State& s, bool with_global_node) {
  const Instance& inst = *s.instance;
  const int n_ops = inst.n_ops();
  RewiredGraph g;
  g.n_nodes = n_ops + (with_global_node ? 1 : 0);
  g.global_node = with_global_node ? n_ops : -1;

  auto add = [&](int a, int b, EdgeType t) {
    g.src.push_back(a);
    g.dst.push_back(b);
    g.type.push_back(t);
  };

  // Forward precedences: job order, then scheduled machine chains.
  std::vector<std::pair<int, int>> forward;
  for (int j = 0; j < inst.n_jobs; ++j) {
    for (int r = 0; r + 1 < inst.n_machines; ++r) {
      forward.emplace_back(inst.op_index(j, r), inst.op_index(j, r + 1));
    }
  }
  for (const auto& chain : s.machine_chain) {
    for (size_t i = 1; i < chain.size(); ++i) forward.emplace_back(chain[i - 1], chain[i]);
  }
  for (auto [a, b] : forward) add(a, b, EdgeType::Precedence);
  for (auto [a, b] : forward) add(b, a, EdgeType::ReversePrecedence);

  // Conflict cliques over all operations of each machine.
  std::vector<std::vector<int>> machine_ops(inst.n_machines);
  for (int i = 0; i < n_ops; ++i) machine_ops[inst.ops[i].machine].push_back(i);
  for (const auto& ops : machine_ops) {
    for (int a : ops) {
      for (int b : ops) {
        if (a != b) add(a, b, EdgeType::Conflict);
      }
    }
  }

  if (with_global_node) {
    for (int i = 0; i < n_ops; ++i) add(i, g.global_node, EdgeType::ToGlobal);
    for (int i = 0; i < n_ops; ++i) add(g.global_node, i, EdgeType::FromGlobal);
  }

  g.feat.assign(static_cast<size_t>(g.n_nodes) * kFeatCount, 0.0);
  g.machine_id.assign(g.n_nodes, -1);
  for (int i = 0; i < n_ops; ++i) g.machine_id[i] = inst.ops[i].machine;
  g.mask = legal_actions(s);
  g.mask.resize(g.n_nodes, 0);
  return g;
}

RewiredGraph features(const State& s, bool with_global_node) {
  const Instance& inst = *s.instance;
  RewiredGraph g = rewire(s, with_global_node);
  const CompletionChannels comp = propagate_completion(s);
  const double dur_scale = 1.0 / inst.max_duration();
  const double comp_scale = dur_scale / inst.n_machines;
  for (int i = 0; i < inst.n_ops(); ++i) {
    const DurationModel& d = inst.ops[i].duration;
    g.at(i, kFeatAffected) = s.scheduled[i] ? 1.0 : 0.0;
    g.at(i, kFeatSelectable) = g.mask[i] ? 1.0 : 0.0;
    g.at(i, kFeatDurMin) = d.min * dur_scale;
    g.at(i, kFeatDurMode) = d.mode * dur_scale;
    g.at(i, kFeatDurMax) = d.max * dur_scale;
    g.at(i, kFeatCompMin) = comp.min[i] * comp_scale;
    g.at(i, kFeatCompMode) = comp.mode[i] * comp_scale;
    g.at(i, kFeatCompMax) = comp.max[i] * comp_scale;
  }
  return g;
}

void write_graph_edges(const RewiredGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  for (int e = 0; e < g.n_edges(); ++e) {
    out << g.src[e] << ' ' << g.dst[e] << ' ' << edge_type_name(g.type[e]) << '\n';
  }
}

void write_graph_features(const RewiredGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "node,machine,mask,affected,selectable,dur_min,dur_mode,dur_max,"
         "comp_min,comp_mode,comp_max\n";
  for (int i = 0; i < g.n_nodes; ++i) {
    out << i << ',' << g.machine_id[i] << ',' << int(g.mask[i]);
    for (int f = 0; f < kFeatCount; ++f) out << ',' << g.feat[i * kFeatCount + f];
    out << '\n';
  }
}

}  // namespace jssp
