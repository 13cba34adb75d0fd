#include "jobshop/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "jobshop/format.hpp"
#include "jobshop/ppo.hpp"

namespace jssp {

namespace {
constexpr uint64_t kEvalInstStream = 21;
constexpr uint64_t kEvalStochStream = 22;
constexpr uint64_t kEvalScenStream = 23;
constexpr uint64_t kCurveScenStream = 24;
}  // namespace

double gap_percent(double makespan, double best) {
  if (!(best > 0.0)) throw std::invalid_argument("gap_percent: best must be > 0");
  return 100.0 * (makespan - best) / best;
}

namespace {

struct EvalSet {
  std::vector<std::shared_ptr<const Instance>> instances;
  std::vector<std::vector<Scenario>> scenarios;
};

EvalSet make_eval_set(int jobs, int machines, const EvalOptions& opts, size_t size_idx) {
  EvalSet es;
  const uint64_t size_key = uint64_t(size_idx) * 1000003 + uint64_t(jobs) * 1000 + machines;
  for (int i = 0; i < opts.n_instances; ++i) {
    Instance inst = generate_taillard(
        jobs, machines, derive_seed(derive_seed(opts.seed, kEvalInstStream, size_key), i));
    if (opts.stochastic) {
      inst = stochasticize(inst,
                           derive_seed(derive_seed(opts.seed, kEvalStochStream, size_key), i));
    }
    auto sp = std::make_shared<Instance>(std::move(inst));
    std::vector<Scenario> scens;
    for (int k = 0; k < opts.n_scenarios; ++k) {
      scens.push_back(sample_scenario(
          *sp, derive_seed(derive_seed(opts.seed, kEvalScenStream, size_key),
                           uint64_t(i) * 100000 + k)));
    }
    es.instances.push_back(std::move(sp));
    es.scenarios.push_back(std::move(scens));
  }
  return es;
}

void finish_group(std::vector<EvalRow>& rows, size_t group_begin) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = group_begin; i < rows.size(); ++i) best = std::min(best, rows[i].mean_makespan);
  for (size_t i = group_begin; i < rows.size(); ++i) {
    rows[i].gap_pct = gap_percent(rows[i].mean_makespan, best);
  }
}

template <typename Scalar>
std::vector<EvalRow> evaluate_impl(const Network<Scalar>* net, const EvalOptions& opts,
                                   const std::vector<Rule>& rules) {
  std::vector<EvalRow> rows;
  for (size_t si = 0; si < opts.sizes.size(); ++si) {
    const auto [jobs, machines] = opts.sizes[si];
    EvalSet es = make_eval_set(jobs, machines, opts, si);
    const std::string size_name = std::to_string(jobs) + "x" + std::to_string(machines);
    const size_t group_begin = rows.size();
    auto add_row = [&](const std::string& method, const std::vector<State>& terminals) {
      EvalRow r;
      r.size = size_name;
      r.method = method;
      r.mean_makespan = mean_replay_makespan(terminals, es.scenarios);
      r.n_instances = opts.n_instances;
      r.n_scenarios = opts.n_scenarios;
      r.seed = opts.seed;
      rows.push_back(r);
    };

    if (net) {
      add_row("policy", rollout_argmax(es.instances, *net));
    }
    for (Rule rule : rules) {
      std::vector<State> terms;
      terms.reserve(es.instances.size());
      for (const auto& inst : es.instances) terms.push_back(pdr_dispatch(*inst, rule));
      add_row(rule_name(rule), terms);
    }
    if (opts.include_exact) {
      std::vector<State> terms;
      for (const auto& inst : es.instances) {
        ExactResult ex = exact_makespan(*inst, opts.exact_time_limit);
        if (!ex.optimal) {
          throw std::runtime_error("exact oracle timed out on " + size_name + " instance");
        }
        State s = reset(inst);
        for (int op : ex.dispatch) apply_step(s, op);
        terms.push_back(std::move(s));
      }
      add_row("exact", terms);
    }
    finish_group(rows, group_begin);
  }
  return rows;
}

}  // namespace

template <typename Scalar>
std::vector<EvalRow> evaluate_policy(const Network<Scalar>& net, const EvalOptions& opts) {
  return evaluate_impl(&net, opts, opts.include_rules ? all_rules() : std::vector<Rule>{});
}

std::vector<EvalRow> evaluate_baselines(const EvalOptions& opts, const std::vector<Rule>& rules) {
  return evaluate_impl<float>(nullptr, opts, rules);
}

namespace {
double percentile(std::vector<double> sorted, double q) {
  const size_t idx = size_t(std::llround(q * double(sorted.size() - 1)));
  return sorted[idx];
}
}  // namespace

std::vector<BaselineRow> baseline_details(const EvalOptions& opts, const std::vector<Rule>& rules) {
  std::vector<BaselineRow> rows;
  for (size_t si = 0; si < opts.sizes.size(); ++si) {
    const auto [jobs, machines] = opts.sizes[si];
    EvalSet es = make_eval_set(jobs, machines, opts, si);
    const std::string size_name = std::to_string(jobs) + "x" + std::to_string(machines);
    for (int i = 0; i < opts.n_instances; ++i) {
      const Instance& inst = *es.instances[i];
      const auto modes = mode_durations(inst);
      std::vector<std::pair<std::string, State>> dispatchers;
      for (Rule rule : rules) dispatchers.emplace_back(rule_name(rule), pdr_dispatch(inst, rule));
      if (opts.include_exact) {
        ExactResult ex = exact_makespan(inst, opts.exact_time_limit);
        if (!ex.optimal) throw std::runtime_error("exact oracle timed out on " + size_name);
        State s = reset(es.instances[i]);
        for (int op : ex.dispatch) apply_step(s, op);
        dispatchers.emplace_back("exact", std::move(s));
      }
      for (auto& [name, terminal] : dispatchers) {
        BaselineRow r;
        r.size = size_name;
        r.instance = i;
        r.rule = name;
        r.mode_makespan = sgs_starts(terminal, modes).makespan();
        std::vector<double> replays;
        replays.reserve(es.scenarios[i].size());
        for (const Scenario& sc : es.scenarios[i]) replays.push_back(sgs_replay(terminal, sc));
        std::sort(replays.begin(), replays.end());
        for (double v : replays) r.mean_replay += v;
        r.mean_replay /= double(replays.size());
        r.p10 = percentile(replays, 0.10);
        r.p50 = percentile(replays, 0.50);
        r.p90 = percentile(replays, 0.90);
        rows.push_back(std::move(r));
      }
    }
  }
  return rows;
}

void write_baseline_csv(const std::vector<BaselineRow>& rows, const EvalOptions& opts,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "size,instance,rule,mode_makespan,mean_replay,p10,p50,p90,n_scenarios,seed\n";
  for (const auto& r : rows) {
    out << r.size << ',' << r.instance << ',' << r.rule << ',' << format_double(r.mode_makespan)
        << ',' << format_double(r.mean_replay) << ',' << format_double(r.p10) << ','
        << format_double(r.p50) << ',' << format_double(r.p90) << ',' << opts.n_scenarios << ','
        << opts.seed << '\n';
  }
}

void write_results_csv(const std::vector<EvalRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "size,method,mean_makespan,gap_pct,n_instances,n_scenarios,seed\n";
  for (const auto& r : rows) {
    out << r.size << ',' << r.method << ',' << format_double(r.mean_makespan) << ','
        << format_double(r.gap_pct) << ',' << r.n_instances << ',' << r.n_scenarios << ','
        << r.seed << '\n';
  }
}

std::string format_results_table(const std::vector<EvalRow>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %-10s %14s %9s %6s %6s\n", "size", "method",
                "mean_makespan", "gap_pct", "inst", "scen");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-8s %-10s %14.2f %9.1f %6d %6d\n", r.size.c_str(),
                  r.method.c_str(), r.mean_makespan, r.gap_pct, r.n_instances, r.n_scenarios);
    out << line;
  }
  return out.str();
}

std::vector<CurveRow> cumulative_curve(const std::vector<std::pair<std::string, State>>& solvers,
                                       const std::vector<Scenario>& scenarios) {
  const int n = static_cast<int>(scenarios.size());
  std::vector<CurveRow> rows;
  for (const auto& [name, terminal] : solvers) {
    std::vector<double> ms(n);
    for (int k = 0; k < n; ++k) ms[k] = sgs_replay(terminal, scenarios[k]);
    std::sort(ms.begin(), ms.end());
    for (int k = 0; k < n; ++k) rows.push_back({name, k, ms[k]});
  }
  return rows;
}

std::vector<CurveRow> cumulative_curve(const Instance& inst,
                                       const std::vector<std::pair<std::string, State>>& solvers,
                                       int n_scenarios, uint64_t seed) {
  std::vector<Scenario> scens;
  scens.reserve(n_scenarios);
  for (int k = 0; k < n_scenarios; ++k) {
    scens.push_back(sample_scenario(inst, derive_seed(seed, kCurveScenStream, k)));
  }
  return cumulative_curve(solvers, scens);
}

void write_curve_csv(const std::vector<CurveRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "method,rank,makespan\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.rank << ',' << format_double(r.makespan) << '\n';
  }
}

std::vector<std::pair<int, int>> parse_sizes(const std::string& spec) {
  std::vector<std::pair<int, int>> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    if (x == std::string::npos) throw std::invalid_argument("bad size '" + item + "', expected NxM");
    out.emplace_back(std::stoi(item.substr(0, x)), std::stoi(item.substr(x + 1)));
  }
  if (out.empty()) throw std::invalid_argument("no sizes given");
  return out;
}

template std::vector<EvalRow> evaluate_policy<float>(const Network<float>&, const EvalOptions&);
template std::vector<EvalRow> evaluate_policy<double>(const Network<double>&, const EvalOptions&);

}  // namespace jssp
