// Command-line front end: generate / train / eval / baseline / curve /
// inspect. Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "jobshop/evaluation.hpp"
#include "jobshop/format.hpp"
#include "jobshop/parallel.hpp"
#include "jobshop/ppo.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace jssp;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string default_out_dir() {
  const char* env = std::getenv("JOBSHOP_OUT_DIR");
  return env ? env : "";
}

void write_manifest(const std::string& target, const json& extra) {
  json manifest = extra;
  manifest["version"] = kVersion;
  manifest["feature_schema"] = kFeatureSchemaVersion;
  std::string path = target;
  if (fs::is_directory(target)) {
    path = (fs::path(target) / "manifest.json").string();
  } else {
    path = target + ".manifest.json";
  }
  std::ofstream out(path);
  out << manifest.dump(2) << '\n';
}

struct EvalCli {
  std::string checkpoint;
  std::string sizes = "6x6";
  int instances = 100;
  int scenarios = 1;
  uint64_t seed = 0;
  bool deterministic = false;
  bool with_rules = false;
  bool with_exact = false;
  double exact_time_limit = 60.0;
  std::string out;
  int threads = 1;
};

EvalOptions to_options(const EvalCli& c) {
  EvalOptions opts;
  opts.sizes = parse_sizes(c.sizes);
  opts.n_instances = c.instances;
  opts.n_scenarios = c.scenarios;
  opts.seed = c.seed;
  opts.stochastic = !c.deterministic;
  opts.include_rules = c.with_rules;
  opts.include_exact = c.with_exact;
  opts.exact_time_limit = c.exact_time_limit;
  return opts;
}

std::vector<EvalRow> run_eval_with_checkpoint(const EvalCli& cli) {
  const EvalOptions opts = to_options(cli);
  if (checkpoint_dtype(cli.checkpoint) == "double") {
    return evaluate_policy(load_checkpoint<double>(cli.checkpoint).net, opts);
  }
  return evaluate_policy(load_checkpoint<float>(cli.checkpoint).net, opts);
}

State dispatch_for(const Instance& inst, const std::string& method,
                   const std::string& checkpoint) {
  if (method == "policy") {
    auto inst_sp = std::make_shared<Instance>(inst);
    if (checkpoint_dtype(checkpoint) == "double") {
      auto net = load_checkpoint<double>(checkpoint).net;
      return rollout_argmax({inst_sp}, net)[0];
    }
    auto net = load_checkpoint<float>(checkpoint).net;
    return rollout_argmax({inst_sp}, net)[0];
  }
  if (method == "exact") {
    ExactResult ex = exact_makespan(inst);
    if (!ex.optimal) throw std::runtime_error("exact oracle timed out");
    State s = reset(std::make_shared<Instance>(inst));
    for (int op : ex.dispatch) apply_step(s, op);
    return s;
  }
  return pdr_dispatch(inst, rule_from_name(method));
}

int run(int argc, char** argv) {
  CLI::App app{"Job-shop dispatching: GNN policy training and baselines"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // ---- generate ----
  auto* gen = app.add_subcommand("generate", "Write Taillard-style instance files");
  int g_jobs = 6, g_machines = 6, g_count = 1;
  uint64_t g_seed = 0;
  bool g_stochastic = false;
  double g_low = 0.95, g_high = 1.10;
  std::string g_out = default_out_dir();
  gen->add_option("--jobs", g_jobs)->required();
  gen->add_option("--machines", g_machines)->required();
  gen->add_option("--count", g_count);
  gen->add_option("--seed", g_seed)->required();
  gen->add_flag("--stochastic", g_stochastic);
  gen->add_option("--low", g_low, "lower duration bound factor");
  gen->add_option("--high", g_high, "upper duration bound factor");
  gen->add_option("--out", g_out, "output directory")->required(default_out_dir().empty());
  gen->callback([&] {
    fs::create_directories(g_out);
    for (int i = 0; i < g_count; ++i) {
      Instance inst = generate_taillard(g_jobs, g_machines, derive_seed(g_seed, 0, i));
      if (g_stochastic) inst = stochasticize(inst, derive_seed(g_seed, 1, i), g_low, g_high);
      char name[64];
      std::snprintf(name, sizeof(name), "instance_%04d.txt", i);
      write_instance(inst, (fs::path(g_out) / name).string());
    }
    write_manifest(g_out, {{"command", "generate"},
                           {"jobs", g_jobs},
                           {"machines", g_machines},
                           {"count", g_count},
                           {"seed", g_seed},
                           {"stochastic", g_stochastic},
                           {"low", g_low},
                           {"high", g_high}});
    std::cout << "wrote " << g_count << " instances to " << g_out << "\n";
  });

  // ---- train ----
  auto* train = app.add_subcommand("train", "Train a dispatching policy");
  std::string t_config, t_out = default_out_dir(), t_resume;
  int t_iterations = -1, t_threads = -1;
  int64_t t_seed = -1;
  train->add_option("--config", t_config, "JSON config file")->required();
  train->add_option("--out", t_out)->required(default_out_dir().empty());
  train->add_option("--resume", t_resume, "last.ckpt to continue from");
  train->add_option("--iterations", t_iterations, "override config iterations");
  train->add_option("--threads", t_threads, "override config threads");
  train->add_option("--seed", t_seed, "override config seed");
  train->callback([&] {
    TrainConfig cfg = load_train_config(t_config);
    if (t_iterations >= 0) cfg.iterations = t_iterations;
    if (t_threads >= 0) cfg.threads = t_threads;
    if (t_seed >= 0) cfg.seed = uint64_t(t_seed);
    TrainResult res = train_loop(cfg, t_out, t_resume);
    std::cout << "untrained validation makespan: " << res.untrained_val << "\n"
              << "best validation makespan:      " << res.best_val << " (iteration "
              << res.best_iteration << ")\n"
              << "spt baseline makespan:         " << res.spt_val << "\n"
              << "checkpoints: " << res.best_checkpoint << ", " << res.last_checkpoint << "\n";
  });

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against baselines");
  EvalCli e;
  e.out = default_out_dir().empty() ? "" : default_out_dir() + "/results.csv";
  eval->add_option("--checkpoint", e.checkpoint)->required();
  eval->add_option("--sizes", e.sizes, "comma list, e.g. 6x6,10x10");
  eval->add_option("--instances", e.instances);
  eval->add_option("--scenarios", e.scenarios);
  eval->add_option("--seed", e.seed)->required();
  eval->add_flag("--deterministic", e.deterministic, "evaluate without duration uncertainty");
  eval->add_flag("--rules", e.with_rules, "include dispatching-rule baselines");
  eval->add_flag("--exact", e.with_exact, "include the exact oracle (small sizes only)");
  eval->add_option("--exact-time-limit", e.exact_time_limit);
  eval->add_option("--out", e.out, "results CSV path")->required(default_out_dir().empty());
  eval->add_option("--threads", e.threads);
  eval->callback([&] {
    set_threads(e.threads);
    auto rows = run_eval_with_checkpoint(e);
    write_results_csv(rows, e.out);
    write_manifest(e.out, {{"command", "eval"},
                           {"checkpoint", e.checkpoint},
                           {"sizes", e.sizes},
                           {"instances", e.instances},
                           {"scenarios", e.scenarios},
                           {"seed", e.seed},
                           {"deterministic", e.deterministic},
                           {"rules", e.with_rules},
                           {"exact", e.with_exact},
                           {"threads", e.threads}});
    std::cout << format_results_table(rows);
  });

  // ---- baseline ----
  auto* base = app.add_subcommand("baseline", "Dispatching-rule (and exact) baselines");
  EvalCli b;
  std::string b_rules = "all";
  b.out = default_out_dir().empty() ? "" : default_out_dir() + "/baselines.csv";
  base->add_option("--sizes", b.sizes);
  base->add_option("--instances", b.instances);
  base->add_option("--scenarios", b.scenarios);
  base->add_option("--seed", b.seed)->required();
  base->add_flag("--deterministic", b.deterministic);
  base->add_option("--rules", b_rules, "comma list of rules or 'all'");
  base->add_flag("--exact", b.with_exact);
  base->add_option("--exact-time-limit", b.exact_time_limit);
  base->add_option("--out", b.out)->required(default_out_dir().empty());
  base->add_option("--threads", b.threads);
  base->callback([&] {
    set_threads(b.threads);
    std::vector<Rule> rules;
    if (b_rules == "all") {
      rules = all_rules();
    } else {
      std::stringstream ss(b_rules);
      for (std::string item; std::getline(ss, item, ',');) rules.push_back(rule_from_name(item));
    }
    const EvalOptions opts = to_options(b);
    write_baseline_csv(baseline_details(opts, rules), opts, b.out);
    auto rows = evaluate_baselines(opts, rules);
    write_manifest(b.out, {{"command", "baseline"},
                           {"sizes", b.sizes},
                           {"instances", b.instances},
                           {"scenarios", b.scenarios},
                           {"seed", b.seed},
                           {"deterministic", b.deterministic},
                           {"rules", b_rules},
                           {"exact", b.with_exact},
                           {"threads", b.threads}});
    std::cout << format_results_table(rows);
  });

  // ---- curve ----
  auto* curve = app.add_subcommand("curve", "Cumulative makespan of one instance over scenarios");
  std::string c_instance, c_checkpoint, c_methods = "all", c_out;
  int c_scenarios = 100;
  uint64_t c_seed = 0;
  c_out = default_out_dir().empty() ? "" : default_out_dir() + "/curve.csv";
  curve->add_option("--instance", c_instance, "instance file")->required();
  curve->add_option("--checkpoint", c_checkpoint, "adds a 'policy' series");
  curve->add_option("--methods", c_methods, "comma list of rules, 'exact', or 'all'");
  curve->add_option("--scenarios", c_scenarios);
  curve->add_option("--seed", c_seed)->required();
  curve->add_option("--out", c_out)->required(default_out_dir().empty());
  curve->callback([&] {
    Instance inst = read_instance(c_instance);
    std::vector<std::string> methods;
    if (!c_checkpoint.empty()) methods.push_back("policy");
    if (c_methods == "all") {
      for (Rule r : all_rules()) methods.push_back(rule_name(r));
    } else {
      std::stringstream ss(c_methods);
      for (std::string item; std::getline(ss, item, ',');) methods.push_back(item);
    }
    std::vector<std::pair<std::string, State>> solvers;
    for (const auto& m : methods) solvers.emplace_back(m, dispatch_for(inst, m, c_checkpoint));
    auto rows = cumulative_curve(inst, solvers, c_scenarios, c_seed);
    write_curve_csv(rows, c_out);
    write_manifest(c_out, {{"command", "curve"},
                           {"instance", c_instance},
                           {"checkpoint", c_checkpoint},
                           {"methods", c_methods},
                           {"scenarios", c_scenarios},
                           {"seed", c_seed}});
    std::cout << "wrote " << rows.size() << " rows to " << c_out << "\n";
  });

  // ---- inspect ----
  auto* inspect = app.add_subcommand("inspect", "Print an instance, schedule, or rewired graph");
  std::string i_instance, i_dispatch, i_graph_prefix, i_schedule_out;
  inspect->add_option("--instance", i_instance)->required();
  inspect->add_option("--dispatch", i_dispatch, "comma list of operation ids to apply");
  inspect->add_option("--graph", i_graph_prefix, "write <prefix>.edges.txt and <prefix>.feats.csv");
  inspect->add_option("--schedule", i_schedule_out, "write the schedule CSV here");
  inspect->callback([&] {
    auto inst = std::make_shared<Instance>(read_instance(i_instance));
    std::cout << inst->n_jobs << " jobs x " << inst->n_machines << " machines, "
              << (inst->stochastic() ? "stochastic" : "deterministic") << "\n";
    for (int j = 0; j < inst->n_jobs; ++j) {
      std::cout << "job " << j << ":";
      for (int r = 0; r < inst->n_machines; ++r) {
        const auto& o = inst->op(j, r);
        std::cout << " m" << o.machine << "(";
        if (o.duration.is_deterministic()) {
          std::cout << format_double(o.duration.mode);
        } else {
          std::cout << format_double(o.duration.min) << "/" << format_double(o.duration.mode)
                    << "/" << format_double(o.duration.max);
        }
        std::cout << ")";
      }
      std::cout << "\n";
    }
    State s = reset(inst);
    if (!i_dispatch.empty()) {
      std::stringstream ss(i_dispatch);
      for (std::string item; std::getline(ss, item, ',');) apply_step(s, std::stoi(item));
      Schedule sched = sgs_starts(s, mode_durations(*inst));
      std::cout << "after " << s.step_count << " dispatches, mode makespan "
                << format_double(sched.makespan()) << "\n";
      if (!i_schedule_out.empty()) write_schedule_csv(*inst, sched, i_schedule_out);
    }
    if (!i_graph_prefix.empty()) {
      RewiredGraph g = features(s);
      write_graph_edges(g, i_graph_prefix + ".edges.txt");
      write_graph_features(g, i_graph_prefix + ".feats.csv");
      std::cout << "graph: " << g.n_nodes << " nodes, " << g.n_edges() << " edges\n";
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors exit 1; --help/--version exit 0
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
