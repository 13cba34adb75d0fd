#include "jobshop/instance.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "jobshop/format.hpp"
#include "jobshop/rng.hpp"

namespace jssp {

namespace {
constexpr uint64_t kStructureStream = 1;
constexpr uint64_t kBoundsStream = 2;
constexpr uint64_t kScenarioStream = 3;
}  // namespace

void DurationModel::validate() const {
  if (!(min > 0.0) || !(min <= mode) || !(mode <= max)) {
    throw std::invalid_argument("duration model requires 0 < min <= mode <= max");
  }
  if (kind == DurationKind::Deterministic && (min != mode || mode != max)) {
    throw std::invalid_argument("deterministic duration requires min = mode = max");
  }
}

double sample_duration(const DurationModel& d, double u) {
  if (d.is_deterministic()) return d.mode;
  const double span = d.max - d.min;
  if (span <= 0.0) return d.mode;
  const double fc = (d.mode - d.min) / span;
  if (u < fc) return d.min + std::sqrt(u * span * (d.mode - d.min));
  return d.max - std::sqrt((1.0 - u) * span * (d.max - d.mode));
}

bool Instance::stochastic() const {
  return std::any_of(ops.begin(), ops.end(),
                     [](const Operation& o) { return !o.duration.is_deterministic(); });
}

double Instance::max_duration() const {
  double m = 0.0;
  for (const auto& o : ops) m = std::max(m, o.duration.max);
  return m;
}

void Instance::validate() const {
  if (n_jobs < 1 || n_machines < 1) {
    throw std::invalid_argument("instance dimensions must be positive");
  }
  if (static_cast<int>(ops.size()) != n_ops()) {
    throw std::invalid_argument("operation table size mismatch");
  }
  std::vector<char> seen(n_machines);
  for (int j = 0; j < n_jobs; ++j) {
    std::fill(seen.begin(), seen.end(), 0);
    for (int r = 0; r < n_machines; ++r) {
      const Operation& o = op(j, r);
      if (o.job != j || o.rank != r) throw std::invalid_argument("operation index mismatch");
      if (o.machine < 0 || o.machine >= n_machines || seen[o.machine]) {
        throw std::invalid_argument("machine row is not a permutation");
      }
      seen[o.machine] = 1;
      o.duration.validate();
    }
  }
}

Instance generate_taillard(int n_jobs, int n_machines, uint64_t seed) {
  if (n_jobs < 1 || n_machines < 1) {
    throw std::invalid_argument("generate_taillard: dimensions must be >= 1");
  }
  Rng rng(derive_seed(seed, kStructureStream));
  Instance inst;
  inst.n_jobs = n_jobs;
  inst.n_machines = n_machines;
  inst.seed = seed;
  inst.ops.resize(static_cast<size_t>(n_jobs) * n_machines);
  std::vector<int> perm(n_machines);
  for (int j = 0; j < n_jobs; ++j) {
    std::vector<double> durs(n_machines);
    for (int r = 0; r < n_machines; ++r) {
      durs[r] = static_cast<double>(rng.uniform_int(1, 99));
    }
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    for (int r = 0; r < n_machines; ++r) {
      inst.ops[inst.op_index(j, r)] =
          Operation{j, r, perm[r], DurationModel::deterministic(durs[r])};
    }
  }
  return inst;
}

Instance stochasticize(const Instance& inst, uint64_t seed, double low, double high) {
  if (low > 1.0 || high < 1.0) {
    throw std::invalid_argument("stochasticize: requires low <= 1 <= high");
  }
  if (inst.stochastic()) {
    throw std::invalid_argument("stochasticize: instance already stochastic");
  }
  Rng rng(derive_seed(seed, kBoundsStream));
  Instance out = inst;
  for (auto& o : out.ops) {
    const double mode = o.duration.mode;
    const double lo = rng.uniform(low * mode, mode);
    const double hi = rng.uniform(mode, high * mode);
    o.duration = DurationModel::triangular(lo, mode, hi);
  }
  return out;
}

Scenario sample_scenario(const Instance& inst, uint64_t seed) {
  Rng rng(derive_seed(seed, kScenarioStream));
  Scenario s;
  s.real.resize(inst.ops.size());
  for (size_t i = 0; i < inst.ops.size(); ++i) {
    s.real[i] = sample_duration(inst.ops[i].duration, rng.uniform());
  }
  return s;
}

std::vector<double> min_durations(const Instance& inst) {
  std::vector<double> v(inst.ops.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = inst.ops[i].duration.min;
  return v;
}

std::vector<double> mode_durations(const Instance& inst) {
  std::vector<double> v(inst.ops.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = inst.ops[i].duration.mode;
  return v;
}

std::vector<double> max_durations(const Instance& inst) {
  std::vector<double> v(inst.ops.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = inst.ops[i].duration.max;
  return v;
}

namespace {

struct LineReader {
  std::ifstream in;
  std::string path;
  int line_no = 0;

  explicit LineReader(const std::string& p) : in(p), path(p) {
    if (!in) throw ParseError(p + ": cannot open file");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + msg);
  }

  std::vector<std::string> next_tokens() {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      std::istringstream ss(line);
      std::vector<std::string> toks;
      std::string t;
      while (ss >> t) toks.push_back(t);
      if (!toks.empty()) return toks;
    }
    ++line_no;
    fail("unexpected end of file");
  }

  double parse_number(const std::string& t) const {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) fail("not a number: '" + t + "'");
    return v;
  }
};

void read_machine_matrix(LineReader& r, Instance& inst) {
  std::vector<char> seen(inst.n_machines);
  for (int j = 0; j < inst.n_jobs; ++j) {
    auto toks = r.next_tokens();
    if (static_cast<int>(toks.size()) != inst.n_machines) {
      r.fail("expected " + std::to_string(inst.n_machines) + " machine indices");
    }
    std::fill(seen.begin(), seen.end(), 0);
    for (int k = 0; k < inst.n_machines; ++k) {
      const double v = r.parse_number(toks[k]);
      const int m = static_cast<int>(v);
      if (v != m || m < 0 || m >= inst.n_machines) r.fail("bad machine index '" + toks[k] + "'");
      if (seen[m]) r.fail("machine row is not a permutation (machine " + std::to_string(m) +
                          " repeated)");
      seen[m] = 1;
      inst.ops[inst.op_index(j, k)].machine = m;
    }
  }
}

}  // namespace

Instance read_instance(const std::string& path) {
  LineReader r(path);
  auto header = r.next_tokens();
  bool stochastic = false;
  if (header.size() == 3 && header[2] == "stochastic") {
    stochastic = true;
  } else if (header.size() != 2) {
    r.fail("malformed header, expected 'n m' or 'n m stochastic'");
  }
  const int n = static_cast<int>(r.parse_number(header[0]));
  const int m = static_cast<int>(r.parse_number(header[1]));
  if (n < 1 || m < 1) r.fail("non-positive dimensions in header");

  Instance inst;
  inst.n_jobs = n;
  inst.n_machines = m;
  inst.ops.resize(static_cast<size_t>(n) * m);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < m; ++k) {
      auto& o = inst.ops[inst.op_index(j, k)];
      o.job = j;
      o.rank = k;
    }
  }

  for (int j = 0; j < n; ++j) {
    auto toks = r.next_tokens();
    const size_t expected = stochastic ? 3u * m : static_cast<size_t>(m);
    if (toks.size() != expected) {
      r.fail("expected " + std::to_string(expected) + " duration values");
    }
    for (int k = 0; k < m; ++k) {
      auto& o = inst.ops[inst.op_index(j, k)];
      if (stochastic) {
        const double lo = r.parse_number(toks[3 * k]);
        const double mode = r.parse_number(toks[3 * k + 1]);
        const double hi = r.parse_number(toks[3 * k + 2]);
        if (!(lo > 0.0)) r.fail("duration <= 0");
        if (!(lo <= mode && mode <= hi)) r.fail("requires min <= mode <= max");
        o.duration = (lo == hi) ? DurationModel::deterministic(mode)
                                : DurationModel::triangular(lo, mode, hi);
      } else {
        const double d = r.parse_number(toks[k]);
        if (!(d > 0.0)) r.fail("duration <= 0");
        o.duration = DurationModel::deterministic(d);
      }
    }
  }
  read_machine_matrix(r, inst);
  inst.validate();
  return inst;
}

void write_instance(const Instance& inst, const std::string& path) {
  inst.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  const bool stochastic = inst.stochastic();
  out << inst.n_jobs << ' ' << inst.n_machines;
  if (stochastic) out << " stochastic";
  out << '\n';
  for (int j = 0; j < inst.n_jobs; ++j) {
    for (int k = 0; k < inst.n_machines; ++k) {
      const auto& d = inst.op(j, k).duration;
      if (k) out << ' ';
      if (stochastic) {
        out << format_double(d.min) << ' ' << format_double(d.mode) << ' '
            << format_double(d.max);
      } else {
        out << format_double(d.mode);
      }
    }
    out << '\n';
  }
  for (int j = 0; j < inst.n_jobs; ++j) {
    for (int k = 0; k < inst.n_machines; ++k) {
      if (k) out << ' ';
      out << inst.op(j, k).machine;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

Scenario read_scenario(const std::string& path, const Instance& inst) {
  LineReader r(path);
  Scenario s;
  s.real.resize(inst.ops.size());
  for (int j = 0; j < inst.n_jobs; ++j) {
    auto toks = r.next_tokens();
    if (static_cast<int>(toks.size()) != inst.n_machines) {
      r.fail("expected " + std::to_string(inst.n_machines) + " durations");
    }
    for (int k = 0; k < inst.n_machines; ++k) {
      const double v = r.parse_number(toks[k]);
      const auto& d = inst.op(j, k).duration;
      if (v < d.min || v > d.max) r.fail("scenario duration outside [min, max]");
      s.real[inst.op_index(j, k)] = v;
    }
  }
  return s;
}

void write_scenario(const Scenario& s, const Instance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  for (int j = 0; j < inst.n_jobs; ++j) {
    for (int k = 0; k < inst.n_machines; ++k) {
      if (k) out << ' ';
      out << format_double(s.real[inst.op_index(j, k)]);
    }
    out << '\n';
  }
}

}  // namespace jssp
