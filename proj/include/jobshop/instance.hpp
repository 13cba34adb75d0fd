#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jssp {

enum class DurationKind { Deterministic, Triangular };

// Duration model of one operation: a point value or a triangular
// distribution with parameters 0 < min <= mode <= max.
struct DurationModel {
  DurationKind kind = DurationKind::Deterministic;
  double min = 0.0;
  double mode = 0.0;
  double max = 0.0;

  static DurationModel deterministic(double value) {
    return {DurationKind::Deterministic, value, value, value};
  }
  static DurationModel triangular(double min, double mode, double max) {
    return {DurationKind::Triangular, min, mode, max};
  }
  bool is_deterministic() const { return kind == DurationKind::Deterministic; }
  void validate() const;
};

// Inverse-CDF sample of a duration model at quantile u in [0, 1).
double sample_duration(const DurationModel& d, double u);

struct Operation {
  int job = 0;
  int rank = 0;     // position within the job, 0-based
  int machine = 0;
  DurationModel duration;
};

// Square JSSP instance: every job visits every machine exactly once.
// Operations are stored row-major, indexed by (job, rank).
struct Instance {
  int n_jobs = 0;
  int n_machines = 0;
  std::vector<Operation> ops;
  std::optional<uint64_t> seed;  // generation seed, metadata only

  int n_ops() const { return n_jobs * n_machines; }
  int op_index(int job, int rank) const { return job * n_machines + rank; }
  const Operation& op(int job, int rank) const { return ops[op_index(job, rank)]; }

  bool stochastic() const;
  // Largest dur_max over all operations; the duration normalizer.
  double max_duration() const;
  void validate() const;
};

// One joint realization of all operation durations, indexed like ops.
struct Scenario {
  std::vector<double> real;
};

// Taillard-style generator: integer durations uniform in [1, 99], each
// job's machine sequence an independent uniform permutation.
Instance generate_taillard(int n_jobs, int n_machines, uint64_t seed);

// Turns a deterministic instance into a triangular one. Each duration
// becomes Triangular(min, mode, max) with mode = original value,
// min ~ U[low*mode, mode] and max ~ U[mode, high*mode].
Instance stochasticize(const Instance& inst, uint64_t seed, double low = 0.95,
                       double high = 1.10);

Scenario sample_scenario(const Instance& inst, uint64_t seed);

// Duration parameter vectors in op-index order.
std::vector<double> min_durations(const Instance& inst);
std::vector<double> mode_durations(const Instance& inst);
std::vector<double> max_durations(const Instance& inst);

// Text formats (see README):
//   deterministic: "n m" header, n x m integer durations, n x m machines
//   stochastic:    "n m stochastic" header, rows of "min mode max" triples,
//                  then the machine matrix
// Parse failures throw ParseError with the offending line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Instance read_instance(const std::string& path);
void write_instance(const Instance& inst, const std::string& path);

Scenario read_scenario(const std::string& path, const Instance& inst);
void write_scenario(const Scenario& s, const Instance& inst, const std::string& path);

}  // namespace jssp
