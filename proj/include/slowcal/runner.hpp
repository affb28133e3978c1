#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slowcal/algorithms.hpp"
#include "slowcal/config.hpp"
#include "slowcal/data.hpp"
#include "slowcal/objectives.hpp"

namespace slowcal {

/// A problem instance together with its constants at the start point.
struct BuiltProblem {
  Problem problem;
  ProblemMetadata meta;
};

/// Synthetic problems only (quadratic, logistic clusters). The instance
/// depends on the problem fields and M, never on the run seed.
BuiltProblem build_problem(const ProblemSpec& spec, std::size_t machines);

/// One (algorithm, M, K) combination of a sweep.
struct CellResult {
  Algorithm algorithm = Algorithm::slowcal;
  std::size_t machines = 0;
  std::size_t local_steps = 0;
  std::size_t rounds = 0;
  double eta = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> final_excess_loss;  // per seed, +inf when diverged
  std::vector<double> final_dispersion;   // per seed, mean Q over the last quarter of rounds
  std::size_t diverged = 0;
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  bool any_diverged = false;
  std::filesystem::path metrics_csv;
  std::filesystem::path manifest;
};

extern const char* const kMetricsHeader;

/// Runs every (algorithm, M, K, seed) of the experiment and writes metrics.csv,
/// summary.csv and manifest.json into spec.output_dir. With write_files off
/// nothing touches the disk (used by the acceptance harness).
ExperimentResult run_experiment(const ExperimentSpec& spec, bool write_files = true);

/// `run` is the single-cell case: exactly one algorithm, M and K.
void require_single_cell(const ExperimentSpec& spec);

/// Step size the experiment resolves to for one cell. Grid mode runs the grid
/// search over the experiment seeds.
double resolve_eta(const ExperimentSpec& spec, Algorithm algorithm, const BuiltProblem& built,
                   std::size_t machines, std::size_t local_steps, std::size_t rounds);

/// Test-set results of the MNIST logistic experiment.
struct MnistCell {
  Algorithm algorithm = Algorithm::slowcal;
  std::size_t machines = 0;
  std::size_t local_steps = 0;
  std::size_t rounds = 0;
  double eta = 0.0;
  std::vector<double> test_accuracy;  // per seed
  std::vector<double> test_loss;
  std::size_t diverged = 0;
};

struct MnistResult {
  std::vector<MnistCell> cells;
  bool any_diverged = false;
};

/// Dirichlet-partitioned multinomial logistic regression. Grid search scores
/// by mean final test loss over the seeds. Writes mnist.csv, summary.csv and
/// manifest.json unless write_files is off.
MnistResult run_mnist(const ExperimentSpec& spec, const MnistData& data, bool write_files = true);

/// Writes the manifest JSON with the resolved settings, resolved step sizes and a
/// timestamp.
void write_manifest(const std::filesystem::path& path, const ExperimentSpec& spec,
                    const nlohmann::json& resolved);

/// Formats a double so it round-trips exactly; non-finite values print as
/// inf, -inf or nan.
std::string format_double(double value);

}  // namespace slowcal
