#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "slowcal/algorithms.hpp"
#include "slowcal/weights.hpp"

namespace slowcal {

enum class ProblemKind { quadratic, logistic, mnist_logistic };

std::string to_string(ProblemKind kind);

struct ProblemSpec {
  ProblemKind kind = ProblemKind::quadratic;
  std::size_t dimension = 20;
  bool shared_curvature = false;
  double eig_min = 0.1;
  double eig_max = 1.0;
  double center_norm = 1.0;
  double spread = 1.0;
  std::optional<double> target_gstar;
  double sigma = 1.0;
  std::optional<double> l2;  // defaults: 1e-2 synthetic logistic, 1e-4 MNIST
  std::size_t classes = 4;
  std::size_t examples_per_machine = 200;
  double cluster_spread = 0.2;
  double skew = 0.5;
  double dirichlet_alpha = 0.1;
  std::optional<std::size_t> train_limit;
  std::uint64_t seed = 1;

  double resolved_l2() const;
};

struct LrSpec {
  enum class Mode { theory, fixed, grid };
  Mode mode = Mode::theory;
  double value = 0.0;
  std::vector<double> grid;

  /// `theory`, `fixed:<v>`, `grid:[v1,v2,...]`.
  static LrSpec parse(const std::string& text);
  std::string to_string() const;
};

/// Declarative description of a run or sweep. Every field has a default;
/// the resolved values are echoed into the output manifest.
struct ExperimentSpec {
  ProblemSpec problem;
  std::vector<Algorithm> algorithms{Algorithm::slowcal};
  WeightSchedule schedule = WeightSchedule::linear();
  std::vector<std::size_t> machines{8};
  std::vector<std::size_t> local_steps{16};
  std::size_t rounds = 50;
  std::optional<std::size_t> samples_per_machine;  // if set, R = samples / K per K
  LrSpec lr;
  std::vector<std::uint64_t> seeds{1};
  bool diagnostics = false;
  std::size_t eval_every = 1;
  std::filesystem::path output_dir = "out";
  std::size_t threads = 0;  // 0: OpenMP default

  std::size_t rounds_for(std::size_t k) const;
};

/// Parses the flat-keyed JSON form. Unknown keys and bad values throw
/// ConfigError naming the field.
ExperimentSpec parse_spec(const nlohmann::json& j);
ExperimentSpec load_spec(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentSpec& spec);

/// SLOWCAL_OUT_DIR and SLOWCAL_THREADS override the file's values.
void apply_env_overrides(ExperimentSpec& spec);

}  // namespace slowcal
