#include "slowcal/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fmt/format.h>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <omp.h>

#include "slowcal/errors.hpp"
#include "slowcal/tuning.hpp"

namespace slowcal {

using nlohmann::json;

const char* const kMetricsHeader =
    "run_id,algorithm,problem,M,K,R,seed,round,t,eta,excess_loss,grad_norm,dispersion_q,"
    "v_increment,d_t,diverged,wall_ms";

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kManifestVersion = 1;

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string run_id(Algorithm algorithm, std::size_t m, std::size_t k, std::uint64_t seed) {
  return fmt::format("{}-M{}-K{}-s{}", to_string(algorithm), m, k, seed);
}

// Anytime on a multi-machine problem runs as one machine on the batch gradient.
std::size_t config_machines(Algorithm algorithm, std::size_t machines) {
  return algorithm == Algorithm::anytime ? 1 : machines;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw std::runtime_error(fmt::format("output directory '{}' is not writable: {}", dir.string(),
                                         ec ? ec.message() : "not a directory"));
  }
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double stddev_of(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double mu = mean_of(values);
  if (!std::isfinite(mu)) return kInf;
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

// Mean Q over the final quarter: per step when diagnostics were recorded,
// otherwise over round ends.
double final_quarter_dispersion(const Trajectory& traj) {
  if (traj.diverged) return kInf;
  double sum = 0.0;
  std::size_t count = 0;
  if (!traj.steps.empty()) {
    const std::size_t total = traj.steps.size() - 1;  // records t = 0..T
    const std::size_t from = total - total / 4;
    for (std::size_t t = from; t < total; ++t, ++count) sum += traj.steps[t].dispersion;
    if (count == 0) return traj.steps.back().dispersion;
  } else {
    const std::size_t total = traj.rounds.size();
    for (std::size_t r = total - std::max<std::size_t>(1, total / 4); r < total; ++r, ++count) {
      sum += traj.rounds[r].dispersion;
    }
  }
  return sum / static_cast<double>(count);
}

struct RunOutput {
  std::string rows;
  double final_excess = kInf;
  double final_q = kInf;
  bool diverged = false;
};

struct MnistRunOutput {
  std::string rows;
  double accuracy = 0.0;
  double loss = kInf;
  bool diverged = false;
};

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  return fmt::format("{}", value);
}

BuiltProblem build_problem(const ProblemSpec& spec, std::size_t machines) {
  BuiltProblem out;
  switch (spec.kind) {
    case ProblemKind::quadratic: {
      QuadraticSpec q;
      q.dimension = spec.dimension;
      q.machines = machines;
      q.shared_curvature = spec.shared_curvature;
      q.eig_min = spec.eig_min;
      q.eig_max = spec.eig_max;
      q.center_norm = spec.center_norm;
      q.spread = spec.spread;
      q.target_gstar = spec.target_gstar;
      q.sigma = spec.sigma;
      q.seed = spec.seed;
      out.problem.objective = make_quadratic(q);
      break;
    }
    case ProblemKind::logistic: {
      ClusterSpec c;
      c.machines = machines;
      c.dimension = spec.dimension;
      c.classes = spec.classes;
      c.examples_per_machine = spec.examples_per_machine;
      c.spread = spec.cluster_spread;
      c.skew = spec.skew;
      c.seed = spec.seed;
      out.problem.objective = std::make_shared<LogisticEnsemble>(synth_clusters(c), spec.resolved_l2());
      break;
    }
    case ProblemKind::mnist_logistic:
      throw ConfigError("problem 'mnist-logistic' needs the mnist subcommand and a data directory");
  }
  const auto& obj = *out.problem.objective;
  out.problem.start = Vector::Zero(static_cast<Eigen::Index>(obj.dimension()));
  out.problem.optimum = obj.optimum();
  out.meta = describe(obj, out.problem.start, *out.problem.optimum);
  return out;
}

void require_single_cell(const ExperimentSpec& spec) {
  if (spec.algorithms.size() != 1 || spec.machines.size() != 1 || spec.local_steps.size() != 1) {
    throw ConfigError("run takes a single algorithm, M and K; use sweep for lists");
  }
}

namespace {

RunConfig base_config(const ExperimentSpec& spec, Algorithm algorithm, std::size_t machines,
                      std::size_t local_steps, std::size_t rounds) {
  RunConfig cfg;
  cfg.machines = config_machines(algorithm, machines);
  cfg.local_steps = local_steps;
  cfg.rounds = rounds;
  cfg.schedule = spec.schedule;
  cfg.record_diagnostics = spec.diagnostics;
  cfg.record_anchors = false;
  return cfg;
}

RunOutput execute_run(const ExperimentSpec& spec, Algorithm algorithm, const BuiltProblem& built,
                      std::size_t machines, std::size_t local_steps, std::size_t rounds, double eta,
                      std::uint64_t seed, Execution execution) {
  RunConfig cfg = base_config(spec, algorithm, machines, local_steps, rounds);
  cfg.eta = eta;
  cfg.seed = seed;
  cfg.execution = execution;

  std::vector<double> wall(rounds, 0.0);
  const auto start = Clock::now();
  const Trajectory traj = run_algorithm(algorithm, built.problem, cfg,
                                        [&](std::size_t r, const Vector&) { wall[r] = elapsed_ms(start); });
  for (std::size_t r = 1; r < rounds; ++r) wall[r] = std::max(wall[r], wall[r - 1]);

  RunOutput out;
  out.diverged = traj.diverged;
  out.final_excess = traj.final_excess_loss();
  out.final_q = final_quarter_dispersion(traj);

  const std::string id = run_id(algorithm, machines, local_steps, seed);
  const std::string problem = to_string(spec.problem.kind);
  const std::string name = to_string(algorithm);
  const std::string eta_text = format_double(eta);
  for (const auto& rec : traj.rounds) {
    out.rows += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", id, name, problem,
                            machines, local_steps, rounds, seed, rec.round + 1, rec.step, eta_text,
                            format_double(rec.excess_loss), format_double(rec.grad_norm),
                            format_double(rec.dispersion), format_double(rec.v_increment),
                            format_double(rec.distance_sq), rec.diverged ? 1 : 0,
                            fmt::format("{:.3f}", wall[rec.round]));
  }
  return out;
}

LrInputs lr_inputs(const ProblemMetadata& meta, std::size_t machines, std::size_t local_steps,
                   std::size_t rounds) {
  LrInputs in;
  in.smoothness = meta.smoothness;
  in.sigma = meta.sigma;
  in.gstar = meta.gstar;
  in.b0 = meta.b0;
  in.machines = machines;
  in.local_steps = local_steps;
  in.rounds = rounds;
  return in;
}

}  // namespace

double resolve_eta(const ExperimentSpec& spec, Algorithm algorithm, const BuiltProblem& built,
                   std::size_t machines, std::size_t local_steps, std::size_t rounds) {
  switch (spec.lr.mode) {
    case LrSpec::Mode::fixed:
      return spec.lr.value;
    case LrSpec::Mode::theory:
      return theoretical_lr(lr_inputs(built.meta, machines, local_steps, rounds));
    case LrSpec::Mode::grid: {
      RunConfig cfg = base_config(spec, algorithm, machines, local_steps, rounds);
      cfg.record_diagnostics = false;
      return grid_search(built.problem, algorithm, spec.lr.grid, cfg, spec.seeds).best_eta;
    }
  }
  return spec.lr.value;
}

void write_manifest(const std::filesystem::path& path, const ExperimentSpec& spec, const json& resolved) {
  json j;
  j["manifest_version"] = kManifestVersion;
  j["timestamp"] = utc_timestamp();
  j["spec"] = to_json(spec);
  j["resolved"] = resolved;
  j["openmp_max_threads"] = omp_get_max_threads();
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path.string()));
}

ExperimentResult run_experiment(const ExperimentSpec& spec, bool write_files) {
  if (spec.problem.kind == ProblemKind::mnist_logistic) {
    throw ConfigError("problem 'mnist-logistic' needs the mnist subcommand and a data directory");
  }
  if (spec.threads > 0) omp_set_num_threads(static_cast<int>(spec.threads));
  if (write_files) ensure_dir(spec.output_dir);

  std::vector<std::size_t> machines_list = spec.machines;
  std::vector<std::size_t> k_list = spec.local_steps;
  std::vector<Algorithm> algorithms = spec.algorithms;
  std::sort(machines_list.begin(), machines_list.end());
  machines_list.erase(std::unique(machines_list.begin(), machines_list.end()), machines_list.end());
  std::sort(k_list.begin(), k_list.end());
  k_list.erase(std::unique(k_list.begin(), k_list.end()), k_list.end());
  std::sort(algorithms.begin(), algorithms.end());
  algorithms.erase(std::unique(algorithms.begin(), algorithms.end()), algorithms.end());
  std::vector<std::uint64_t> seeds = spec.seeds;
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  std::map<std::size_t, BuiltProblem> problems;
  json resolved_problems = json::object();
  for (auto m : machines_list) {
    auto built = build_problem(spec.problem, m);
    resolved_problems[std::to_string(m)] = {{"L", built.meta.smoothness},
                                            {"sigma", built.meta.sigma},
                                            {"gstar", built.meta.gstar},
                                            {"b0", built.meta.b0},
                                            {"optimum_value", built.meta.optimum_value}};
    problems.emplace(m, std::move(built));
  }

  ExperimentResult result;
  json resolved_cells = json::array();
  std::string csv = std::string(kMetricsHeader) + "\n";

  for (auto algorithm : algorithms) {
    for (auto m : machines_list) {
      for (auto k : k_list) {
        const auto& built = problems.at(m);
        CellResult cell;
        cell.algorithm = algorithm;
        cell.machines = m;
        cell.local_steps = k;
        cell.rounds = spec.rounds_for(k);
        cell.seeds = seeds;

        // Grid mode memoizes every (eta, seed) run so the winner is not re-run.
        std::map<std::pair<double, std::uint64_t>, RunOutput> cache;
        std::mutex cache_mutex;
        json grid_table = json::array();
        if (spec.lr.mode == LrSpec::Mode::grid) {
          const auto search = grid_search(
              [&](double eta, std::uint64_t seed) {
                auto run = execute_run(spec, algorithm, built, m, k, cell.rounds, eta, seed, Execution::serial);
                const double score = run.final_excess;
                std::lock_guard lock(cache_mutex);
                cache.emplace(std::make_pair(eta, seed), std::move(run));
                return score;
              },
              spec.lr.grid, seeds);
          cell.eta = search.best_eta;
          for (const auto& entry : search.table) {
            grid_table.push_back({{"eta", entry.eta}, {"mean_final_excess_loss", format_double(entry.mean)}});
          }
        } else {
          cell.eta = resolve_eta(spec, algorithm, built, m, k, cell.rounds);
        }

        std::vector<RunOutput> runs(seeds.size());
        if (spec.lr.mode == LrSpec::Mode::grid) {
          for (std::size_t s = 0; s < seeds.size(); ++s) runs[s] = std::move(cache.at({cell.eta, seeds[s]}));
        } else {
          const bool outer = seeds.size() > 1;
          const auto inner = outer ? Execution::serial : Execution::parallel;
          std::vector<std::exception_ptr> errors(seeds.size());
#pragma omp parallel for schedule(dynamic) if (outer)
          for (std::size_t s = 0; s < seeds.size(); ++s) {
            try {
              runs[s] = execute_run(spec, algorithm, built, m, k, cell.rounds, cell.eta, seeds[s], inner);
            } catch (...) {
              errors[s] = std::current_exception();
            }
          }
          for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
          }
        }

        for (auto& run : runs) {
          csv += run.rows;
          cell.final_excess_loss.push_back(run.final_excess);
          cell.final_dispersion.push_back(run.final_q);
          if (run.diverged) ++cell.diverged;
        }
        result.any_diverged = result.any_diverged || cell.diverged > 0;

        json entry = {{"algorithm", to_string(algorithm)},
                      {"M", m},
                      {"K", k},
                      {"R", cell.rounds},
                      {"eta", cell.eta},
                      {"lr", spec.lr.to_string()}};
        if (spec.lr.mode == LrSpec::Mode::theory) {
          const auto caps = theoretical_lr_caps(lr_inputs(built.meta, m, k, cell.rounds));
          json caps_json = json::array();
          for (double c : caps) caps_json.push_back(format_double(c));
          entry["theory_caps"] = caps_json;
        }
        if (!grid_table.empty()) entry["grid"] = grid_table;
        resolved_cells.push_back(entry);
        result.cells.push_back(std::move(cell));
      }
    }
  }

  if (write_files) {
    result.metrics_csv = spec.output_dir / "metrics.csv";
    result.manifest = spec.output_dir / "manifest.json";
    {
      auto out = open_output(result.metrics_csv);
      out << csv;
      if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", result.metrics_csv.string()));
    }
    {
      auto out = open_output(spec.output_dir / "summary.csv");
      out << "algorithm,M,K,R,eta,mean_final_excess_loss,std_final_excess_loss,"
             "mean_final_quarter_dispersion,n_seeds,n_diverged\n";
      for (const auto& cell : result.cells) {
        out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", to_string(cell.algorithm), cell.machines,
                           cell.local_steps, cell.rounds, format_double(cell.eta),
                           format_double(mean_of(cell.final_excess_loss)),
                           format_double(stddev_of(cell.final_excess_loss)),
                           format_double(mean_of(cell.final_dispersion)), cell.seeds.size(), cell.diverged);
      }
    }
    write_manifest(result.manifest, spec, {{"problems", resolved_problems}, {"cells", resolved_cells}});
  }
  return result;
}

namespace {

MnistRunOutput execute_mnist_run(const ExperimentSpec& spec, Algorithm algorithm, const Problem& problem,
                                 const LabeledDataset& test, std::size_t machines, std::size_t local_steps,
                                 std::size_t rounds, double eta, std::uint64_t seed, Execution execution) {
  RunConfig cfg = base_config(spec, algorithm, machines, local_steps, rounds);
  cfg.record_diagnostics = false;
  cfg.round_metrics = false;
  cfg.eta = eta;
  cfg.seed = seed;
  cfg.execution = execution;

  MnistRunOutput out;
  const std::string id = run_id(algorithm, machines, local_steps, seed);
  const std::string name = to_string(algorithm);
  const auto start = Clock::now();
  const Trajectory traj = run_algorithm(algorithm, problem, cfg, [&](std::size_t r, const Vector& x) {
    if ((r + 1) % spec.eval_every != 0 && r + 1 != rounds) return;
    const auto score = evaluate_classifier(x, test);
    out.rows += fmt::format("{},{},mnist-logistic,{},{},{},{},{},{},{},{},{},0,{:.3f}\n", id, name, machines,
                            local_steps, rounds, seed, r + 1, (r + 1) * local_steps, format_double(eta),
                            format_double(score.loss), format_double(score.accuracy), elapsed_ms(start));
    if (r + 1 == rounds) {
      out.accuracy = score.accuracy;
      out.loss = score.loss;
    }
  });
  out.diverged = traj.diverged;
  if (traj.diverged) {
    out.accuracy = 0.0;
    out.loss = kInf;
    const std::size_t r = traj.diverged_round.value_or(rounds - 1);
    out.rows += fmt::format("{},{},mnist-logistic,{},{},{},{},{},{},{},inf,0,1,{:.3f}\n", id, name, machines,
                            local_steps, rounds, seed, r + 1, (r + 1) * local_steps, format_double(eta),
                            elapsed_ms(start));
  } else if (!std::isfinite(out.loss)) {
    out.loss = kInf;
  }
  return out;
}

}  // namespace

MnistResult run_mnist(const ExperimentSpec& spec, const MnistData& data, bool write_files) {
  if (spec.threads > 0) omp_set_num_threads(static_cast<int>(spec.threads));
  if (write_files) ensure_dir(spec.output_dir);
  if (spec.lr.mode == LrSpec::Mode::theory) {
    throw ConfigError("lr 'theory' needs a known optimum; use fixed or grid for MNIST");
  }

  LabeledDataset train = data.train;
  if (spec.problem.train_limit && *spec.problem.train_limit < train.size()) {
    std::vector<std::size_t> first(*spec.problem.train_limit);
    std::iota(first.begin(), first.end(), std::size_t{0});
    train = train.subset(first);
  }
  train.validate();
  data.test.validate();

  MnistResult result;
  json resolved_cells = json::array();
  std::string csv = "run_id,algorithm,problem,M,K,R,seed,round,t,eta,test_loss,test_accuracy,diverged,wall_ms\n";

  for (auto m : spec.machines) {
    const Partition partition =
        dirichlet_partition(train.labels, train.classes, m, spec.problem.dirichlet_alpha, spec.problem.seed);
    std::vector<LabeledDataset> shards;
    shards.reserve(m);
    for (const auto& idx : partition.shards) shards.push_back(train.subset(idx));
    Problem problem;
    problem.objective = std::make_shared<LogisticEnsemble>(std::move(shards), spec.problem.resolved_l2());
    problem.start = Vector::Zero(static_cast<Eigen::Index>(problem.objective->dimension()));

    for (auto algorithm : spec.algorithms) {
      for (auto k : spec.local_steps) {
        MnistCell cell;
        cell.algorithm = algorithm;
        cell.machines = m;
        cell.local_steps = k;
        cell.rounds = spec.rounds_for(k);

        std::map<std::pair<double, std::uint64_t>, MnistRunOutput> cache;
        std::mutex cache_mutex;
        const std::vector<double> grid =
            spec.lr.mode == LrSpec::Mode::grid ? spec.lr.grid : std::vector<double>{spec.lr.value};
        const auto search = grid_search(
            [&](double eta, std::uint64_t seed) {
              auto run = execute_mnist_run(spec, algorithm, problem, data.test, m, k, cell.rounds, eta, seed,
                                           Execution::serial);
              const double score = run.loss;
              std::lock_guard lock(cache_mutex);
              cache.emplace(std::make_pair(eta, seed), std::move(run));
              return score;
            },
            grid, spec.seeds);
        cell.eta = search.best_eta;
        json grid_table = json::array();
        for (const auto& entry : search.table) {
          grid_table.push_back({{"eta", entry.eta}, {"mean_final_test_loss", format_double(entry.mean)}});
        }
        std::vector<std::uint64_t> seeds = spec.seeds;
        std::sort(seeds.begin(), seeds.end());
        seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
        for (auto seed : seeds) {
          auto& run = cache.at({cell.eta, seed});
          csv += run.rows;
          cell.test_accuracy.push_back(run.accuracy);
          cell.test_loss.push_back(run.loss);
          if (run.diverged) ++cell.diverged;
        }
        result.any_diverged = result.any_diverged || cell.diverged > 0;
        resolved_cells.push_back({{"algorithm", to_string(algorithm)},
                                  {"M", m},
                                  {"K", k},
                                  {"R", cell.rounds},
                                  {"eta", cell.eta},
                                  {"grid", grid_table}});
        result.cells.push_back(std::move(cell));
      }
    }
  }

  if (write_files) {
    {
      auto out = open_output(spec.output_dir / "mnist.csv");
      out << csv;
    }
    {
      auto out = open_output(spec.output_dir / "summary.csv");
      out << "algorithm,M,K,R,eta,mean_test_accuracy,mean_test_loss,n_seeds,n_diverged\n";
      for (const auto& cell : result.cells) {
        out << fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(cell.algorithm), cell.machines,
                           cell.local_steps, cell.rounds, format_double(cell.eta),
                           format_double(mean_of(cell.test_accuracy)), format_double(mean_of(cell.test_loss)),
                           cell.test_accuracy.size(), cell.diverged);
      }
    }
    write_manifest(spec.output_dir / "manifest.json", spec,
                   {{"train_examples", train.size()}, {"test_examples", data.test.size()}, {"cells", resolved_cells}});
  }
  return result;
}

}  // namespace slowcal
