// Serial reference loop vs the OpenMP machine loop on the same runs.
#include <benchmark/benchmark.h>

#include "slowcal/algorithms.hpp"
#include "slowcal/data.hpp"
#include "slowcal/objectives.hpp"

namespace {

slowcal::Problem quadratic_problem(std::size_t machines, std::size_t dimension) {
  slowcal::QuadraticSpec spec;
  spec.machines = machines;
  spec.dimension = dimension;
  spec.sigma = 1.0;
  slowcal::Problem p;
  p.objective = slowcal::make_quadratic(spec);
  p.start = slowcal::Vector::Zero(static_cast<Eigen::Index>(dimension));
  p.optimum = p.objective->optimum();
  return p;
}

slowcal::Problem logistic_problem(std::size_t machines) {
  slowcal::ClusterSpec spec;
  spec.machines = machines;
  spec.dimension = 32;
  spec.classes = 8;
  spec.examples_per_machine = 500;
  slowcal::Problem p;
  p.objective = std::make_shared<slowcal::LogisticEnsemble>(slowcal::synth_clusters(spec), 1e-2);
  p.start = slowcal::Vector::Zero(static_cast<Eigen::Index>(p.objective->dimension()));
  return p;
}

void run(benchmark::State& state, const slowcal::Problem& problem, slowcal::Algorithm algorithm,
         slowcal::Execution execution) {
  slowcal::RunConfig cfg;
  cfg.machines = problem.objective->machines();
  cfg.local_steps = 16;
  cfg.rounds = 10;
  cfg.eta = 0.01;
  cfg.execution = execution;
  cfg.record_anchors = false;
  cfg.round_metrics = problem.optimum.has_value();
  for (auto _ : state) {
    auto traj = slowcal::run_algorithm(algorithm, problem, cfg);
    benchmark::DoNotOptimize(traj.output.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(cfg.machines * cfg.total_steps()));
}

void BM_SlowcalQuadratic(benchmark::State& state) {
  static const auto problem = quadratic_problem(16, 200);
  run(state, problem, slowcal::Algorithm::slowcal,
      state.range(0) ? slowcal::Execution::parallel : slowcal::Execution::serial);
}

void BM_LocalQuadratic(benchmark::State& state) {
  static const auto problem = quadratic_problem(16, 200);
  run(state, problem, slowcal::Algorithm::local,
      state.range(0) ? slowcal::Execution::parallel : slowcal::Execution::serial);
}

void BM_SlowcalLogistic(benchmark::State& state) {
  static const auto problem = logistic_problem(16);
  run(state, problem, slowcal::Algorithm::slowcal,
      state.range(0) ? slowcal::Execution::parallel : slowcal::Execution::serial);
}

}  // namespace

// Argument 0 is the serial reference, 1 the OpenMP loop.
BENCHMARK(BM_SlowcalQuadratic)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LocalQuadratic)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SlowcalLogistic)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
