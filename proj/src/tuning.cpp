#include "slowcal/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <limits>

#include "slowcal/errors.hpp"

namespace slowcal {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::array<double, 5> theoretical_lr_caps(const LrInputs& in) {
  if (in.machines < 1 || in.local_steps < 1 || in.rounds < 1) {
    throw ConfigError("theoretical lr: M, K, R must be >= 1");
  }
  if (!(in.smoothness >= 0.0) || !(in.sigma >= 0.0) || !(in.gstar >= 0.0) || !(in.b0 >= 0.0)) {
    throw ConfigError("theoretical lr: L, sigma, G_*, B0 must be nonnegative");
  }
  const double l = in.smoothness;
  const double k = static_cast<double>(in.local_steps);
  const double r = static_cast<double>(in.rounds);
  const double m = static_cast<double>(in.machines);
  const double t = k * r;

  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : kInf; };
  const double noise_root = std::sqrt(in.sigma) + std::sqrt(in.gstar);
  return {
      ratio(1.0, 48.0 * l * (t + 1.0)),
      ratio(1.0, 10.0 * l * k * k),
      ratio(1.0, 40.0 * l * k * std::pow(t + 1.0, 2.0 / 3.0)),
      ratio(in.b0 * std::sqrt(m), in.sigma * std::pow(t, 1.5)),
      ratio(std::sqrt(in.b0), std::sqrt(l) * std::pow(k, 1.75) * r * noise_root),
  };
}

double theoretical_lr(const LrInputs& in) {
  if (!(in.smoothness > 0.0)) throw ConfigError("theoretical lr: L must be positive");
  if (!(in.b0 > 0.0)) throw ConfigError("theoretical lr: B0 = 0 (start is already optimal)");
  const auto caps = theoretical_lr_caps(in);
  return *std::min_element(caps.begin(), caps.end());
}

GridResult grid_search(const RunScore& score, std::span<const double> grid,
                       std::span<const std::uint64_t> seeds, bool parallel) {
  if (grid.empty()) throw ConfigError("grid search: empty learning-rate grid");
  if (seeds.empty()) throw ConfigError("grid search: no seeds");

  std::vector<double> etas(grid.begin(), grid.end());
  std::sort(etas.begin(), etas.end());
  etas.erase(std::unique(etas.begin(), etas.end()), etas.end());

  const std::size_t n_seeds = seeds.size();
  const auto jobs = static_cast<std::ptrdiff_t>(etas.size() * n_seeds);
  std::vector<double> scores(static_cast<std::size_t>(jobs));
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t j = 0; j < jobs; ++j) {
    const auto idx = static_cast<std::size_t>(j);
    try {
      const double s = score(etas[idx / n_seeds], seeds[idx % n_seeds]);
      scores[idx] = std::isfinite(s) ? s : kInf;
    } catch (...) {
#pragma omp critical(slowcal_grid_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  GridResult result;
  double best = kInf;
  for (std::size_t e = 0; e < etas.size(); ++e) {
    GridEntry entry;
    entry.eta = etas[e];
    entry.scores.assign(scores.begin() + static_cast<std::ptrdiff_t>(e * n_seeds),
                        scores.begin() + static_cast<std::ptrdiff_t>((e + 1) * n_seeds));
    double sum = 0.0;
    for (double s : entry.scores) sum += s;
    entry.mean = sum / static_cast<double>(n_seeds);
    if (entry.mean < best) {
      best = entry.mean;
      result.best_eta = entry.eta;
    }
    result.table.push_back(std::move(entry));
  }
  if (!std::isfinite(best)) {
    throw SearchError(fmt::format("grid search: every run diverged for grid [{}]", fmt::join(etas, ", ")));
  }
  return result;
}

GridResult grid_search(const Problem& problem, Algorithm algorithm, std::span<const double> grid,
                       const RunConfig& config, std::span<const std::uint64_t> seeds,
                       bool parallel) {
  RunConfig base = config;
  base.record_diagnostics = false;
  base.record_anchors = false;
  if (parallel) base.execution = Execution::serial;
  return grid_search(
      [&](double eta, std::uint64_t seed) {
        RunConfig cfg = base;
        cfg.eta = eta;
        cfg.seed = seed;
        return run_algorithm(algorithm, problem, cfg).final_excess_loss();
      },
      grid, seeds, parallel);
}

std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi >= lo) || count == 0) throw ConfigError("log_grid: need 0 < lo <= hi, count >= 1");
  std::vector<double> out;
  out.reserve(count);
  if (count == 1) return {lo};
  const double step = std::log(hi / lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out.push_back(lo * std::exp(step * static_cast<double>(i)));
  out.back() = hi;
  return out;
}

RminMethod parse_rmin_method(std::string_view name) {
  if (name == "minibatch") return RminMethod::minibatch;
  if (name == "accelerated-minibatch") return RminMethod::accelerated_minibatch;
  if (name == "local") return RminMethod::local;
  if (name == "slowcal") return RminMethod::slowcal;
  throw ConfigError(fmt::format("rmin: unknown method '{}'", name));
}

double rmin(RminMethod method, double machines, double local_steps, double dissimilarity) {
  if (machines < 1.0 || local_steps < 1.0) throw ConfigError("rmin: M and K must be >= 1");
  const double mk = machines * local_steps;
  switch (method) {
    case RminMethod::minibatch:
      return mk;
    case RminMethod::accelerated_minibatch:
      return std::cbrt(mk);
    case RminMethod::local:
      return std::pow(dissimilarity, 4) * mk * mk * mk + machines * machines * machines * local_steps;
    case RminMethod::slowcal:
      return (dissimilarity + 1.0) * machines * std::sqrt(local_steps);
  }
  throw ConfigError("rmin: unknown method");
}

}  // namespace slowcal
