#include "slowcal/algorithms.hpp"

#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "slowcal/errors.hpp"
#include "slowcal/metrics.hpp"

namespace slowcal {

Algorithm parse_algorithm(std::string_view name) {
  if (name == "minibatch") return Algorithm::minibatch;
  if (name == "local") return Algorithm::local;
  if (name == "local-weighted") return Algorithm::local_weighted;
  if (name == "anytime") return Algorithm::anytime;
  if (name == "slowcal") return Algorithm::slowcal;
  throw ConfigError(fmt::format(
      "algorithm: expected minibatch | local | local-weighted | anytime | slowcal, got '{}'", name));
}

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::minibatch:
      return "minibatch";
    case Algorithm::local:
      return "local";
    case Algorithm::local_weighted:
      return "local-weighted";
    case Algorithm::anytime:
      return "anytime";
    case Algorithm::slowcal:
      return "slowcal";
  }
  return "slowcal";
}

void RunConfig::validate() const {
  if (machines < 1) throw ConfigError("M must be >= 1");
  if (local_steps < 1) throw ConfigError("K must be >= 1");
  if (rounds < 1) throw ConfigError("R must be >= 1");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be a positive finite number");
}

double Trajectory::final_excess_loss() const {
  if (diverged || rounds.empty()) return std::numeric_limits<double>::infinity();
  return rounds.back().excess_loss;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Machine average, accumulated in ascending machine order.
Vector machine_mean(std::span<const Vector> values) {
  Vector sum = values[0];
  for (std::size_t i = 1; i < values.size(); ++i) sum += values[i];
  return sum / static_cast<double>(values.size());
}

bool all_finite(const Vector& v) { return v.size() == 0 || v.allFinite(); }

// Shared bookkeeping for every algorithm: round records, per-step
// diagnostics, divergence handling.
class Recorder {
 public:
  Recorder(Algorithm algorithm, const Problem& problem, const RunConfig& config,
           const RoundHook& hook)
      : problem_(problem),
        config_(config),
        hook_(hook),
        table_(config.schedule, config.total_steps() + 1) {
    trajectory_.algorithm = algorithm;
    trajectory_.config = config;
    trajectory_.rounds.reserve(config.rounds);
  }

  const WeightTable& table() const { return table_; }
  bool diagnostics() const { return config_.record_diagnostics; }

  void record_step(StepIndex t, std::span<const Vector> ws, std::span<const Vector> xs) {
    StepRecord rec;
    rec.t = t;
    rec.w_bar = machine_mean(ws);
    rec.x_bar = machine_mean(xs);
    const double alpha = table_.alpha(t);
    rec.dispersion = dispersion(xs, alpha);
    rec.v_increment = bias_increment(*problem_.objective, xs, alpha);
    if (problem_.optimum) rec.distance_sq = (rec.w_bar - problem_.optimum->point).squaredNorm();
    trajectory_.steps.push_back(std::move(rec));
  }

  void attach_gradients(std::span<const Vector> gs) {
    trajectory_.steps.back().g_bar = machine_mean(gs);
  }

  /// Returns false once the run has diverged; the caller stops.
  bool end_round(std::size_t r, Anchor anchor, const Vector& output,
                 std::span<const Vector> query_points) {
    RoundRecord rec;
    rec.round = r;
    rec.step = static_cast<StepIndex>((r + 1) * config_.local_steps);
    const Vector& w_bar = anchor.w.size() > 0 ? anchor.w : anchor.x;
    bool finite = all_finite(anchor.w) && all_finite(anchor.x) && all_finite(output);

    if (finite && config_.round_metrics) {
      const auto& objective = *problem_.objective;
      rec.grad_norm = objective.global_gradient(output).norm();
      if (problem_.optimum) {
        rec.excess_loss = objective.global_value(output) - problem_.optimum->value;
        rec.distance_sq = (w_bar - problem_.optimum->point).squaredNorm();
      } else {
        rec.excess_loss = std::numeric_limits<double>::quiet_NaN();
      }
      if (!query_points.empty()) {
        const double alpha = table_.alpha(rec.step);
        rec.dispersion = dispersion(query_points, alpha);
        rec.v_increment = bias_increment(objective, query_points, alpha);
      }
      if (!std::isfinite(rec.grad_norm) ||
          (problem_.optimum && !std::isfinite(rec.excess_loss))) {
        finite = false;
      }
    }

    if (!finite) {
      mark_diverged(r);
      return false;
    }
    if (config_.record_anchors) rec.anchor = anchor;
    trajectory_.rounds.push_back(std::move(rec));
    trajectory_.last_anchor = std::move(anchor);
    trajectory_.output = output;
    if (hook_) hook_(r, output);
    return true;
  }

  Trajectory finish() { return std::move(trajectory_); }

 private:
  void mark_diverged(std::size_t from) {
    trajectory_.diverged = true;
    trajectory_.diverged_round = from;
    for (std::size_t r = from; r < config_.rounds; ++r) {
      RoundRecord rec;
      rec.round = r;
      rec.step = static_cast<StepIndex>((r + 1) * config_.local_steps);
      rec.excess_loss = kInf;
      rec.grad_norm = kInf;
      rec.dispersion = kInf;
      rec.v_increment = kInf;
      rec.distance_sq = kInf;
      rec.diverged = true;
      trajectory_.rounds.push_back(std::move(rec));
    }
  }

  const Problem& problem_;
  const RunConfig& config_;
  const RoundHook& hook_;
  WeightTable table_;
  Trajectory trajectory_;
};

void check_problem(const Problem& problem, const RunConfig& config, bool single_machine) {
  config.validate();
  if (!problem.objective) throw ConfigError("problem has no objective");
  if (static_cast<std::size_t>(problem.start.size()) != problem.objective->dimension()) {
    throw ConfigError("start point dimension does not match the problem");
  }
  if (single_machine) {
    if (config.machines != 1) throw ConfigError("anytime: M must be 1 (batch-gradient single machine)");
  } else if (config.machines != problem.objective->machines()) {
    throw ConfigError(fmt::format("M = {} but the problem has {} machines", config.machines,
                                  problem.objective->machines()));
  }
}

SampleKey sample_key(const RunConfig& config, std::size_t machine, std::size_t round,
                     std::size_t step) {
  return {config.seed, static_cast<std::uint32_t>(machine), static_cast<std::uint32_t>(round),
          static_cast<std::uint32_t>(step)};
}

double step_weight(const WeightTable& table, const RunConfig& config, StepIndex t) {
  return config.fault.alpha_shift_at_gradient ? table.alpha(t + 1) : table.alpha(t);
}

double averaging_weight(const WeightTable& table, const RunConfig& config, StepIndex t) {
  return config.fault.gamma_off_by_one ? table.gamma_at(t) : table.gamma_next(t);
}

bool run_parallel(const RunConfig& config) {
  return config.execution == Execution::parallel && !config.record_diagnostics;
}

// Runs `step(i, k)` for every machine i and local step k of one round. The
// parallel path runs machines concurrently; the diagnostic path is
// step-major so the recorder can observe every global step. Each machine's
// arithmetic is identical in both.
template <typename Step, typename Observe>
void local_round(std::size_t machines, std::size_t local_steps, bool parallel, bool step_major,
                 Step&& step, Observe&& observe) {
  const auto m = static_cast<std::ptrdiff_t>(machines);
  if (step_major) {
    for (std::size_t k = 0; k < local_steps; ++k) {
      observe(k, /*before=*/true);
      for (std::ptrdiff_t i = 0; i < m; ++i) step(static_cast<std::size_t>(i), k);
      observe(k, /*before=*/false);
    }
    return;
  }
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < local_steps; ++k) step(static_cast<std::size_t>(i), k);
  }
}

}  // namespace

Trajectory run_minibatch(const Problem& problem, const RunConfig& config, const RoundHook& hook) {
  check_problem(problem, config, false);
  Recorder rec(Algorithm::minibatch, problem, config, hook);
  const auto& objective = *problem.objective;
  const std::size_t m = config.machines;
  const std::size_t k_steps = config.local_steps;

  Vector x = problem.start;
  Vector anchor_sum = Vector::Zero(x.size());
  std::vector<Vector> messages(m);

  for (std::size_t r = 0; r < config.rounds; ++r) {
    const auto mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (run_parallel(config))
    for (std::ptrdiff_t ii = 0; ii < mm; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      Vector g;
      Vector sum = Vector::Zero(x.size());
      for (std::size_t k = 0; k < k_steps; ++k) {
        objective.stochastic_gradient(i, x, sample_key(config, i, r, k), g);
        sum += g;
      }
      messages[i] = sum / static_cast<double>(k_steps);
    }
    x = x - config.eta * machine_mean(messages);
    anchor_sum += x;
    const Vector output = anchor_sum / static_cast<double>(r + 1);
    if (!rec.end_round(r, Anchor{Vector(), x}, output, {})) break;
  }
  return rec.finish();
}

Trajectory run_local(const Problem& problem, const RunConfig& config, bool weighted,
                     const RoundHook& hook) {
  check_problem(problem, config, false);
  Recorder rec(weighted ? Algorithm::local_weighted : Algorithm::local, problem, config, hook);
  const auto& table = rec.table();
  const auto& objective = *problem.objective;
  const std::size_t m = config.machines;
  const std::size_t k_steps = config.local_steps;
  const auto d = problem.start.size();

  Vector anchor = problem.start;
  Vector weighted_sum = Vector::Zero(d);
  std::vector<Vector> iterates(m), grads(m), partial(m);

  for (std::size_t r = 0; r < config.rounds; ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      iterates[i] = anchor;
      if (weighted) partial[i] = Vector::Zero(d);
    }
    auto step = [&](std::size_t i, std::size_t k) {
      const StepIndex t = r * k_steps + k;
      if (weighted) partial[i] += table.alpha(t) * iterates[i];
      objective.stochastic_gradient(i, iterates[i], sample_key(config, i, r, k), grads[i]);
      const double scale = weighted ? step_weight(table, config, t) : 1.0;
      iterates[i] = iterates[i] - (config.eta * scale) * grads[i];
    };
    auto observe = [&](std::size_t k, bool before) {
      if (before) {
        rec.record_step(r * k_steps + k, iterates, iterates);
      } else {
        rec.attach_gradients(grads);
      }
    };
    local_round(m, k_steps, run_parallel(config), rec.diagnostics(), step, observe);

    const StepIndex t_end = (r + 1) * k_steps;
    if (rec.diagnostics() && r + 1 == config.rounds) rec.record_step(t_end, iterates, iterates);
    anchor = machine_mean(iterates);
    Vector output = anchor;
    if (weighted) {
      weighted_sum += machine_mean(partial);
      output = (weighted_sum + table.alpha(t_end) * anchor) / table.prefix(t_end);
    }
    if (!rec.end_round(r, Anchor{Vector(), anchor}, output, iterates)) break;
  }
  return rec.finish();
}

Trajectory run_anytime_single(const Problem& problem, const RunConfig& config,
                              const RoundHook& hook) {
  check_problem(problem, config, true);
  Recorder rec(Algorithm::anytime, problem, config, hook);
  const auto& table = rec.table();
  const auto& objective = *problem.objective;
  const std::size_t sources = objective.machines();

  Vector w = problem.start;
  Vector x = problem.start;
  Vector g_sum;
  Vector g_i;
  for (std::size_t r = 0; r < config.rounds; ++r) {
    for (std::size_t k = 0; k < config.local_steps; ++k) {
      const StepIndex t = r * config.local_steps + k;
      if (rec.diagnostics()) rec.record_step(t, std::span(&w, 1), std::span(&x, 1));
      g_sum = Vector::Zero(x.size());
      for (std::size_t i = 0; i < sources; ++i) {
        objective.stochastic_gradient(i, x, sample_key(config, i, r, k), g_i);
        g_sum += g_i;
      }
      const Vector g = g_sum / static_cast<double>(sources);
      if (rec.diagnostics()) rec.attach_gradients(std::span(&g, 1));
      w = w - (config.eta * step_weight(table, config, t)) * g;
      const double gamma = averaging_weight(table, config, t);
      x = (1.0 - gamma) * x + gamma * w;
    }
    if (rec.diagnostics() && r + 1 == config.rounds) {
      rec.record_step((r + 1) * config.local_steps, std::span(&w, 1), std::span(&x, 1));
    }
    if (!rec.end_round(r, Anchor{w, x}, x, {})) break;
  }
  return rec.finish();
}

Trajectory run_slowcal(const Problem& problem, const RunConfig& config, const RoundHook& hook) {
  check_problem(problem, config, false);
  Recorder rec(Algorithm::slowcal, problem, config, hook);
  const auto& table = rec.table();
  const auto& objective = *problem.objective;
  const std::size_t m = config.machines;
  const std::size_t k_steps = config.local_steps;

  Anchor anchor{problem.start, problem.start};
  std::vector<Vector> ws(m), xs(m), grads(m);

  for (std::size_t r = 0; r < config.rounds; ++r) {
    for (std::size_t i = 0; i < m; ++i) {
      ws[i] = anchor.w;
      xs[i] = anchor.x;
    }
    auto step = [&](std::size_t i, std::size_t k) {
      const StepIndex t = r * k_steps + k;
      objective.stochastic_gradient(i, xs[i], sample_key(config, i, r, k), grads[i]);
      ws[i] = ws[i] - (config.eta * step_weight(table, config, t)) * grads[i];
      const double gamma = averaging_weight(table, config, t);
      xs[i] = (1.0 - gamma) * xs[i] + gamma * ws[i];
    };
    auto observe = [&](std::size_t k, bool before) {
      if (before) {
        rec.record_step(r * k_steps + k, ws, xs);
      } else {
        rec.attach_gradients(grads);
      }
    };
    local_round(m, k_steps, run_parallel(config), rec.diagnostics(), step, observe);

    if (rec.diagnostics() && r + 1 == config.rounds) rec.record_step((r + 1) * k_steps, ws, xs);
    anchor = Anchor{machine_mean(ws), machine_mean(xs)};
    const Vector output = anchor.x;
    if (!rec.end_round(r, anchor, output, xs)) break;
  }
  return rec.finish();
}

Trajectory run_algorithm(Algorithm algorithm, const Problem& problem, const RunConfig& config,
                         const RoundHook& hook) {
  switch (algorithm) {
    case Algorithm::minibatch:
      return run_minibatch(problem, config, hook);
    case Algorithm::local:
      return run_local(problem, config, false, hook);
    case Algorithm::local_weighted:
      return run_local(problem, config, true, hook);
    case Algorithm::anytime:
      return run_anytime_single(problem, config, hook);
    case Algorithm::slowcal:
      return run_slowcal(problem, config, hook);
  }
  throw ConfigError("unknown algorithm");
}

}  // namespace slowcal
