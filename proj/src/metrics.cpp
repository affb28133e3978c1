#include "slowcal/metrics.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "slowcal/algorithms.hpp"

namespace slowcal {

double excess_loss(const Problem& problem, const Vector& x) {
  if (!problem.optimum) throw std::invalid_argument("excess_loss: problem has no reference optimum");
  return problem.objective->global_value(x) - problem.optimum->value;
}

double dispersion(std::span<const Vector> query_points, double alpha) {
  const std::size_t m = query_points.size();
  if (m < 2) return 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) pairs += (query_points[i] - query_points[j]).squaredNorm();
  }
  const auto mm = static_cast<double>(m);
  return alpha * alpha * 2.0 * pairs / (mm * mm);
}

double bias_increment(const Objective& objective, std::span<const Vector> query_points,
                      double alpha) {
  const std::size_t m = query_points.size();
  if (m == 0) return 0.0;
  Vector x_bar = query_points[0];
  for (std::size_t i = 1; i < m; ++i) x_bar += query_points[i];
  x_bar /= static_cast<double>(m);

  Vector g_sum = Vector::Zero(x_bar.size());
  Vector g;
  for (std::size_t i = 0; i < m; ++i) {
    objective.exact_gradient(i, query_points[i], g);
    g_sum += g;
  }
  const Vector deviation = g_sum / static_cast<double>(m) - objective.global_gradient(x_bar);
  return alpha * alpha * deviation.squaredNorm();
}

namespace {

void require_steps(const Trajectory& trajectory) {
  const auto expected = trajectory.config.total_steps() + 1;
  if (trajectory.steps.size() != expected) {
    throw std::invalid_argument("trajectory has no per-step records (run with record_diagnostics)");
  }
  for (std::size_t t = 0; t + 1 < expected; ++t) {
    if (trajectory.steps[t].g_bar.size() == 0) {
      throw std::invalid_argument("trajectory is missing recorded gradients");
    }
  }
}

}  // namespace

MomentumResidual momentum_residual(const Trajectory& trajectory) {
  require_steps(trajectory);
  const auto& steps = trajectory.steps;
  const StepIndex horizon = trajectory.config.total_steps();
  const WeightTable table(trajectory.config.schedule, horizon);
  const double eta = trajectory.config.eta;

  MomentumResidual out;
  // running = sum_{n<=t} alpha_n alpha_{0:n} g_n
  Vector running = Vector::Zero(steps.front().x_bar.size());
  for (StepIndex t = 0; t < horizon; ++t) {
    const auto& g = steps[t].g_bar;
    out.gradient_scale = std::max(out.gradient_scale, g.norm());
    running += (table.alpha(t) * table.prefix(t)) * g;
    const double coeff = table.alpha(t + 1) / (table.prefix(t + 1) * table.prefix(t));
    const Vector lhs = (steps[t + 1].x_bar - steps[t].x_bar) / eta;
    out.max_abs = std::max(out.max_abs, (lhs + coeff * running).norm());
  }
  return out;
}

CertificateCheck anytime_certificate(const Problem& problem, const Trajectory& trajectory) {
  if (!problem.optimum) throw std::invalid_argument("certificate needs a reference optimum");
  if (trajectory.steps.empty()) throw std::invalid_argument("trajectory has no per-step records");
  const WeightTable table(trajectory.config.schedule, trajectory.steps.back().t);
  const auto& objective = *problem.objective;
  const auto& w_star = problem.optimum->point;

  CertificateCheck out;
  out.min_lower_slack = std::numeric_limits<double>::infinity();
  out.min_upper_slack = std::numeric_limits<double>::infinity();
  double linear_sum = 0.0;
  for (const auto& s : trajectory.steps) {
    const double weighted_gap = table.prefix(s.t) * (objective.global_value(s.x_bar) - problem.optimum->value);
    linear_sum += table.alpha(s.t) * objective.global_gradient(s.x_bar).dot(s.w_bar - w_star);
    out.min_lower_slack = std::min(out.min_lower_slack, weighted_gap);
    out.min_upper_slack = std::min(out.min_upper_slack, linear_sum - weighted_gap);
  }
  return out;
}

double weighted_average_defect(const Trajectory& trajectory) {
  const auto& steps = trajectory.steps;
  if (steps.empty()) throw std::invalid_argument("trajectory has no per-step records");
  const WeightTable table(trajectory.config.schedule, steps.back().t);
  auto scale = [](const Vector& v) { return std::max(1.0, v.norm()); };
  double worst = (steps.front().x_bar - steps.front().w_bar).norm() / scale(steps.front().x_bar);
  for (std::size_t n = 0; n + 1 < steps.size(); ++n) {
    const double gamma = table.gamma_next(steps[n].t);
    const Vector expected = (1.0 - gamma) * steps[n].x_bar + gamma * steps[n + 1].w_bar;
    worst = std::max(worst, (steps[n + 1].x_bar - expected).norm() / scale(steps[n + 1].x_bar));
  }
  return worst;
}

}  // namespace slowcal
