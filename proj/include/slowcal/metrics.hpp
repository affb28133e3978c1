#pragma once

#include <span>

#include "slowcal/objectives.hpp"
#include "slowcal/weights.hpp"

namespace slowcal {

struct Trajectory;

/// f(x) - f(w*). Requires problem.optimum.
double excess_loss(const Problem& problem, const Vector& x);

/// Q = (alpha^2 / M^2) sum_{i,j} ||x^i - x^j||^2 over ordered pairs.
double dispersion(std::span<const Vector> query_points, double alpha);

/// alpha^2 ||(1/M) sum_i grad f_i(x^i) - grad f(xbar)||^2 with xbar the
/// machine average of the query points. Uses exact gradients.
double bias_increment(const Objective& objective, std::span<const Vector> query_points, double alpha);

struct MomentumResidual {
  double max_abs = 0.0;         // max_t of the residual norm
  double gradient_scale = 0.0;  // max_t ||g_t||
  double relative() const { return gradient_scale > 0.0 ? max_abs / gradient_scale : max_abs; }
};

/// Checks that a recorded single-machine Anytime run satisfies the momentum
/// form of its query-point update:
///   (x_{t+1} - x_t) / eta = -(1/alpha_{0:t+1}) sum_{n<=t} alpha_{t+1} alpha_n (alpha_{0:n}/alpha_{0:t}) g_n.
/// Throws std::invalid_argument when the trajectory lacks per-step records.
MomentumResidual momentum_residual(const Trajectory& trajectory);

struct CertificateCheck {
  double min_lower_slack = 0.0;  // min_t alpha_{0:t} (f(x_t) - f*)
  double min_upper_slack = 0.0;  // min_t [sum_{tau<=t} alpha_tau grad f(x_tau).(w_tau - w*) - alpha_{0:t}(f(x_t) - f*)]
  bool holds(double tolerance) const {
    return min_lower_slack >= -tolerance && min_upper_slack >= -tolerance;
  }
};

/// Weighted-average certificate for a recorded Anytime-style trajectory:
///   0 <= alpha_{0:t} (f(x_t) - f*) <= sum_{tau<=t} alpha_tau grad f(x_tau).(w_tau - w*).
CertificateCheck anytime_certificate(const Problem& problem, const Trajectory& trajectory);

/// max_t |xbar_{t+1} - ((1-gamma_{t+1}) xbar_t + gamma_{t+1} wbar_{t+1})|, relative to
/// the iterate scale, over the recorded machine averages.
double weighted_average_defect(const Trajectory& trajectory);

}  // namespace slowcal
