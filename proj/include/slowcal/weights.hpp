#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace slowcal {

using StepIndex = std::uint64_t;

/// Averaging weights alpha_t = (t+1)^p, indexed from t = 0.
///
/// Uniform is p = 0 and linear is p = 1; both have exact closed-form prefix
/// sums. Any other exponent falls back to a compensated running sum carried
/// in extended precision, so that consecutive prefix differences still
/// recover the individual weights at large t.
class WeightSchedule {
 public:
  enum class Kind { uniform, linear, polynomial };

  static WeightSchedule uniform() { return WeightSchedule(Kind::uniform, 0.0); }
  static WeightSchedule linear() { return WeightSchedule(Kind::linear, 1.0); }
  static WeightSchedule polynomial(double exponent);

  /// Parses `uniform`, `linear` or `poly:<p>`.
  static WeightSchedule parse(std::string_view text);

  Kind kind() const { return kind_; }
  double exponent() const { return exponent_; }
  std::string name() const;

  bool operator==(const WeightSchedule&) const = default;

 private:
  WeightSchedule(Kind kind, double exponent) : kind_(kind), exponent_(exponent) {}

  Kind kind_;
  double exponent_;
};

double weight_at(const WeightSchedule& schedule, StepIndex t);

/// alpha_{0:t}. Returned in extended precision; callers that only need a
/// ratio can narrow to double.
long double prefix_weight(const WeightSchedule& schedule, StepIndex t);

/// gamma_{t+1} = alpha_{t+1} / alpha_{0:t+1}, the coefficient in
/// x_{t+1} = (1 - gamma) x_t + gamma w_{t+1}.
double averaging_coeff(const WeightSchedule& schedule, StepIndex t);

/// Precomputed weights for t = 0..horizon, built with one compensated pass.
/// Runs use this instead of calling prefix_weight per step.
class WeightTable {
 public:
  WeightTable(const WeightSchedule& schedule, StepIndex horizon);

  const WeightSchedule& schedule() const { return schedule_; }
  StepIndex horizon() const { return static_cast<StepIndex>(alpha_.size()) - 1; }

  double alpha(StepIndex t) const { return alpha_.at(t); }
  double prefix(StepIndex t) const { return static_cast<double>(prefix_.at(t)); }
  long double prefix_extended(StepIndex t) const { return prefix_.at(t); }
  /// alpha_t / alpha_{0:t}.
  double gamma_at(StepIndex t) const { return gamma_.at(t); }
  /// gamma_{t+1}; valid for t < horizon.
  double gamma_next(StepIndex t) const { return gamma_.at(t + 1); }

 private:
  WeightSchedule schedule_;
  std::vector<double> alpha_;
  std::vector<long double> prefix_;
  std::vector<double> gamma_;
};

}  // namespace slowcal
