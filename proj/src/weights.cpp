#include "slowcal/weights.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include "slowcal/errors.hpp"

namespace slowcal {

namespace {

// Neumaier summation in long double.
struct CompensatedSum {
  long double sum = 0.0L;
  long double carry = 0.0L;

  void add(long double v) {
    const long double t = sum + v;
    if (std::fabs(sum) >= std::fabs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }
  long double value() const { return sum + carry; }
};

long double weight_extended(const WeightSchedule& s, StepIndex t) {
  const long double base = static_cast<long double>(t) + 1.0L;
  switch (s.kind()) {
    case WeightSchedule::Kind::uniform:
      return 1.0L;
    case WeightSchedule::Kind::linear:
      return base;
    case WeightSchedule::Kind::polynomial:
      return std::pow(base, static_cast<long double>(s.exponent()));
  }
  return 1.0L;
}

}  // namespace

WeightSchedule WeightSchedule::polynomial(double exponent) {
  if (!(exponent >= 0.0) || !std::isfinite(exponent)) {
    throw ConfigError("polynomial weight exponent must be a finite nonnegative number");
  }
  if (exponent == 0.0) return uniform();
  if (exponent == 1.0) return linear();
  return WeightSchedule(Kind::polynomial, exponent);
}

WeightSchedule WeightSchedule::parse(std::string_view text) {
  if (text == "uniform") return uniform();
  if (text == "linear") return linear();
  constexpr std::string_view prefix = "poly:";
  if (text.substr(0, prefix.size()) == prefix) {
    const std::string rest(text.substr(prefix.size()));
    std::size_t used = 0;
    double p = 0.0;
    try {
      p = std::stod(rest, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != rest.size()) {
      throw ConfigError("schedule: cannot parse exponent in '" + std::string(text) + "'");
    }
    return polynomial(p);
  }
  throw ConfigError("schedule: expected uniform | linear | poly:<p>, got '" + std::string(text) + "'");
}

std::string WeightSchedule::name() const {
  switch (kind_) {
    case Kind::uniform:
      return "uniform";
    case Kind::linear:
      return "linear";
    case Kind::polynomial: {
      char buf[64];
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), exponent_);
      (void)ec;
      return "poly:" + std::string(buf, end);
    }
  }
  return "uniform";
}

double weight_at(const WeightSchedule& schedule, StepIndex t) {
  return static_cast<double>(weight_extended(schedule, t));
}

long double prefix_weight(const WeightSchedule& schedule, StepIndex t) {
  const long double n = static_cast<long double>(t) + 1.0L;
  switch (schedule.kind()) {
    case WeightSchedule::Kind::uniform:
      return n;
    case WeightSchedule::Kind::linear:
      return n * (n + 1.0L) / 2.0L;
    case WeightSchedule::Kind::polynomial: {
      CompensatedSum acc;
      for (StepIndex tau = 0; tau <= t; ++tau) acc.add(weight_extended(schedule, tau));
      return acc.value();
    }
  }
  return n;
}

double averaging_coeff(const WeightSchedule& schedule, StepIndex t) {
  return static_cast<double>(weight_extended(schedule, t + 1) / prefix_weight(schedule, t + 1));
}

WeightTable::WeightTable(const WeightSchedule& schedule, StepIndex horizon)
    : schedule_(schedule), alpha_(horizon + 1), prefix_(horizon + 1), gamma_(horizon + 1) {
  CompensatedSum acc;
  for (StepIndex t = 0; t <= horizon; ++t) {
    const long double a = weight_extended(schedule, t);
    acc.add(a);
    alpha_[t] = static_cast<double>(a);
    prefix_[t] = schedule.kind() == WeightSchedule::Kind::polynomial ? acc.value()
                                                                     : prefix_weight(schedule, t);
    gamma_[t] = static_cast<double>(a / prefix_[t]);
  }
}

}  // namespace slowcal
