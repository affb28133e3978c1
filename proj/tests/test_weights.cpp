#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "slowcal/errors.hpp"
#include "slowcal/weights.hpp"

using namespace slowcal;

TEST_CASE("weight_at follows (t+1)^p") {
  CHECK(weight_at(WeightSchedule::linear(), 4) == 5.0);
  CHECK(weight_at(WeightSchedule::uniform(), 7) == 1.0);
  CHECK(weight_at(WeightSchedule::polynomial(2.0), 2) == 9.0);
  CHECK(weight_at(WeightSchedule::polynomial(0.5), 3) == doctest::Approx(2.0));
}

TEST_CASE("prefix sums match closed forms") {
  CHECK(prefix_weight(WeightSchedule::linear(), 3) == 10.0L);
  CHECK(prefix_weight(WeightSchedule::uniform(), 9) == 10.0L);
  CHECK(prefix_weight(WeightSchedule::linear(), 100) == 5151.0L);
  CHECK(prefix_weight(WeightSchedule::polynomial(2.0), 3) == doctest::Approx(1 + 4 + 9 + 16));
}

TEST_CASE("consecutive prefix differences recover the weight at t up to 1e6") {
  for (const auto& s : {WeightSchedule::uniform(), WeightSchedule::linear(), WeightSchedule::polynomial(2.5),
                        WeightSchedule::polynomial(0.3)}) {
    for (StepIndex t : {1ull, 17ull, 4096ull, 999999ull, 1000000ull}) {
      const long double diff = prefix_weight(s, t) - prefix_weight(s, t - 1);
      CHECK(std::fabs(static_cast<double>(diff) / weight_at(s, t) - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("averaging coefficient") {
  CHECK(averaging_coeff(WeightSchedule::linear(), 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(averaging_coeff(WeightSchedule::uniform(), 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(averaging_coeff(WeightSchedule::linear(), 997) == doctest::Approx(0.002).epsilon(1e-14));
  for (StepIndex t : {0ull, 5ull, 123ull}) {
    const double g = averaging_coeff(WeightSchedule::polynomial(1.7), t);
    CHECK(g > 0.0);
    CHECK(g <= 1.0);
  }
}

TEST_CASE("the running-average recursion reproduces the direct weighted average") {
  for (double p : {0.0, 1.0, 2.0}) {
    const auto s = p == 0.0 ? WeightSchedule::uniform()
                            : (p == 1.0 ? WeightSchedule::linear() : WeightSchedule::polynomial(p));
    std::vector<double> w;
    double x = 0.0;
    for (int t = 0; t < 500; ++t) {
      const double wt = std::sin(0.37 * t) + 0.01 * t;
      w.push_back(wt);
      if (t == 0) {
        x = wt;
      } else {
        const double g = averaging_coeff(s, static_cast<StepIndex>(t - 1));
        x = (1.0 - g) * x + g * wt;
      }
      CHECK(std::fabs(x - oracles::weighted_average(w, p)) <= 1e-10 * std::max(1.0, std::fabs(x)));
    }
  }
}

TEST_CASE("weight table agrees with the pointwise functions") {
  const auto s = WeightSchedule::polynomial(1.5);
  const WeightTable table(s, 2000);
  CHECK(table.horizon() == 2000);
  for (StepIndex t : {0ull, 1ull, 999ull, 2000ull}) {
    CHECK(table.alpha(t) == weight_at(s, t));
    CHECK(std::fabs(table.prefix_extended(t) / prefix_weight(s, t) - 1.0L) <= 1e-15L);
    CHECK(table.gamma_at(t) == doctest::Approx(weight_at(s, t) / static_cast<double>(prefix_weight(s, t))));
  }
  CHECK(table.gamma_next(10) == doctest::Approx(averaging_coeff(s, 10)).epsilon(1e-14));
  CHECK_THROWS_AS((void)table.alpha(2001), std::out_of_range);
}

TEST_CASE("schedule parsing") {
  CHECK(WeightSchedule::parse("uniform") == WeightSchedule::uniform());
  CHECK(WeightSchedule::parse("linear") == WeightSchedule::linear());
  CHECK(WeightSchedule::parse("poly:2.5").exponent() == 2.5);
  CHECK(WeightSchedule::parse("poly:1") == WeightSchedule::linear());
  CHECK(WeightSchedule::parse(WeightSchedule::polynomial(0.25).name()) == WeightSchedule::polynomial(0.25));
  CHECK_THROWS_AS(WeightSchedule::parse("quadratic"), ConfigError);
  CHECK_THROWS_AS(WeightSchedule::parse("poly:-1"), ConfigError);
  CHECK_THROWS_AS(WeightSchedule::parse("poly:x"), ConfigError);
}
