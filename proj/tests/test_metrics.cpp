#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "slowcal/algorithms.hpp"
#include "slowcal/metrics.hpp"
#include "slowcal/rng.hpp"

using namespace slowcal;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Problem problem_of(std::shared_ptr<const Objective> obj, Vector start) {
  Problem p;
  p.optimum = obj->optimum();
  p.objective = std::move(obj);
  p.start = std::move(start);
  return p;
}

RunConfig anytime_cfg(WeightSchedule s, std::size_t steps, double eta) {
  RunConfig cfg;
  cfg.machines = 1;
  cfg.local_steps = 1;
  cfg.rounds = steps;
  cfg.eta = eta;
  cfg.schedule = s;
  cfg.record_diagnostics = true;
  return cfg;
}

}  // namespace

TEST_CASE("excess loss") {
  auto q = std::make_shared<QuadraticEnsemble>(
      QuadraticEnsemble::shared(Matrix::Identity(2, 2), {vec({1, 0}), vec({-1, 2})}, 0.0));
  const auto p = problem_of(q, Vector::Zero(2));
  CHECK(std::fabs(excess_loss(p, p.optimum->point)) <= 1e-12);
  CHECK(excess_loss(p, p.optimum->point + vec({0, 1})) == doctest::Approx(0.5).epsilon(1e-14));

  QuadraticSpec spec;
  const auto r = problem_of(make_quadratic(spec), Vector::Zero(20));
  CHECK(std::fabs(excess_loss(r, r.optimum->point)) <= 1e-12);
}

TEST_CASE("dispersion") {
  const std::vector<Vector> same(3, vec({1, 2}));
  CHECK(dispersion(same, 5.0) == 0.0);
  const std::vector<Vector> two = {vec({0, 0}), vec({2, 0})};
  CHECK(dispersion(two, 3.0) == doctest::Approx(18.0).epsilon(1e-15));

  RandomStream rng(2, StreamPurpose::problem);
  std::vector<Vector> xs;
  std::vector<std::vector<double>> raw;
  for (int i = 0; i < 5; ++i) {
    Vector x(4);
    std::vector<double> r;
    for (int j = 0; j < 4; ++j) r.push_back(x[j] = rng.normal());
    xs.push_back(x);
    raw.push_back(r);
  }
  CHECK(dispersion(xs, 1.7) == doctest::Approx(oracles::dispersion_pairs(raw, 1.7)).epsilon(1e-13));
}

TEST_CASE("bias increment") {
  QuadraticSpec spec;
  spec.dimension = 5;
  spec.machines = 4;
  const auto q = make_quadratic(spec);
  const std::vector<Vector> same(4, Vector::Constant(5, 0.3));
  CHECK(bias_increment(*q, same, 2.0) <= 1e-28);

  spec.shared_curvature = true;
  const auto shared = make_quadratic(spec);
  RandomStream rng(4, StreamPurpose::problem);
  std::vector<Vector> xs;
  for (int i = 0; i < 4; ++i) xs.push_back(Vector::NullaryExpr(5, [&](Eigen::Index) { return rng.normal(); }));
  CHECK(std::sqrt(bias_increment(*shared, xs, 1.0)) <= 1e-12);

  // 1-D, A = (1, 3), b = 0, states (1, -1): mean gradient -1, gradient at the mean 0.
  const QuadraticEnsemble pm({Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 3.0)}, {vec({0}), vec({0})}, 0.0);
  const std::vector<Vector> states = {vec({1}), vec({-1})};
  CHECK(bias_increment(pm, states, 2.0) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("momentum residual") {
  QuadraticSpec spec;
  spec.dimension = 5;
  spec.machines = 3;
  spec.sigma = 0.0;
  const auto q = make_quadratic(spec);
  const auto p = problem_of(q, Vector::Zero(5));

  const auto at_opt = problem_of(q, q->optimum().point);
  const auto still = run_anytime_single(at_opt, anytime_cfg(WeightSchedule::linear(), 20, 0.01));
  CHECK(momentum_residual(still).max_abs <= 1e-12);

  for (const auto& s : {WeightSchedule::uniform(), WeightSchedule::linear(), WeightSchedule::polynomial(2)}) {
    const auto traj = run_anytime_single(p, anytime_cfg(s, 100, 0.002));
    CHECK(momentum_residual(traj).relative() <= 1e-10);
  }

  RunConfig plain = anytime_cfg(WeightSchedule::linear(), 10, 0.01);
  plain.record_diagnostics = false;
  CHECK_THROWS_AS(momentum_residual(run_anytime_single(p, plain)), std::invalid_argument);
}

TEST_CASE("weighted-average certificate and defect") {
  QuadraticSpec spec;
  spec.dimension = 5;
  spec.machines = 3;
  spec.sigma = 0.0;
  const auto p = problem_of(make_quadratic(spec), Vector::Zero(5));
  const auto traj = run_anytime_single(p, anytime_cfg(WeightSchedule::linear(), 60, 0.005));
  CHECK(anytime_certificate(p, traj).holds(1e-9));
  CHECK(weighted_average_defect(traj) <= 1e-12);

  RunConfig cfg;
  cfg.machines = 3;
  cfg.local_steps = 4;
  cfg.rounds = 5;
  cfg.eta = 0.005;
  cfg.record_diagnostics = true;
  const auto slow = run_slowcal(p, cfg);
  CHECK(weighted_average_defect(slow) <= 1e-12);
  CHECK(anytime_certificate(p, slow).holds(1e-9));

  cfg.fault.gamma_off_by_one = true;
  CHECK(weighted_average_defect(run_slowcal(p, cfg)) > 1e-6);
}
