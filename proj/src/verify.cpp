#include "slowcal/verify.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <ostream>

#include "slowcal/data.hpp"
#include "slowcal/metrics.hpp"
#include "slowcal/objectives.hpp"
#include "slowcal/rng.hpp"
#include "slowcal/weights.hpp"

namespace slowcal {

bool VerifyReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

namespace {

// "max" checks pass when value <= tolerance; "min" checks when value >= -tolerance.
CheckResult at_most(std::string name, double value, double tolerance, std::string detail = {}) {
  return {std::move(name), value, tolerance, std::isfinite(value) && value <= tolerance, std::move(detail)};
}

CheckResult slack_at_least(std::string name, double slack, double tolerance, std::string detail = {}) {
  return {std::move(name), slack, tolerance, std::isfinite(slack) && slack >= -tolerance, std::move(detail)};
}

double relative_gap(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

std::shared_ptr<QuadraticEnsemble> small_quadratic(std::size_t machines, double sigma, bool shared,
                                                   std::uint64_t seed) {
  QuadraticSpec spec;
  spec.dimension = 6;
  spec.machines = machines;
  spec.shared_curvature = shared;
  spec.eig_min = 0.2;
  spec.eig_max = 2.0;
  spec.center_norm = 1.5;
  spec.spread = 1.0;
  spec.sigma = sigma;
  spec.seed = seed;
  return make_quadratic(spec);
}

Problem make_problem(std::shared_ptr<const Objective> objective) {
  Problem p;
  p.start = Vector::Zero(static_cast<Eigen::Index>(objective->dimension()));
  p.optimum = objective->optimum();
  p.objective = std::move(objective);
  return p;
}

RunConfig config_for(std::size_t machines, std::size_t k, std::size_t r, double eta, WeightSchedule schedule,
                     const VerifyOptions& options) {
  RunConfig cfg;
  cfg.machines = machines;
  cfg.local_steps = k;
  cfg.rounds = r;
  cfg.eta = eta;
  cfg.schedule = schedule;
  cfg.seed = options.seed;
  cfg.record_diagnostics = true;
  cfg.fault = options.fault;
  return cfg;
}

std::vector<Vector> probes_around(const Vector& center, std::size_t count, std::uint64_t seed) {
  RandomStream rng(seed, StreamPurpose::problem, 91, 0, 0);
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    // radii from 1e-3 to 1e2 so both the near-optimum and far regimes are hit
    const double radius = std::pow(10.0, -3.0 + 5.0 * static_cast<double>(n) / static_cast<double>(count - 1));
    Vector dir(center.size());
    for (Eigen::Index j = 0; j < dir.size(); ++j) dir[j] = rng.normal();
    out.push_back(center + radius * dir / dir.norm());
  }
  return out;
}

void check_weights(VerifyReport& report) {
  double worst = 0.0;
  const std::vector<StepIndex> times = {1, 2, 10, 1000, 1000000};
  for (const auto& schedule : {WeightSchedule::uniform(), WeightSchedule::linear(), WeightSchedule::polynomial(2.5),
                               WeightSchedule::polynomial(0.5)}) {
    for (auto t : times) {
      const long double diff = prefix_weight(schedule, t) - prefix_weight(schedule, t - 1);
      const double w = weight_at(schedule, t);
      worst = std::max(worst, static_cast<double>(std::fabs(diff - w) / w));
    }
  }
  report.checks.push_back(at_most("weights: prefix(t) - prefix(t-1) = weight(t), t <= 1e6", worst, 1e-12));

  // The running average recursion against the direct weighted sum.
  RandomStream rng(3, StreamPurpose::problem, 92, 0, 0);
  const StepIndex horizon = 1000;
  double defect = 0.0;
  for (const auto& schedule : {WeightSchedule::uniform(), WeightSchedule::linear(), WeightSchedule::polynomial(2.0)}) {
    Vector x = Vector::NullaryExpr(3, [&](Eigen::Index) { return rng.normal(); });
    Vector direct = weight_at(schedule, 0) * x;
    long double mass = weight_at(schedule, 0);
    for (StepIndex t = 0; t < horizon; ++t) {
      const Vector w = Vector::NullaryExpr(3, [&](Eigen::Index) { return rng.normal(); });
      const double g = averaging_coeff(schedule, t);
      x = (1.0 - g) * x + g * w;
      direct += weight_at(schedule, t + 1) * w;
      mass += weight_at(schedule, t + 1);
      defect = std::max(defect, relative_gap(x, direct / static_cast<double>(mass)));
    }
  }
  report.checks.push_back(at_most("weights: running average = (1/alpha_0:t) sum alpha_tau w_tau", defect, 1e-10));
}

void check_trajectories(VerifyReport& report, const VerifyOptions& options) {
  const auto noisy = make_problem(small_quadratic(4, 0.5, false, 11));
  const auto quiet = make_problem(small_quadratic(3, 0.0, false, 12));

  {
    const auto traj = run_slowcal(noisy, config_for(4, 5, 6, 0.004, WeightSchedule::linear(), options));
    report.checks.push_back(
        at_most("slowcal: xbar is the alpha-weighted average of wbar (sigma > 0)", weighted_average_defect(traj), 1e-10));
  }

  for (const auto& schedule : {WeightSchedule::uniform(), WeightSchedule::linear()}) {
    const auto traj = run_anytime_single(quiet, config_for(1, 10, 10, 0.002, schedule, options));
    const auto res = momentum_residual(traj);
    report.checks.push_back(at_most(fmt::format("anytime: momentum form of the x-update ({})", schedule.name()),
                                    res.relative(), 1e-10, "relative to max ||g_t||"));
    const auto cert = anytime_certificate(quiet, traj);
    report.checks.push_back(slack_at_least(fmt::format("anytime: weighted-average certificate ({})", schedule.name()),
                                           std::min(cert.min_lower_slack, cert.min_upper_slack), 1e-9));
  }

  {
    const auto traj = run_slowcal(quiet, config_for(3, 4, 5, 0.002, WeightSchedule::linear(), options));
    const auto cert = anytime_certificate(quiet, traj);
    report.checks.push_back(slack_at_least("slowcal: weighted-average certificate on server averages",
                                           std::min(cert.min_lower_slack, cert.min_upper_slack), 1e-9));
  }

  {
    // K = 1 SLowcal averages every step, so it is Anytime-SGD on the batch gradient.
    const auto a = run_slowcal(quiet, config_for(3, 1, 40, 0.01, WeightSchedule::linear(), options));
    const auto b = run_anytime_single(quiet, config_for(1, 1, 40, 0.01, WeightSchedule::linear(), options));
    double gap = 0.0;
    for (std::size_t t = 0; t < a.steps.size() && t < b.steps.size(); ++t) {
      gap = std::max({gap, relative_gap(a.steps[t].x_bar, b.steps[t].x_bar),
                      relative_gap(a.steps[t].w_bar, b.steps[t].w_bar)});
    }
    if (a.steps.size() != b.steps.size()) gap = std::numeric_limits<double>::infinity();
    report.checks.push_back(at_most("reduction: slowcal(K=1, sigma=0) = anytime(batch gradient)", gap, 1e-12));
  }

  {
    // With x_0 = w_0 the first Anytime step is a minibatch step, bit for bit.
    RunConfig any = config_for(1, 1, 1, 0.01, WeightSchedule::linear(), options);
    RunConfig mb = config_for(4, 1, 1, 0.01, WeightSchedule::linear(), options);
    any.record_diagnostics = false;
    mb.record_diagnostics = false;
    const auto a = run_anytime_single(noisy, any);
    const auto b = run_minibatch(noisy, mb);
    const double gap = (a.rounds.at(0).anchor.w - b.rounds.at(0).anchor.x).cwiseAbs().maxCoeff();
    report.checks.push_back(at_most("reduction: first anytime step = first minibatch step", gap, 0.0));
  }

  {
    // Identical machines and no noise: Local-SGD is K*R plain GD steps.
    const auto base = small_quadratic(1, 0.0, false, 13);
    const Vector center = base->center(0);
    auto homogeneous = std::make_shared<QuadraticEnsemble>(
        QuadraticEnsemble::shared(base->curvature(0), std::vector<Vector>(4, center), 0.0));
    const auto problem = make_problem(homogeneous);
    RunConfig cfg = config_for(4, 5, 4, 0.05, WeightSchedule::linear(), options);
    cfg.record_diagnostics = false;
    const auto traj = run_local(problem, cfg, false);
    Vector x = problem.start;
    for (std::size_t s = 0; s < cfg.total_steps(); ++s) x -= cfg.eta * homogeneous->global_gradient(x);
    report.checks.push_back(at_most("reduction: local(homogeneous, sigma=0) = K*R GD steps", relative_gap(traj.output, x), 1e-12));
  }

  {
    // Shared curvature: the averaged gradient at scattered points equals the
    // gradient at their average, so the bias increment vanishes.
    const auto shared = small_quadratic(4, 0.5, true, 14);
    const auto problem = make_problem(shared);
    const WeightTable table(WeightSchedule::linear(), 200);
    double worst = 0.0;
    for (Algorithm alg : {Algorithm::slowcal, Algorithm::local}) {
      const auto traj = run_algorithm(alg, problem, config_for(4, 5, 6, 0.004, WeightSchedule::linear(), options));
      for (const auto& step : traj.steps) {
        const double scale = 1.0 + (step.g_bar.size() ? step.g_bar.norm() : 0.0);
        const double alpha = table.alpha(step.t);
        worst = std::max(worst, std::sqrt(step.v_increment) / (alpha * scale));
      }
    }
    RandomStream rng(options.seed, StreamPurpose::problem, 93, 0, 0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Vector> xs;
      for (std::size_t i = 0; i < 4; ++i) xs.push_back(Vector::NullaryExpr(6, [&](Eigen::Index) { return 3.0 * rng.normal(); }));
      Vector mean = Vector::Zero(6);
      Vector avg_grad = Vector::Zero(6);
      for (std::size_t i = 0; i < 4; ++i) {
        mean += xs[i] / 4.0;
        avg_grad += shared->exact_gradient(i, xs[i]) / 4.0;
      }
      const Vector g = shared->global_gradient(mean);
      worst = std::max(worst, (avg_grad - g).norm() / (1.0 + g.norm()));
    }
    report.checks.push_back(at_most("shared curvature: bias increment V = 0", worst, 1e-12,
                                    "sqrt(V)/alpha relative to 1 + ||g||"));
  }
}

std::shared_ptr<LogisticEnsemble> small_logistic(std::uint64_t seed) {
  ClusterSpec spec;
  spec.machines = 4;
  spec.dimension = 4;
  spec.classes = 3;
  spec.examples_per_machine = 30;
  spec.spread = 0.5;
  spec.seed = seed;
  return std::make_shared<LogisticEnsemble>(synth_clusters(spec), 1e-2);
}

void check_growth(VerifyReport& report, const VerifyOptions& options) {
  const std::vector<std::shared_ptr<const Objective>> objectives = {small_quadratic(5, 1.0, false, 21),
                                                                     small_logistic(22)};
  double growth = std::numeric_limits<double>::infinity();
  double self_bounding = std::numeric_limits<double>::infinity();
  for (const auto& obj : objectives) {
    const Vector start = Vector::Zero(static_cast<Eigen::Index>(obj->dimension()));
    const auto opt = obj->optimum();
    const auto meta = describe(*obj, start, opt);
    const auto probes = probes_around(opt.point, 100, options.seed + 5);
    std::vector<Vector> grads_star;
    for (std::size_t i = 0; i < obj->machines(); ++i) grads_star.push_back(obj->exact_gradient(i, opt.point));
    for (const auto& x : probes) {
      growth = std::min(growth, check_growth_bound(*obj, meta, x).slack);
      // Per machine: ||grad f_i(x) - grad f_i(w*)||^2 <= 2L (Bregman divergence of f_i).
      for (std::size_t i = 0; i < obj->machines(); ++i) {
        const Vector diff = obj->exact_gradient(i, x) - grads_star[i];
        const double bregman =
            obj->local_value(i, x) - obj->local_value(i, opt.point) - grads_star[i].dot(x - opt.point);
        self_bounding = std::min(self_bounding, 2.0 * meta.smoothness * bregman - diff.squaredNorm());
      }
    }
  }
  report.checks.push_back(slack_at_least("growth bound G_*^2 + 4L(f(x)-f*) at 100 probes", growth, 1e-9));
  report.checks.push_back(slack_at_least("self-bounding ||grad f_i(x)-grad f_i(w*)||^2 <= 2L D_i at 100 probes",
                                         self_bounding, 1e-9));
}

}  // namespace

VerifyReport verify_suite(const VerifyOptions& options) {
  VerifyReport report;
  check_weights(report);
  check_trajectories(report, options);
  check_growth(report, options);
  return report;
}

void print_report(std::ostream& out, const VerifyReport& report) {
  std::size_t passed = 0;
  for (const auto& c : report.checks) {
    if (c.passed) ++passed;
    out << fmt::format("[{}] {}: value {:.3e}, tolerance {:.1e}{}\n", c.passed ? "PASS" : "FAIL", c.name, c.value,
                       c.tolerance, c.detail.empty() ? "" : " (" + c.detail + ")");
  }
  out << fmt::format("{} of {} checks passed\n", passed, report.checks.size());
}

}  // namespace slowcal
