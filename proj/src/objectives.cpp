#include "slowcal/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "slowcal/errors.hpp"

namespace slowcal {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Objective

void Objective::check_machine(std::size_t machine) const {
  if (machine >= machines()) {
    throw std::out_of_range(
        fmt::format("machine index {} out of range [0, {})", machine, machines()));
  }
}

double Objective::local_value(std::size_t machine, const Vector& x) const {
  check_machine(machine);
  return value_impl(machine, x);
}

void Objective::exact_gradient(std::size_t machine, const Vector& x, Vector& out) const {
  check_machine(machine);
  gradient_impl(machine, x, out);
}

Vector Objective::exact_gradient(std::size_t machine, const Vector& x) const {
  Vector out;
  exact_gradient(machine, x, out);
  return out;
}

void Objective::stochastic_gradient(std::size_t machine, const Vector& x, const SampleKey& key,
                                    Vector& out) const {
  check_machine(machine);
  stochastic_impl(machine, x, key, out);
}

Vector Objective::stochastic_gradient(std::size_t machine, const Vector& x,
                                      const SampleKey& key) const {
  Vector out;
  stochastic_gradient(machine, x, key, out);
  return out;
}

double Objective::global_value(const Vector& x) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < machines(); ++i) sum += value_impl(i, x);
  return sum / static_cast<double>(machines());
}

Vector Objective::global_gradient(const Vector& x) const {
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(dimension()));
  Vector g;
  for (std::size_t i = 0; i < machines(); ++i) {
    gradient_impl(i, x, g);
    sum += g;
  }
  return sum / static_cast<double>(machines());
}

// ---------------------------------------------------------------------------
// QuadraticEnsemble

namespace {

void check_psd(const Matrix& a, std::size_t index) {
  if (a.rows() != a.cols()) {
    throw ConfigError(fmt::format("curvature {} is not square", index));
  }
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff())) {
    throw ConfigError(fmt::format("curvature {} is not symmetric", index));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10) {
    throw ConfigError(fmt::format("curvature {} is not PSD (min eigenvalue {:.3e})", index,
                                  eig.eigenvalues().minCoeff()));
  }
}

}  // namespace

QuadraticEnsemble::QuadraticEnsemble(std::vector<Matrix> curvatures, std::vector<Vector> centers,
                                     double sigma, bool)
    : curvatures_(std::move(curvatures)), centers_(std::move(centers)), sigma_(sigma) {
  if (centers_.empty()) throw ConfigError("quadratic ensemble needs at least one machine");
  if (!(sigma_ >= 0.0)) throw ConfigError("sigma must be nonnegative");
  const auto d = centers_.front().size();
  if (d == 0) throw ConfigError("dimension must be positive");
  for (const auto& b : centers_) {
    if (b.size() != d) throw ConfigError("centers have inconsistent dimensions");
  }
  for (std::size_t i = 0; i < curvatures_.size(); ++i) {
    if (curvatures_[i].rows() != d) throw ConfigError("curvature dimension does not match centers");
    check_psd(curvatures_[i], i);
  }
}

QuadraticEnsemble::QuadraticEnsemble(std::vector<Matrix> curvatures, std::vector<Vector> centers,
                                     double sigma)
    : QuadraticEnsemble(std::move(curvatures), std::move(centers), sigma, true) {
  if (curvatures_.size() != centers_.size()) {
    throw ConfigError("need one curvature per machine");
  }
}

QuadraticEnsemble QuadraticEnsemble::shared(Matrix curvature, std::vector<Vector> centers,
                                            double sigma) {
  std::vector<Matrix> one;
  one.push_back(std::move(curvature));
  return QuadraticEnsemble(std::move(one), std::move(centers), sigma, true);
}

double QuadraticEnsemble::value_impl(std::size_t machine, const Vector& x) const {
  const Vector r = x - centers_[machine];
  return 0.5 * r.dot(curvature(machine) * r);
}

void QuadraticEnsemble::gradient_impl(std::size_t machine, const Vector& x, Vector& out) const {
  out.noalias() = curvature(machine) * (x - centers_[machine]);
}

void QuadraticEnsemble::stochastic_impl(std::size_t machine, const Vector& x,
                                        const SampleKey& key, Vector& out) const {
  gradient_impl(machine, x, out);
  if (sigma_ == 0.0) return;
  RandomStream stream(key, StreamPurpose::gradient_noise);
  const double scale = sigma_ / std::sqrt(static_cast<double>(out.size()));
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] += scale * stream.normal();
}

Optimum QuadraticEnsemble::optimum() const {
  const auto d = static_cast<Eigen::Index>(dimension());
  Matrix h = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (std::size_t i = 0; i < machines(); ++i) {
    h += curvature(i);
    rhs += curvature(i) * centers_[i];
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
  const double top = eig.eigenvalues().maxCoeff();
  if (eig.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, top)) {
    throw DegenerateProblem(
        "sum of curvatures is singular; the quadratic has no unique minimizer");
  }
  const Matrix& v = eig.eigenvectors();
  Vector w = v * (v.transpose() * rhs).cwiseQuotient(eig.eigenvalues());
  // One step of iterative refinement.
  const Vector residual = rhs - h * w;
  w += v * (v.transpose() * residual).cwiseQuotient(eig.eigenvalues());
  return {w, global_value(w)};
}

double power_iteration(const Matrix& a, double tolerance, int max_iterations) {
  const auto d = a.rows();
  if (d == 0) return 0.0;
  RandomStream stream(0x9E3779B97F4A7C15ull, StreamPurpose::problem, 0xFFFFu);
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v[j] = 1.0 + 0.1 * stream.normal();
  v.normalize();
  double estimate = v.dot(a * v);
  for (int it = 0; it < max_iterations; ++it) {
    Vector next = a * v;
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    next /= norm;
    const double updated = next.dot(a * next);
    const bool converged = std::fabs(updated - estimate) <= tolerance * std::max(1.0, std::fabs(updated));
    v = std::move(next);
    estimate = updated;
    if (converged && it > 0) return estimate;
  }
  throw ConvergenceError(
      fmt::format("power iteration did not converge in {} iterations", max_iterations));
}

double QuadraticEnsemble::smoothness() const {
  double top = 0.0;
  for (const auto& a : curvatures_) top = std::max(top, power_iteration(a));
  return top;
}

// ---------------------------------------------------------------------------
// LogisticEnsemble

namespace {

// Softmax probabilities in place, row-wise.
void softmax_rows(RowMatrix& scores) {
  for (Eigen::Index n = 0; n < scores.rows(); ++n) {
    auto row = scores.row(n);
    const double top = row.maxCoeff();
    row = (row.array() - top).exp();
    row /= row.sum();
  }
}

RowMatrix class_scores(const Vector& params, const FeatureMatrix& x, std::size_t classes) {
  const auto c = static_cast<Eigen::Index>(classes);
  const auto d = x.cols();
  Eigen::Map<const RowMatrix> w(params.data(), c, d + 1);
  RowMatrix s = x * w.leftCols(d).transpose();
  s.rowwise() += w.col(d).transpose();
  return s;
}

double mean_cross_entropy(const RowMatrix& scores, const std::vector<int>& labels) {
  double total = 0.0;
  for (Eigen::Index n = 0; n < scores.rows(); ++n) {
    const auto row = scores.row(n);
    const double top = row.maxCoeff();
    const double lse = top + std::log((row.array() - top).exp().sum());
    total += lse - row[labels[static_cast<std::size_t>(n)]];
  }
  return total / static_cast<double>(scores.rows());
}

}  // namespace

LogisticEnsemble::LogisticEnsemble(std::vector<LabeledDataset> shards, double l2)
    : shards_(std::move(shards)), l2_(l2) {
  if (shards_.empty()) throw ConfigError("logistic ensemble needs at least one machine");
  if (!(l2_ >= 0.0)) throw ConfigError("lambda must be nonnegative");
  classes_ = shards_.front().classes;
  features_ = shards_.front().dimension();
  if (classes_ < 2) throw ConfigError("logistic ensemble needs at least two classes");
  for (std::size_t i = 0; i < shards_.size(); ++i) {
    const auto& s = shards_[i];
    s.validate();
    if (s.classes != classes_ || s.dimension() != features_) {
      throw ConfigError(fmt::format("shard {} has a different shape", i));
    }
    max_row_norm_sq_ = std::max(max_row_norm_sq_, s.features.rowwise().squaredNorm().maxCoeff() + 1.0);
  }

  // Per-example gradient variance at theta = 0, where every softmax is
  // uniform; the penalty term cancels in the deviation.
  const double p = 1.0 / static_cast<double>(classes_);
  double worst = 0.0;
  for (const auto& s : shards_) {
    const auto n = static_cast<double>(s.size());
    const Vector zero = Vector::Zero(static_cast<Eigen::Index>(dimension()));
    // E||g_n||^2 - ||E g_n||^2, with ||g_n||^2 = ||p - e_y||^2 (||a||^2 + 1).
    const double residual_sq = (static_cast<double>(classes_) - 1.0) * p * p + (1.0 - p) * (1.0 - p);
    double mean_sq = 0.0;
    for (Eigen::Index r = 0; r < s.features.rows(); ++r) {
      mean_sq += residual_sq * (s.features.row(r).squaredNorm() + 1.0);
    }
    mean_sq /= n;
    Vector g;
    gradient_impl(static_cast<std::size_t>(&s - shards_.data()), zero, g);
    worst = std::max(worst, mean_sq - g.squaredNorm());
  }
  sigma_ = std::sqrt(std::max(0.0, worst));
}

double LogisticEnsemble::value_impl(std::size_t machine, const Vector& x) const {
  const auto& s = shards_[machine];
  return mean_cross_entropy(class_scores(x, s.features, classes_), s.labels) +
         0.5 * l2_ * x.squaredNorm();
}

void LogisticEnsemble::gradient_impl(std::size_t machine, const Vector& x, Vector& out) const {
  const auto& s = shards_[machine];
  RowMatrix probs = class_scores(x, s.features, classes_);
  softmax_rows(probs);
  for (std::size_t n = 0; n < s.size(); ++n) probs(static_cast<Eigen::Index>(n), s.labels[n]) -= 1.0;
  const auto c = static_cast<Eigen::Index>(classes_);
  const auto d = static_cast<Eigen::Index>(features_);
  out.resize(c * (d + 1));
  Eigen::Map<RowMatrix> g(out.data(), c, d + 1);
  const double inv_n = 1.0 / static_cast<double>(s.size());
  g.leftCols(d).noalias() = inv_n * (probs.transpose() * s.features);
  g.col(d) = inv_n * probs.colwise().sum().transpose();
  out += l2_ * x;
}

void LogisticEnsemble::stochastic_impl(std::size_t machine, const Vector& x, const SampleKey& key,
                                       Vector& out) const {
  const auto& s = shards_[machine];
  RandomStream stream(key, StreamPurpose::example_index);
  const auto n = static_cast<Eigen::Index>(stream.uniform_index(s.size()));
  const auto c = static_cast<Eigen::Index>(classes_);
  const auto d = static_cast<Eigen::Index>(features_);
  Eigen::Map<const RowMatrix> w(x.data(), c, d + 1);
  const auto a = s.features.row(n);
  Eigen::VectorXd scores = w.leftCols(d) * a.transpose() + w.col(d);
  const double top = scores.maxCoeff();
  scores = (scores.array() - top).exp();
  scores /= scores.sum();
  scores[s.labels[static_cast<std::size_t>(n)]] -= 1.0;
  out.resize(c * (d + 1));
  Eigen::Map<RowMatrix> g(out.data(), c, d + 1);
  g.leftCols(d).noalias() = scores * a;
  g.col(d) = scores;
  out += l2_ * x;
}

double LogisticEnsemble::smoothness() const { return 0.5 * max_row_norm_sq_ + l2_; }

Optimum LogisticEnsemble::solve_optimum(double tolerance, long max_iterations) const {
  if (!(l2_ > 0.0)) {
    throw DegenerateProblem("logistic optimum needs lambda > 0 for a unique finite minimizer");
  }
  const double step = 1.0 / smoothness();
  Vector w = Vector::Zero(static_cast<Eigen::Index>(dimension()));
  for (long it = 0; it < max_iterations; ++it) {
    const Vector g = global_gradient(w);
    if (g.norm() <= tolerance) return {w, global_value(w)};
    w -= step * g;
  }
  throw ConvergenceError(fmt::format(
      "logistic optimum: gradient norm above {:.1e} after {} iterations", tolerance, max_iterations));
}

Optimum LogisticEnsemble::optimum() const { return solve_optimum(1e-10, 5'000'000); }

ClassifierScore evaluate_classifier(const Vector& params, const LabeledDataset& data) {
  const RowMatrix scores = class_scores(params, data.features, data.classes);
  std::size_t correct = 0;
  for (Eigen::Index n = 0; n < scores.rows(); ++n) {
    Eigen::Index best = 0;
    scores.row(n).maxCoeff(&best);
    if (best == data.labels[static_cast<std::size_t>(n)]) ++correct;
  }
  return {mean_cross_entropy(scores, data.labels),
          static_cast<double>(correct) / static_cast<double>(data.size())};
}

// ---------------------------------------------------------------------------
// Metadata

double gstar(const Objective& objective, const Vector& optimum) {
  double sum = 0.0;
  Vector g;
  for (std::size_t i = 0; i < objective.machines(); ++i) {
    objective.exact_gradient(i, optimum, g);
    sum += g.squaredNorm();
  }
  return std::sqrt(2.0 * sum / static_cast<double>(objective.machines()));
}

ProblemMetadata describe(const Objective& objective, const Vector& start, const Optimum& optimum) {
  ProblemMetadata meta;
  meta.smoothness = objective.smoothness();
  meta.sigma = objective.noise_bound();
  meta.gstar = gstar(objective, optimum.point);
  meta.optimum = optimum.point;
  meta.optimum_value = optimum.value;
  meta.b0 = (start - optimum.point).norm();
  return meta;
}

GrowthCheck check_growth_bound(const Objective& objective, const ProblemMetadata& meta,
                               const Vector& x) {
  double lhs = 0.0;
  Vector g;
  for (std::size_t i = 0; i < objective.machines(); ++i) {
    objective.exact_gradient(i, x, g);
    lhs += g.squaredNorm();
  }
  lhs /= static_cast<double>(objective.machines());
  const double rhs = meta.gstar * meta.gstar +
                     4.0 * meta.smoothness * (objective.global_value(x) - meta.optimum_value);
  return {lhs <= rhs, lhs, rhs, rhs - lhs};
}

double estimate_uniform_dissimilarity(const Objective& objective, const std::vector<Vector>& probes) {
  double worst = 0.0;
  Vector g;
  for (const auto& x : probes) {
    const Vector mean = objective.global_gradient(x);
    double sum = 0.0;
    for (std::size_t i = 0; i < objective.machines(); ++i) {
      objective.exact_gradient(i, x, g);
      sum += (g - mean).squaredNorm();
    }
    worst = std::max(worst, 2.0 * sum / static_cast<double>(objective.machines()));
  }
  return std::sqrt(worst);
}

// ---------------------------------------------------------------------------
// Builder

namespace {

Matrix random_rotation(RandomStream& stream, Eigen::Index d) {
  Matrix g(d, d);
  for (Eigen::Index c = 0; c < d; ++c)
    for (Eigen::Index r = 0; r < d; ++r) g(r, c) = stream.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ();
}

Vector gaussian_vector(RandomStream& stream, Eigen::Index d) {
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v[j] = stream.normal();
  return v;
}

}  // namespace

std::shared_ptr<QuadraticEnsemble> make_quadratic(const QuadraticSpec& spec) {
  if (spec.dimension == 0 || spec.machines == 0) {
    throw ConfigError("quadratic: d and M must be positive");
  }
  if (!(spec.eig_min >= 0.0) || !(spec.eig_max >= spec.eig_min) || !(spec.eig_max > 0.0)) {
    throw ConfigError("quadratic: need 0 <= eig_min <= eig_max, eig_max > 0");
  }
  const auto d = static_cast<Eigen::Index>(spec.dimension);
  RandomStream stream(spec.seed, StreamPurpose::problem);

  Vector spectrum(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    if (d == 1) {
      spectrum[j] = spec.eig_max;
    } else if (spec.eig_min == 0.0) {
      spectrum[j] = spec.eig_max * static_cast<double>(j) / static_cast<double>(d - 1);
    } else {
      const double frac = static_cast<double>(j) / static_cast<double>(d - 1);
      spectrum[j] = spec.eig_min * std::pow(spec.eig_max / spec.eig_min, frac);
    }
  }

  const std::size_t n_curv = spec.shared_curvature ? 1 : spec.machines;
  std::vector<Matrix> curvatures;
  curvatures.reserve(n_curv);
  for (std::size_t i = 0; i < n_curv; ++i) {
    const Matrix q = random_rotation(stream, d);
    Matrix a = q * spectrum.asDiagonal() * q.transpose();
    curvatures.emplace_back(0.5 * (a + a.transpose()));
  }

  Vector common = gaussian_vector(stream, d);
  if (common.norm() > 0.0) common *= spec.center_norm / common.norm();
  std::vector<Vector> offsets;
  for (std::size_t i = 0; i < spec.machines; ++i) {
    offsets.push_back(gaussian_vector(stream, d) / std::sqrt(static_cast<double>(d)));
  }

  auto build = [&](double spread) {
    std::vector<Vector> centers;
    for (const auto& u : offsets) centers.push_back(common + spread * u);
    if (spec.shared_curvature) {
      return std::make_shared<QuadraticEnsemble>(
          QuadraticEnsemble::shared(curvatures.front(), std::move(centers), spec.sigma));
    }
    return std::make_shared<QuadraticEnsemble>(curvatures, std::move(centers), spec.sigma);
  };

  if (!spec.target_gstar) return build(spec.spread);

  const auto unit = build(1.0);
  const double unit_gstar = gstar(*unit, unit->optimum().point);
  if (*spec.target_gstar == 0.0) return build(0.0);
  if (unit_gstar <= 0.0) {
    throw ConfigError("quadratic: cannot reach the requested G_* (ensemble is homogeneous)");
  }
  return build(*spec.target_gstar / unit_gstar);
}

}  // namespace slowcal
