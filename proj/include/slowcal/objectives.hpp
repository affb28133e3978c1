#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "slowcal/data.hpp"
#include "slowcal/rng.hpp"

namespace slowcal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Optimum {
  Vector point;
  double value = 0.0;
};

/// M machine objectives f_i with the global objective f = (1/M) sum_i f_i.
///
/// Implementations are immutable after construction. All oracle calls are
/// const and may be issued concurrently; randomness enters only through the
/// caller's SampleKey.
class Objective {
 public:
  virtual ~Objective() = default;

  virtual std::size_t machines() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string kind() const = 0;

  double local_value(std::size_t machine, const Vector& x) const;
  /// grad f_i(x), written into `out` (resized as needed).
  void exact_gradient(std::size_t machine, const Vector& x, Vector& out) const;
  Vector exact_gradient(std::size_t machine, const Vector& x) const;
  /// Unbiased estimate of grad f_i(x); a deterministic function of `key`.
  void stochastic_gradient(std::size_t machine, const Vector& x, const SampleKey& key,
                           Vector& out) const;
  Vector stochastic_gradient(std::size_t machine, const Vector& x, const SampleKey& key) const;

  double global_value(const Vector& x) const;
  Vector global_gradient(const Vector& x) const;

  /// Global minimizer. Throws DegenerateProblem when none is unique.
  virtual Optimum optimum() const = 0;
  /// L such that every f_i is L-smooth.
  virtual double smoothness() const = 0;
  /// sigma with E||g - grad f_i(x)||^2 <= sigma^2.
  virtual double noise_bound() const = 0;

 protected:
  virtual double value_impl(std::size_t machine, const Vector& x) const = 0;
  virtual void gradient_impl(std::size_t machine, const Vector& x, Vector& out) const = 0;
  virtual void stochastic_impl(std::size_t machine, const Vector& x, const SampleKey& key,
                               Vector& out) const = 0;

 private:
  void check_machine(std::size_t machine) const;
};

/// f_i(x) = 1/2 (x - b_i)^T A_i (x - b_i) with additive isotropic Gaussian
/// gradient noise of covariance (sigma^2 / d) I, so E||xi||^2 = sigma^2.
class QuadraticEnsemble final : public Objective {
 public:
  /// One curvature per machine.
  QuadraticEnsemble(std::vector<Matrix> curvatures, std::vector<Vector> centers, double sigma);
  /// A single curvature shared by every machine.
  static QuadraticEnsemble shared(Matrix curvature, std::vector<Vector> centers, double sigma);

  std::size_t machines() const override { return centers_.size(); }
  std::size_t dimension() const override { return static_cast<std::size_t>(centers_.front().size()); }
  std::string kind() const override { return "quadratic"; }

  Optimum optimum() const override;
  /// max_i lambda_max(A_i) by power iteration.
  double smoothness() const override;
  double noise_bound() const override { return sigma_; }

  bool shared_curvature() const { return curvatures_.size() == 1; }
  const Matrix& curvature(std::size_t machine) const {
    return curvatures_[shared_curvature() ? 0 : machine];
  }
  const Vector& center(std::size_t machine) const { return centers_.at(machine); }

 protected:
  double value_impl(std::size_t machine, const Vector& x) const override;
  void gradient_impl(std::size_t machine, const Vector& x, Vector& out) const override;
  void stochastic_impl(std::size_t machine, const Vector& x, const SampleKey& key,
                       Vector& out) const override;

 private:
  QuadraticEnsemble(std::vector<Matrix> curvatures, std::vector<Vector> centers, double sigma,
                    bool);

  std::vector<Matrix> curvatures_;
  std::vector<Vector> centers_;
  double sigma_;
};

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
/// Throws ConvergenceError after `max_iterations`.
double power_iteration(const Matrix& a, double tolerance = 1e-9, int max_iterations = 10000);

/// Multinomial logistic regression with L2 penalty, one data shard per
/// machine. Parameters are a row-major C x (d+1) matrix (last column is the
/// bias) flattened to a vector.
class LogisticEnsemble final : public Objective {
 public:
  LogisticEnsemble(std::vector<LabeledDataset> shards, double l2);

  std::size_t machines() const override { return shards_.size(); }
  std::size_t dimension() const override { return classes_ * (features_ + 1); }
  std::string kind() const override { return "logistic"; }

  /// Full-batch gradient descent with step 1/L until ||grad f|| <= 1e-10.
  Optimum optimum() const override;
  Optimum solve_optimum(double tolerance, long max_iterations) const;
  /// 1/2 max ||(a, 1)||^2 + lambda, a bound on the Hessian of every f_i.
  double smoothness() const override;
  /// Per-example gradient spread, estimated at the zero parameter vector.
  double noise_bound() const override { return sigma_; }

  std::size_t classes() const { return classes_; }
  std::size_t features() const { return features_; }
  double l2() const { return l2_; }
  const LabeledDataset& shard(std::size_t machine) const { return shards_.at(machine); }

 protected:
  double value_impl(std::size_t machine, const Vector& x) const override;
  void gradient_impl(std::size_t machine, const Vector& x, Vector& out) const override;
  void stochastic_impl(std::size_t machine, const Vector& x, const SampleKey& key,
                       Vector& out) const override;

 private:
  std::vector<LabeledDataset> shards_;
  double l2_;
  std::size_t classes_;
  std::size_t features_;
  double max_row_norm_sq_ = 0.0;
  double sigma_ = 0.0;
};

/// Mean cross-entropy (no penalty) and accuracy of parameters on a dataset.
struct ClassifierScore {
  double loss = 0.0;
  double accuracy = 0.0;
};
ClassifierScore evaluate_classifier(const Vector& params, const LabeledDataset& data);

/// The problem instance handed to an algorithm: oracles, the shared start
/// point w_0 = x_0, and (when known) the reference optimum for excess loss.
struct Problem {
  std::shared_ptr<const Objective> objective;
  Vector start;
  std::optional<Optimum> optimum;
};

/// Constants of the problem class at a given start point.
struct ProblemMetadata {
  double smoothness = 0.0;  // L
  double sigma = 0.0;
  double gstar = 0.0;       // G_*
  Vector optimum;           // w*
  double optimum_value = 0.0;
  double b0 = 0.0;          // ||w_0 - w*||
};

/// G_* = sqrt(2 (1/M) sum_i ||grad f_i(w*)||^2), i.e. the dissimilarity bound
/// taken with equality.
double gstar(const Objective& objective, const Vector& optimum);

ProblemMetadata describe(const Objective& objective, const Vector& start, const Optimum& optimum);

struct GrowthCheck {
  bool holds = false;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // rhs - lhs
};

/// (1/M) sum_i ||grad f_i(x)||^2 <= G_*^2 + 4 L (f(x) - f(w*)).
GrowthCheck check_growth_bound(const Objective& objective, const ProblemMetadata& meta,
                               const Vector& x);

/// Lower estimate of the uniform dissimilarity G (sup over x) from probes.
double estimate_uniform_dissimilarity(const Objective& objective, const std::vector<Vector>& probes);

struct QuadraticSpec {
  std::size_t dimension = 20;
  std::size_t machines = 8;
  bool shared_curvature = false;
  double eig_min = 0.1;
  double eig_max = 1.0;
  double center_norm = 1.0;   // ||mean center||, i.e. rough distance from the origin start
  double spread = 1.0;        // scale of per-machine center offsets
  std::optional<double> target_gstar;  // rescales the spread so G_* matches exactly
  double sigma = 1.0;
  std::uint64_t seed = 1;
};

/// Random heterogeneous quadratic ensemble: A_i = Q_i diag(lambda) Q_i^T with
/// log-spaced eigenvalues in [eig_min, eig_max] and random rotations.
std::shared_ptr<QuadraticEnsemble> make_quadratic(const QuadraticSpec& spec);

}  // namespace slowcal
