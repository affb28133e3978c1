#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "slowcal/algorithms.hpp"

namespace slowcal {

struct LrInputs {
  double smoothness = 0.0;  // L
  double sigma = 0.0;
  double gstar = 0.0;
  double b0 = 0.0;  // ||w_0 - w*||
  std::size_t machines = 1;
  std::size_t local_steps = 1;
  std::size_t rounds = 1;
};

/// The five step-size caps; a cap whose denominator vanishes is +inf.
///   1/(48 L (T+1)),  1/(10 L K^2),  1/(40 L K (T+1)^{2/3}),
///   B0 sqrt(M) / (sigma T^{3/2}),  B0^{1/2} / (L^{1/2} K^{7/4} R (sigma^{1/2} + G_*^{1/2}))
std::array<double, 5> theoretical_lr_caps(const LrInputs& in);

/// min of theoretical_lr_caps. Throws ConfigError for L = 0 or B0 = 0.
double theoretical_lr(const LrInputs& in);

class SearchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridEntry {
  double eta = 0.0;
  std::vector<double> scores;  // one per seed, +inf when diverged
  double mean = 0.0;
};

struct GridResult {
  double best_eta = 0.0;
  std::vector<GridEntry> table;  // sorted by eta
};

using RunScore = std::function<double(double eta, std::uint64_t seed)>;

/// Scores every (eta, seed) pair, averages over seeds, and returns the
/// smallest mean (ties go to the smaller eta). Non-finite scores count as
/// +inf. Pairs are evaluated concurrently when `parallel` is set; the result
/// does not depend on completion order.
GridResult grid_search(const RunScore& score, std::span<const double> grid,
                       std::span<const std::uint64_t> seeds, bool parallel = true);

/// Grid search scored by the final-round excess loss of `algorithm`.
GridResult grid_search(const Problem& problem, Algorithm algorithm, std::span<const double> grid,
                       const RunConfig& config, std::span<const std::uint64_t> seeds,
                       bool parallel = true);

/// `count` log-spaced points from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, std::size_t count);

enum class RminMethod { minibatch, accelerated_minibatch, local, slowcal };

RminMethod parse_rmin_method(std::string_view name);

/// Rounds needed before the 1/sqrt(MKR) term dominates, with constants set to
/// one and sigma = 1. `dissimilarity` is G for Local-SGD and G_* for SLowcal.
double rmin(RminMethod method, double machines, double local_steps, double dissimilarity = 0.0);

}  // namespace slowcal
