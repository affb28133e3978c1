#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slowcal/objectives.hpp"
#include "slowcal/weights.hpp"

namespace slowcal {

enum class Algorithm { minibatch, local, local_weighted, anytime, slowcal };

Algorithm parse_algorithm(std::string_view name);
std::string to_string(Algorithm algorithm);

/// How the machines' local loops are executed within a round. Both produce
/// bit-identical trajectories; `serial` is the reference path.
enum class Execution { serial, parallel };

/// Deliberate faults for mutation-testing the verification suite.
struct FaultInjection {
  bool gamma_off_by_one = false;         // x-update uses alpha_t/alpha_{0:t}
  bool alpha_shift_at_gradient = false;  // w-update uses alpha_{t+1}
};

struct RunConfig {
  std::size_t machines = 1;     // M
  std::size_t local_steps = 1;  // K
  std::size_t rounds = 1;       // R
  double eta = 0.01;
  WeightSchedule schedule = WeightSchedule::linear();
  std::uint64_t seed = 0;
  /// Per-step machine averages and diagnostics. Forces serial execution.
  bool record_diagnostics = false;
  Execution execution = Execution::parallel;
  bool record_anchors = true;
  /// Excess loss, gradient norm, dispersion and bias at round ends. Needs
  /// exact gradients; turn off for large datasets and use a RoundHook.
  bool round_metrics = true;
  FaultInjection fault{};

  std::size_t total_steps() const { return local_steps * rounds; }  // T = KR
  /// Throws ConfigError.
  void validate() const;
};

/// Server state Theta_r. Minibatch and Local-SGD use only `x`.
struct Anchor {
  Vector w;
  Vector x;
};

struct RoundRecord {
  std::size_t round = 0;
  StepIndex step = 0;  // global step at the round end, (r+1)K
  Anchor anchor;       // post-aggregation; empty unless record_anchors
  double excess_loss = 0.0;  // at the algorithm's current output point
  double grad_norm = 0.0;    // ||grad f(output)||
  double dispersion = 0.0;   // Q at the round end, before aggregation
  double v_increment = 0.0;  // bias increment at the round end, before aggregation
  double distance_sq = 0.0;  // ||wbar - w*||^2 after aggregation
  bool diverged = false;
};

/// Machine averages at global step t (before the step is taken), plus the
/// averaged stochastic gradient used at t. The record at t = T has no gradient.
struct StepRecord {
  StepIndex t = 0;
  Vector w_bar;
  Vector x_bar;
  Vector g_bar;
  double dispersion = 0.0;
  double v_increment = 0.0;
  double distance_sq = 0.0;
};

struct Trajectory {
  Algorithm algorithm = Algorithm::slowcal;
  RunConfig config;
  std::vector<RoundRecord> rounds;
  std::vector<StepRecord> steps;
  Anchor last_anchor;
  Vector output;
  bool diverged = false;
  std::optional<std::size_t> diverged_round;

  double final_excess_loss() const;
};

/// Called after each round's aggregation with the current output point.
using RoundHook = std::function<void(std::size_t round, const Vector& output)>;

/// Each machine averages K stochastic gradients at the anchor; the server
/// steps x_{r+1} = x_r - eta * mean. Output: uniform average of x_1..x_R.
Trajectory run_minibatch(const Problem& problem, const RunConfig& config, const RoundHook& hook = {});

/// K local SGD steps per machine, then averaging. The weighted variant scales
/// step t by alpha_t and outputs (1/alpha_{0:T}) sum_t alpha_t wbar_t.
Trajectory run_local(const Problem& problem, const RunConfig& config, bool weighted,
                     const RoundHook& hook = {});

/// Single-machine Anytime-SGD on the batch gradient (1/M) sum_i g^i. Requires
/// config.machines == 1; rounds only group the steps for reporting.
Trajectory run_anytime_single(const Problem& problem, const RunConfig& config,
                              const RoundHook& hook = {});

/// Local Anytime-SGD: machines step w with eta*alpha_t gradients queried at
/// their running weighted averages x, and the server averages both slots.
Trajectory run_slowcal(const Problem& problem, const RunConfig& config, const RoundHook& hook = {});

Trajectory run_algorithm(Algorithm algorithm, const Problem& problem, const RunConfig& config,
                         const RoundHook& hook = {});

}  // namespace slowcal
