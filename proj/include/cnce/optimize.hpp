#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cnce/model_zoo.hpp"
#include "cnce/noise_kernels.hpp"
#include "cnce/types.hpp"

namespace cnce {

enum class StepRule { AdaptiveMoment, BacktrackingGd };

std::string_view to_string(StepRule rule);
StepRule step_rule_from_string(std::string_view name);

struct OptimizerConfig {
  int max_iters = 2000;
  /// Convergence threshold on ‖∇‖∞.
  double grad_tol = 1e-7;
  StepRule step_rule = StepRule::AdaptiveMoment;
  double init_scale = 0.3;
  int restarts = 1;
  /// Adaptive-moment step size and decay rates.
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  /// The adaptive phase hands over to the polish once ‖∇‖∞ drops below this.
  double handoff_tol = 1e-2;
  /// Backtracking iterations appended after the adaptive phase.
  int polish_iters = 200;
};

/// Throws ConfigError on invalid settings.
void validate(const OptimizerConfig& config);

/// Smallest-gap search for the CNCE noise scale.
struct EpsilonSchedule {
  double epsilon_0 = 0.05;
  double growth = 2.0;
  double delta = 0.05;
  double epsilon_max = 4.0;
};

void validate(const EpsilonSchedule& schedule);

/// Objective in the optimiser's coordinates.
using Objective = std::function<LossReport(const Eigen::VectorXd&)>;

/// One optimiser trajectory.
struct EstimationRun {
  Eigen::VectorXd theta0;
  Eigen::VectorXd theta;
  std::vector<double> loss_trace;
  std::vector<double> grad_norm_trace;
  bool converged = false;
  int iters = 0;
  /// Objective calls, including rejected trial steps.
  int evaluations = 0;
  double wall_ms = 0.0;
  /// Non-empty when the run stopped on a non-finite value.
  std::string failure;

  double final_loss() const { return loss_trace.empty() ? 0.0 : loss_trace.back(); }
  double final_grad_norm() const { return grad_norm_trace.empty() ? 0.0 : grad_norm_trace.back(); }
};

/// Full-batch first-order minimisation.
///
/// AdaptiveMoment runs bias-corrected adaptive-moment steps until ‖∇‖∞ <= handoff_tol
/// (or max_iters), then a Barzilai-Borwein backtracking polish for polish_iters.
/// BacktrackingGd runs only the polish, for max_iters. Accepted backtracking steps
/// never increase the loss. With restarts > 1, restart r starts from
/// theta0 + init_scale·N(0, I) drawn from rng_seed and the lowest final loss wins.
EstimationRun minimize(const Objective& objective, const Eigen::VectorXd& theta0,
                       const OptimizerConfig& config, std::uint64_t rng_seed);

struct EpsilonChoice {
  double epsilon = 0.0;
  /// True when no rung reached the gap and epsilon_max was returned.
  bool capped = false;
  std::vector<double> ladder;
  std::vector<double> gaps;
};

/// Walks ε₀·growth^k (then epsilon_max) and returns the first ε whose CNCE loss at θ₀
/// is at least δ away from 2 log 2. Every rung reuses the same noise seed.
/// For BernoulliFlip kernels the ladder is clipped to ε <= 1.
EpsilonChoice adapt_epsilon(const Model& model, const ParamVector& theta0, const SampleMatrix& x,
                            const KernelConfig& kernel_template, const EpsilonSchedule& schedule,
                            std::size_t kappa, std::uint64_t rng_seed);

}  // namespace cnce
