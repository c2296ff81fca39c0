#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cnce/model_zoo.hpp"
#include "cnce/noise_kernels.hpp"
#include "cnce/optimize.hpp"

namespace cnce {

enum class Method { Cnce, Nce, Mle, ScoreMatching };

/// cnce, nce, mle, score_matching
std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

/// True for methods whose result does not depend on κ (mle, score_matching).
bool ignores_kappa(Method method);

/// Throws ConfigError("method", ...) if the method has no implementation for the model.
void check_method_supported(Method method, ModelKind kind);

/// ε for CNCE: a fixed value or the ladder search from θ₀.
struct EpsilonSetting {
  bool automatic = true;
  double fixed = 0.0;
  EpsilonSchedule schedule;
};

/// Gaussian perturbation scaled per dimension, or bit flips for the Bernoulli model.
KernelConfig default_kernel(ModelKind kind);

struct FitRequest {
  ModelSpec model;
  Method method = Method::Cnce;
  std::size_t kappa = 10;
  EpsilonSetting epsilon;
  KernelConfig kernel;
  OptimizerConfig optimizer;
  /// All randomness of the fit (ε ladder noise, CNCE/NCE noise, θ₀) derives from this.
  std::uint64_t seed = 0;
};

struct FitOutcome {
  ParamVector theta_hat;
  /// Chosen CNCE ε (global, before per-dimension scaling); 0 for other methods.
  double epsilon = 0.0;
  bool epsilon_capped = false;
  bool converged = false;
  int iters = 0;
  /// Learned NCE log-normaliser c; 0 otherwise.
  double log_normaliser = 0.0;
  std::optional<EstimationRun> run;
  std::optional<EpsilonChoice> epsilon_choice;
};

/// Fits one method to `x`. Throws on configuration errors.
FitOutcome fit(const FitRequest& request, const SampleMatrix& x);

/// Gaussian/Ring: Euclidean distance of packed vectors. ICA: minimum over signed row
/// permutations. Bernoulli: after scaling θ̂ to sum one. Log-normal: |θ̂ - θ*| (C ignored).
double estimation_error(const ModelSpec& spec, const ParamVector& theta_hat,
                        const ParamVector& theta_true);

struct ExperimentConfig {
  ModelSpec model;
  std::vector<Method> methods;
  std::vector<std::size_t> n_grid;
  std::vector<std::size_t> kappa_grid;
  std::size_t repeats = 20;
  std::uint64_t master_seed = 0;
  EpsilonSetting epsilon;
  KernelConfig kernel;
  OptimizerConfig optimizer;
};

void validate(const ExperimentConfig& config);

struct ErrorRecord {
  std::uint64_t run_id = 0;
  std::string model;
  std::string method;
  std::uint64_t n = 0;
  std::uint64_t kappa = 0;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  double error = 0.0;
  double sq_error = 0.0;
  bool converged = false;
  std::uint64_t iters = 0;
  double wall_ms = 0.0;

  bool operator==(const ErrorRecord&) const = default;
};

struct QuantileSummary {
  std::string method;
  std::uint64_t n = 0;
  std::uint64_t kappa = 0;
  double median = 0.0;
  double q10 = 0.0;
  double q90 = 0.0;
};

struct GridResult {
  std::vector<ErrorRecord> records;
  std::vector<QuantileSummary> summaries;
  std::size_t warnings = 0;
};

/// Seed of one grid cell: hash(master_seed, model, method, n, κ, repeat).
std::uint64_t run_seed(std::uint64_t master_seed, ModelKind kind, Method method, std::uint64_t n,
                       std::uint64_t kappa, std::uint64_t repeat);
/// θ_true of a repeat, shared by every method, N and κ.
std::uint64_t truth_seed(std::uint64_t master_seed, ModelKind kind, std::uint64_t repeat);
/// Data of a (N, repeat) cell, shared by every method and κ.
std::uint64_t data_seed(std::uint64_t master_seed, ModelKind kind, std::uint64_t n,
                        std::uint64_t repeat);

/// Runs every (method, N, κ, repeat) cell on `jobs` worker threads. Records come back
/// sorted by run_id (the canonical enumeration index) and do not depend on `jobs`.
GridResult run_grid(const ExperimentConfig& config, std::size_t jobs = 1);

/// Linear-interpolation quantile (q in [0, 1]) of a non-empty sample.
double quantile(std::vector<double> values, double q);

/// Median, 0.1 and 0.9 quantiles of the error per (method, N, κ), in first-seen order.
std::vector<QuantileSummary> summarise(const std::vector<ErrorRecord>& records);

struct LimitRow {
  double epsilon = 0.0;
  /// CNCE loss on the shared draws.
  double mc_loss = 0.0;
  /// 2 log 2 + (ε²/2)·SM on the same draws.
  double sm_prediction = 0.0;
  /// (ε²/2)·SM alone.
  double sm_term = 0.0;
  double residual = 0.0;
  /// Monte Carlo standard error of the residual.
  double residual_stderr = 0.0;
  /// Residual not resolved above 3 standard errors.
  bool flagged = false;
};

/// Taylor check of the CNCE loss around ε = 0 for a Gaussian precision model.
///
/// Draws mc_pairs/2 points x from the model at θ and one ξ per point, and pairs each x
/// with x + εξ and x - εξ (the same draws for every ε). SM is the per-draw score-matching
/// integrand ξᵀHξ + ½(∇fᵀξ)², whose mean over ξ is the score-matching objective.
std::vector<LimitRow> limit_check(const ParamVector& theta, const std::vector<double>& eps_grid,
                                  std::size_t mc_pairs, std::uint64_t rng_seed);

}  // namespace cnce
