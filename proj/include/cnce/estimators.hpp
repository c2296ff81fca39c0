#pragma once

#include <cstddef>

#include "cnce/model_zoo.hpp"
#include "cnce/noise_kernels.hpp"
#include "cnce/optimize.hpp"
#include "cnce/types.hpp"

namespace cnce {

/// log(1 + e^z) without overflow.
double softplus(double z);
/// 1 / (1 + e^{-z}) evaluated on the stable branch for the sign of z.
double logistic(double z);

/// Number of observations per partial sum. Partial sums are combined in index
/// order, so the result does not depend on how chunks are scheduled.
inline constexpr std::size_t kReductionChunk = 1024;

/// G(u1, u2; θ) = log φ(u1) - log φ(u2) + log pc(u2|u1) - log pc(u1|u2).
double cnce_G(const Model& model, const ParamVector& theta, const ConditionalKernel& kernel, Point u1,
              Point u2);

/// CNCE empirical loss (2/κN) Σ_ij softplus(-G(x_i, y_ij)) and its θ-gradient.
/// Validates the sample and pairing once; each call only evaluates.
class CnceObjective {
 public:
  CnceObjective(const Model& model, const SampleMatrix& x, const NoisePairing& pairing);

  LossReport operator()(const ParamVector& theta) const;

 private:
  // Cached features of models that are linear in θ: one row of F per point, then a.
  struct LinearCache {
    std::vector<double> features;
    std::vector<double> offsets;
  };
  static LinearCache cache_rows(const Model& model, const SampleMatrix& rows);
  void log_phi_block(const ParamVector& theta, const SampleMatrix& rows, const LinearCache& cache,
                     std::size_t begin, std::size_t count, std::span<double> out) const;
  void grad_block(const ParamVector& theta, const SampleMatrix& rows, const LinearCache& cache,
                  std::size_t begin, std::span<const double> weights, Eigen::Ref<Eigen::VectorXd> acc) const;

  const Model& model_;
  const SampleMatrix& x_;
  const NoisePairing& pairing_;
  bool linear_ = false;
  LinearCache x_cache_;
  LinearCache y_cache_;
};

LossReport cnce_loss(const Model& model, const ParamVector& theta, const SampleMatrix& x,
                     const NoisePairing& pairing);

/// NCE baseline: logistic regression of data against ν·N marginal noise points with
/// h(u) = log φ(u; θ) + c - log p_n(u) - log ν. The last entry of the parameter vector is c.
class NceObjective {
 public:
  NceObjective(const Model& model, const SampleMatrix& x, const SampleMatrix& noise,
               const MarginalKernel& marginal);

  LossReport operator()(const ParamVector& theta_with_c) const;
  std::size_t nu() const { return nu_; }

 private:
  const Model& model_;
  const SampleMatrix& x_;
  const SampleMatrix& noise_;
  std::size_t nu_ = 1;
  std::vector<double> log_pn_x_;
  std::vector<double> log_pn_noise_;
};

LossReport nce_loss(const Model& model, const ParamVector& theta_with_c, const SampleMatrix& x,
                    const SampleMatrix& noise, const MarginalKernel& marginal);

/// Empirical mean of Σ_i ∂²f/∂x_i² + ½‖∇_x f‖² with its analytic θ-gradient.
LossReport score_matching_loss(const Model& model, const ParamVector& theta, const SampleMatrix& x);

struct MleResult {
  enum class Method { ClosedForm, GradientAscent };
  ParamVector theta_hat;
  Method method = Method::ClosedForm;
  bool converged = true;
  /// Optimiser trajectory for the gradient-based fits (ICA).
  std::optional<EstimationRun> run;
};

/// Maximum likelihood on the normalised model. Gaussian: inverse of the zero-mean second
/// moment matrix; Bernoulli: normalised frequencies; log-normal: 1/mean((log x)²);
/// ICA: gradient ascent from the symmetric whitening matrix. Ring is unsupported.
MleResult mle_fit(const Model& model, const SampleMatrix& x, const OptimizerConfig& config = {},
                  std::uint64_t rng_seed = 0);

/// Exact population CNCE loss for the Bernoulli model with bit-flip noise:
/// 2 Σ_{x,y ∈ {0,1}} p(x) pc(y|x) softplus(-G(x, y)), with p from θ_true.
double bernoulli_population_loss(const ParamVector& theta, const ParamVector& theta_true,
                                 double epsilon);
LossReport bernoulli_population_loss_report(const ParamVector& theta, const ParamVector& theta_true,
                                            double epsilon);

}  // namespace cnce
