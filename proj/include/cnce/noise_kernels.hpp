#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "cnce/types.hpp"

namespace cnce {

/// Conditional noise distribution pc(y|x).
class ConditionalKernel {
 public:
  virtual ~ConditionalKernel() = default;

  virtual std::string name() const = 0;
  /// pc(u1|u2) = pc(u2|u1) for all pairs.
  virtual bool symmetric() const = 0;

  /// Writes one draw y ~ pc(·|x) into `y`.
  virtual void sample(Point x, Rng& rng, std::span<double> y) const = 0;

  /// log pc(u2|u1) - log pc(u1|u2). Only consulted for asymmetric kernels.
  virtual double log_ratio_asymmetric(Point u1, Point u2) const;

  /// Throws ParameterError if the kernel cannot be sampled from.
  virtual void check_sampleable() const {}
};

/// y = x + ε ⊙ ξ with ξ standard normal; ε stored per dimension.
class GaussianPerturbKernel final : public ConditionalKernel {
 public:
  explicit GaussianPerturbKernel(std::vector<double> epsilon);

  std::string name() const override { return "gaussian_perturb"; }
  bool symmetric() const override { return true; }
  void sample(Point x, Rng& rng, std::span<double> y) const override;
  void check_sampleable() const override;

  const std::vector<double>& epsilon() const { return epsilon_; }

 private:
  std::vector<double> epsilon_;
};

/// y = x with probability 1 - ε, flipped otherwise. Inputs in {0,1}.
class BernoulliFlipKernel final : public ConditionalKernel {
 public:
  explicit BernoulliFlipKernel(double epsilon);

  std::string name() const override { return "bernoulli_flip"; }
  bool symmetric() const override { return true; }
  void sample(Point x, Rng& rng, std::span<double> y) const override;

  double epsilon() const { return epsilon_; }

 private:
  double epsilon_;
};

/// Kernel configuration as it appears in JSON configs.
struct KernelConfig {
  enum class Kind { GaussianPerturb, BernoulliFlip };
  Kind kind = Kind::GaussianPerturb;
  double epsilon = 0.5;
  /// Scale ε by the empirical std of each data dimension (GaussianPerturb only).
  bool per_dim = true;
};

/// Builds the kernel for data `x`; with per_dim, ε_d = epsilon * std_d(x).
std::unique_ptr<ConditionalKernel> make_kernel(const KernelConfig& config, const SampleMatrix& x);

/// log pc(u2|u1) - log pc(u1|u2); exactly 0 for symmetric kernels.
double log_ratio(const ConditionalKernel& kernel, Point u1, Point u2);

/// κ noise points per observation plus the cached log-ratios log pc(y|x) - log pc(x|y).
struct NoisePairing {
  std::size_t n = 0;
  std::size_t kappa = 0;
  /// Row i*κ + j holds y_ij.
  SampleMatrix noise;
  /// Entry i*κ + j holds log_ratio(x_i, y_ij).
  std::vector<double> log_ratio;
  bool symmetric = true;
};

NoisePairing sample_conditional(const ConditionalKernel& kernel, const SampleMatrix& x,
                                std::size_t kappa, std::uint64_t rng_seed);

/// Pairing from externally supplied noise (rows ordered i*κ + j).
NoisePairing pair_with_noise(const ConditionalKernel& kernel, const SampleMatrix& x,
                             SampleMatrix noise, std::size_t kappa);

/// Moment-matched Gaussian noise for the NCE baseline.
struct MarginalKernel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::LLT<Eigen::MatrixXd> cholesky;
  /// -½ log det(2πΣ)
  double log_normaliser = 0.0;
};

/// Sample mean and unbiased sample covariance plus 1e-9·I jitter. Needs N >= D + 1.
MarginalKernel fit_marginal(const SampleMatrix& x);
SampleMatrix sample_marginal(const MarginalKernel& kernel, std::size_t m, std::uint64_t rng_seed);
double log_density_marginal(const MarginalKernel& kernel, Point u);

}  // namespace cnce
