#include "cnce/noise_kernels.hpp"

#include <cmath>
#include <numbers>

namespace cnce {

double ConditionalKernel::log_ratio_asymmetric(Point, Point) const {
  throw UnsupportedError("kernel '" + name() + "' does not define a log-ratio");
}

GaussianPerturbKernel::GaussianPerturbKernel(std::vector<double> epsilon)
    : epsilon_(std::move(epsilon)) {
  if (epsilon_.empty()) throw ParameterError("gaussian_perturb needs at least one ε component");
  for (double e : epsilon_) {
    if (!std::isfinite(e) || e < 0.0) throw ParameterError("gaussian_perturb ε must be finite and >= 0");
  }
}

void GaussianPerturbKernel::check_sampleable() const {
  for (double e : epsilon_) {
    if (!(e > 0.0)) throw ParameterError("gaussian_perturb with ε = 0 is degenerate; cannot sample");
  }
}

void GaussianPerturbKernel::sample(Point x, Rng& rng, std::span<double> y) const {
  std::normal_distribution<double> normal;
  for (std::size_t d = 0; d < x.size(); ++d) y[d] = x[d] + epsilon_[d] * normal(rng);
}

BernoulliFlipKernel::BernoulliFlipKernel(double epsilon) : epsilon_(epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ParameterError("bernoulli_flip ε must lie in [0, 1]");
}

void BernoulliFlipKernel::sample(Point x, Rng& rng, std::span<double> y) const {
  std::bernoulli_distribution flip(epsilon_);
  for (std::size_t d = 0; d < x.size(); ++d) y[d] = flip(rng) ? 1.0 - x[d] : x[d];
}

std::unique_ptr<ConditionalKernel> make_kernel(const KernelConfig& config, const SampleMatrix& x) {
  switch (config.kind) {
    case KernelConfig::Kind::BernoulliFlip:
      return std::make_unique<BernoulliFlipKernel>(config.epsilon);
    case KernelConfig::Kind::GaussianPerturb: {
      std::vector<double> eps(x.dim(), config.epsilon);
      if (config.per_dim) {
        const auto moments = x.standardisation().value_or(x.column_moments());
        for (std::size_t d = 0; d < x.dim(); ++d) eps[d] *= moments.std[d];
      }
      return std::make_unique<GaussianPerturbKernel>(std::move(eps));
    }
  }
  throw ParameterError("unknown kernel kind");
}

double log_ratio(const ConditionalKernel& kernel, Point u1, Point u2) {
  if (kernel.symmetric()) return 0.0;
  return kernel.log_ratio_asymmetric(u1, u2);
}

NoisePairing pair_with_noise(const ConditionalKernel& kernel, const SampleMatrix& x,
                             SampleMatrix noise, std::size_t kappa) {
  if (kappa == 0) throw std::invalid_argument("kappa must be at least 1");
  if (noise.n() != x.n() * kappa || noise.dim() != x.dim()) {
    throw std::invalid_argument("noise shape does not match N*kappa x D");
  }
  NoisePairing pairing;
  pairing.n = x.n();
  pairing.kappa = kappa;
  pairing.symmetric = kernel.symmetric();
  pairing.log_ratio.assign(noise.n(), 0.0);
  if (!pairing.symmetric) {
    for (std::size_t i = 0; i < x.n(); ++i) {
      for (std::size_t j = 0; j < kappa; ++j) {
        const double r = kernel.log_ratio_asymmetric(x.row(i), noise.row(i * kappa + j));
        if (!std::isfinite(r)) throw DomainError("conditional log-ratio is not finite");
        pairing.log_ratio[i * kappa + j] = r;
      }
    }
  }
  pairing.noise = std::move(noise);
  return pairing;
}

NoisePairing sample_conditional(const ConditionalKernel& kernel, const SampleMatrix& x,
                                std::size_t kappa, std::uint64_t rng_seed) {
  if (kappa == 0) throw std::invalid_argument("kappa must be at least 1");
  kernel.check_sampleable();
  Rng rng(rng_seed);
  SampleMatrix noise(x.n() * kappa, x.dim());
  for (std::size_t i = 0; i < x.n(); ++i) {
    for (std::size_t j = 0; j < kappa; ++j) kernel.sample(x.row(i), rng, noise.row(i * kappa + j));
  }
  return pair_with_noise(kernel, x, std::move(noise), kappa);
}

MarginalKernel fit_marginal(const SampleMatrix& x) {
  const std::size_t n = x.n();
  const auto d = static_cast<Eigen::Index>(x.dim());
  if (n < x.dim() + 1) throw std::invalid_argument("fit_marginal needs at least D + 1 samples");
  const auto data = x.as_eigen();
  MarginalKernel k;
  k.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centred = data.rowwise() - k.mean.transpose();
  k.covariance = (centred.transpose() * centred) / static_cast<double>(n - 1);
  k.covariance += 1e-9 * Eigen::MatrixXd::Identity(d, d);
  k.cholesky.compute(k.covariance);
  if (k.cholesky.info() != Eigen::Success) {
    throw ParameterError("marginal covariance is singular after jitter");
  }
  const Eigen::MatrixXd l = k.cholesky.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  k.log_normaliser = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
  return k;
}

SampleMatrix sample_marginal(const MarginalKernel& kernel, std::size_t m, std::uint64_t rng_seed) {
  const auto d = kernel.mean.size();
  Rng rng(rng_seed);
  std::normal_distribution<double> normal;
  const Eigen::MatrixXd l = kernel.cholesky.matrixL();
  SampleMatrix out(m, static_cast<std::size_t>(d));
  Eigen::VectorXd z(d);
  for (std::size_t i = 0; i < m; ++i) {
    for (auto& v : z) v = normal(rng);
    const Eigen::VectorXd y = kernel.mean + l * z;
    std::copy(y.data(), y.data() + d, out.row(i).data());
  }
  return out;
}

double log_density_marginal(const MarginalKernel& kernel, Point u) {
  Eigen::Map<const Eigen::VectorXd> x(u.data(), static_cast<Eigen::Index>(u.size()));
  const Eigen::VectorXd z = kernel.cholesky.matrixL().solve(x - kernel.mean);
  return kernel.log_normaliser - 0.5 * z.squaredNorm();
}

}  // namespace cnce
