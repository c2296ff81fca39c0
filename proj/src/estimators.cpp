#include "cnce/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace cnce {

namespace {

void validate_sample(const Model& model, const SampleMatrix& x) {
  if (x.dim() != model.spec().dim) {
    throw std::invalid_argument("sample dimension " + std::to_string(x.dim()) +
                                " does not match model dimension " + std::to_string(model.spec().dim));
  }
  for (std::size_t i = 0; i < x.n(); ++i) model.check_point(x.row(i));
}

}  // namespace

double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double cnce_G(const Model& model, const ParamVector& theta, const ConditionalKernel& kernel, Point u1,
              Point u2) {
  model.check_params(theta);
  model.check_point(u1);
  model.check_point(u2);
  return model.log_phi(theta, u1) - model.log_phi(theta, u2) + log_ratio(kernel, u1, u2);
}

// ---------------------------------------------------------------------------

CnceObjective::CnceObjective(const Model& model, const SampleMatrix& x, const NoisePairing& pairing)
    : model_(model), x_(x), pairing_(pairing) {
  if (x.n() == 0) throw std::invalid_argument("CNCE needs at least one observation");
  if (pairing.n != x.n() || pairing.kappa == 0 || pairing.noise.n() != x.n() * pairing.kappa ||
      pairing.noise.dim() != x.dim() || pairing.log_ratio.size() != pairing.noise.n()) {
    throw std::invalid_argument("noise pairing shape does not match the sample");
  }
  validate_sample(model, x);
  validate_sample(model, pairing.noise);
  linear_ = model.linear_in_theta();
  if (linear_) {
    x_cache_ = cache_rows(model, x);
    y_cache_ = cache_rows(model, pairing.noise);
  }
}

CnceObjective::LinearCache CnceObjective::cache_rows(const Model& model, const SampleMatrix& rows) {
  const std::size_t p = model.param_count();
  LinearCache cache;
  cache.features.resize(rows.n() * p);
  cache.offsets.resize(rows.n());
  for (std::size_t r = 0; r < rows.n(); ++r) {
    cache.offsets[r] = model.linear_features(rows.row(r), {cache.features.data() + r * p, p});
  }
  return cache;
}

void CnceObjective::log_phi_block(const ParamVector& theta, const SampleMatrix& rows, const LinearCache& cache,
                                  std::size_t begin, std::size_t count, std::span<double> out) const {
  if (!linear_) {
    model_.log_phi_rows(theta, rows.rows(begin, count), out.first(count));
    return;
  }
  const std::size_t p = model_.param_count();
  for (std::size_t r = 0; r < count; ++r) {
    const double* f = cache.features.data() + (begin + r) * p;
    double v = cache.offsets[begin + r];
    for (std::size_t k = 0; k < p; ++k) v += f[k] * theta[static_cast<Eigen::Index>(k)];
    out[r] = v;
  }
}

void CnceObjective::grad_block(const ParamVector& theta, const SampleMatrix& rows, const LinearCache& cache,
                               std::size_t begin, std::span<const double> weights,
                               Eigen::Ref<Eigen::VectorXd> acc) const {
  if (!linear_) {
    model_.add_grad_theta_rows(theta, rows.rows(begin, weights.size()), weights, acc);
    return;
  }
  const std::size_t p = model_.param_count();
  for (std::size_t r = 0; r < weights.size(); ++r) {
    const double* f = cache.features.data() + (begin + r) * p;
    for (std::size_t k = 0; k < p; ++k) acc[static_cast<Eigen::Index>(k)] += weights[r] * f[k];
  }
}

LossReport CnceObjective::operator()(const ParamVector& theta) const {
  model_.check_params(theta);
  const std::size_t n = x_.n();
  const std::size_t kappa = pairing_.kappa;
  const auto p = static_cast<Eigen::Index>(model_.param_count());

  std::vector<double> fx(kReductionChunk);
  std::vector<double> fy(kReductionChunk * kappa);
  std::vector<double> wx(kReductionChunk);
  std::vector<double> wy(kReductionChunk * kappa);
  Eigen::VectorXd chunk_grad(p);

  double value = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
  for (std::size_t begin = 0; begin < n; begin += kReductionChunk) {
    const std::size_t count = std::min(kReductionChunk, n - begin);
    log_phi_block(theta, x_, x_cache_, begin, count, fx);
    log_phi_block(theta, pairing_.noise, y_cache_, begin * kappa, count * kappa, fy);

    double chunk_value = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      double w = 0.0;
      for (std::size_t j = 0; j < kappa; ++j) {
        const std::size_t k = i * kappa + j;
        const double g = fx[i] - fy[k] + pairing_.log_ratio[begin * kappa + k];
        // softplus(-G) and σ(-G) share e^{-|G|}; d softplus(-G)/dG = -σ(-G)
        const double e = std::exp(-std::abs(g));
        chunk_value += std::log1p(e) + (g < 0.0 ? -g : 0.0);
        const double s = g < 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
        w -= s;
        wy[k] = s;
      }
      wx[i] = w;
    }
    chunk_grad.setZero();
    grad_block(theta, x_, x_cache_, begin, {wx.data(), count}, chunk_grad);
    grad_block(theta, pairing_.noise, y_cache_, begin * kappa, {wy.data(), count * kappa}, chunk_grad);
    value += chunk_value;
    grad += chunk_grad;
  }

  const double scale = 2.0 / (static_cast<double>(kappa) * static_cast<double>(n));
  LossReport report;
  report.value = scale * value;
  report.gradient = scale * grad;
  report.n_terms = n * kappa;
  return report;
}

LossReport cnce_loss(const Model& model, const ParamVector& theta, const SampleMatrix& x,
                     const NoisePairing& pairing) {
  return CnceObjective(model, x, pairing)(theta);
}

// ---------------------------------------------------------------------------

NceObjective::NceObjective(const Model& model, const SampleMatrix& x, const SampleMatrix& noise,
                           const MarginalKernel& marginal)
    : model_(model), x_(x), noise_(noise) {
  if (x.n() == 0) throw std::invalid_argument("NCE needs at least one observation");
  if (noise.n() == 0 || noise.n() % x.n() != 0) {
    throw std::invalid_argument("NCE noise count must be a positive multiple of the sample size");
  }
  if (static_cast<Eigen::Index>(x.dim()) != marginal.mean.size()) {
    throw std::invalid_argument("marginal noise dimension does not match the sample");
  }
  nu_ = noise.n() / x.n();
  validate_sample(model, x);
  validate_sample(model, noise);
  log_pn_x_.resize(x.n());
  log_pn_noise_.resize(noise.n());
  for (std::size_t i = 0; i < x.n(); ++i) log_pn_x_[i] = log_density_marginal(marginal, x.row(i));
  for (std::size_t i = 0; i < noise.n(); ++i) {
    log_pn_noise_[i] = log_density_marginal(marginal, noise.row(i));
  }
}

LossReport NceObjective::operator()(const ParamVector& theta_with_c) const {
  const auto p = static_cast<Eigen::Index>(model_.param_count());
  if (theta_with_c.size() != p + 1) {
    throw ParameterError("NCE parameter vector must hold the model parameters plus c");
  }
  const ParamVector theta = theta_with_c.head(p);
  const double c = theta_with_c[p];
  model_.check_params(theta);
  const double offset = c - std::log(static_cast<double>(nu_));

  std::vector<double> f(kReductionChunk);
  std::vector<double> w(kReductionChunk);
  Eigen::VectorXd chunk_grad(p);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p + 1);
  double value = 0.0;

  // Data term: -log σ(h) = softplus(-h), d/dh = -σ(-h).
  // Noise term: -log(1 - σ(h)) = softplus(h), d/dh = σ(h).
  auto accumulate = [&](const SampleMatrix& rows, const std::vector<double>& log_pn, bool is_data) {
    for (std::size_t begin = 0; begin < rows.n(); begin += kReductionChunk) {
      const std::size_t count = std::min(kReductionChunk, rows.n() - begin);
      const RowsView view = rows.rows(begin, count);
      model_.log_phi_rows(theta, view, {f.data(), count});
      double chunk_value = 0.0;
      double chunk_dc = 0.0;
      for (std::size_t r = 0; r < count; ++r) {
        const double h = f[r] + offset - log_pn[begin + r];
        if (is_data) {
          chunk_value += softplus(-h);
          w[r] = -logistic(-h);
        } else {
          chunk_value += softplus(h);
          w[r] = logistic(h);
        }
        chunk_dc += w[r];
      }
      chunk_grad.setZero();
      model_.add_grad_theta_rows(theta, view, {w.data(), count}, chunk_grad);
      value += chunk_value;
      grad.head(p) += chunk_grad;
      grad[p] += chunk_dc;
    }
  };
  accumulate(x_, log_pn_x_, true);
  accumulate(noise_, log_pn_noise_, false);

  const double scale = 1.0 / static_cast<double>(x_.n());
  LossReport report;
  report.value = scale * value;
  report.gradient = scale * grad;
  report.n_terms = x_.n() + noise_.n();
  return report;
}

LossReport nce_loss(const Model& model, const ParamVector& theta_with_c, const SampleMatrix& x,
                    const SampleMatrix& noise, const MarginalKernel& marginal) {
  return NceObjective(model, x, noise, marginal)(theta_with_c);
}

// ---------------------------------------------------------------------------

LossReport score_matching_loss(const Model& model, const ParamVector& theta, const SampleMatrix& x) {
  if (!model.has_input_derivatives()) {
    throw UnsupportedError("score matching is unsupported for the " +
                           std::string(to_string(model.spec().kind)) + " model");
  }
  if (x.n() == 0) throw std::invalid_argument("score matching needs at least one observation");
  model.check_params(theta);
  validate_sample(model, x);
  const auto p = static_cast<Eigen::Index>(model.param_count());
  const double inv_n = 1.0 / static_cast<double>(x.n());

  double value = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd chunk_grad(p);
  for (std::size_t begin = 0; begin < x.n(); begin += kReductionChunk) {
    const std::size_t count = std::min(kReductionChunk, x.n() - begin);
    double chunk_value = 0.0;
    chunk_grad.setZero();
    for (std::size_t i = begin; i < begin + count; ++i) {
      chunk_value += model.score_matching_term(theta, x.row(i), 1.0, chunk_grad);
    }
    value += chunk_value;
    grad += chunk_grad;
  }
  LossReport report;
  report.value = inv_n * value;
  report.gradient = inv_n * grad;
  report.n_terms = x.n();
  return report;
}

// ---------------------------------------------------------------------------

namespace {

MleResult ica_mle(const Model& model, const SampleMatrix& x, const OptimizerConfig& config,
                  std::uint64_t rng_seed) {
  const std::size_t d = model.spec().dim;
  const auto dd = static_cast<Eigen::Index>(d);
  const auto data = x.as_eigen();

  // Symmetric whitening C^{-1/2} as the starting demixing matrix.
  const Eigen::MatrixXd second = (data.transpose() * data) / static_cast<double>(x.n());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(second);
  const Eigen::MatrixXd whiten = eig.eigenvectors() *
                                 eig.eigenvalues().cwiseMax(1e-12).cwiseInverse().cwiseSqrt().asDiagonal() *
                                 eig.eigenvectors().transpose();

  const double inv_n = 1.0 / static_cast<double>(x.n());
  const double const_term = static_cast<double>(d) * 0.5 * std::log(2.0);
  const Objective nll = [&](const Eigen::VectorXd& theta) {
    const Eigen::MatrixXd b = unpack_demixing(d, theta);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(b);
    const double det = lu.determinant();
    LossReport r;
    r.n_terms = x.n();
    if (det == 0.0 || !std::isfinite(det)) {
      r.value = std::numeric_limits<double>::infinity();
      r.gradient = Eigen::VectorXd::Zero(theta.size());
      return r;
    }
    double abs_sum = 0.0;
    Eigen::MatrixXd g = -lu.inverse().transpose();
    Eigen::MatrixXd sign_scatter = Eigen::MatrixXd::Zero(dd, dd);
    for (std::size_t i = 0; i < x.n(); ++i) {
      Eigen::Map<const Eigen::VectorXd> xi(x.row(i).data(), dd);
      const Eigen::VectorXd s = b * xi;
      for (Eigen::Index j = 0; j < dd; ++j) {
        abs_sum += std::abs(s[j]);
        const double sg = s[j] > 0.0 ? 1.0 : (s[j] < 0.0 ? -1.0 : 0.0);
        if (sg != 0.0) sign_scatter.row(j) += sg * xi.transpose();
      }
    }
    g += std::numbers::sqrt2 * inv_n * sign_scatter;
    r.value = -std::log(std::abs(det)) + const_term + std::numbers::sqrt2 * inv_n * abs_sum;
    r.gradient = pack_demixing(g);
    return r;
  };

  MleResult result;
  result.method = MleResult::Method::GradientAscent;
  EstimationRun run = minimize(nll, pack_demixing(whiten), config, rng_seed);
  result.theta_hat = run.theta;
  result.converged = run.converged;
  result.run = std::move(run);
  return result;
}

}  // namespace

MleResult mle_fit(const Model& model, const SampleMatrix& x, const OptimizerConfig& config,
                  std::uint64_t rng_seed) {
  const auto& spec = model.spec();
  if (spec.kind == ModelKind::Ring) throw UnsupportedError("mle unsupported for ring");
  if (x.n() == 0) throw std::invalid_argument("mle needs at least one observation");
  validate_sample(model, x);

  MleResult result;
  switch (spec.kind) {
    case ModelKind::GaussianPrecision: {
      const auto data = x.as_eigen();
      const Eigen::MatrixXd s = (data.transpose() * data) / static_cast<double>(x.n());
      Eigen::LLT<Eigen::MatrixXd> llt(s);
      if (llt.info() != Eigen::Success) {
        throw ParameterError("sample second-moment matrix is singular");
      }
      const auto d = s.rows();
      result.theta_hat = pack_precision(llt.solve(Eigen::MatrixXd::Identity(d, d)));
      break;
    }
    case ModelKind::Bernoulli: {
      double ones = 0.0;
      for (std::size_t i = 0; i < x.n(); ++i) ones += x(i, 0);
      const double p1 = ones / static_cast<double>(x.n());
      result.theta_hat = ParamVector(2);
      result.theta_hat << 1.0 - p1, p1;
      break;
    }
    case ModelKind::LogNormalExt: {
      double sum = 0.0;
      for (std::size_t i = 0; i < x.n(); ++i) {
        const double l = std::log(x(i, 0));
        sum += l * l;
      }
      Rng unused(0);
      result.theta_hat = model.initial_free_params(unused, 0.0);
      result.theta_hat[0] = static_cast<double>(x.n()) / sum;
      break;
    }
    case ModelKind::IcaLaplace: return ica_mle(model, x, config, rng_seed);
    case ModelKind::Ring: break;
  }
  return result;
}

// ---------------------------------------------------------------------------

LossReport bernoulli_population_loss_report(const ParamVector& theta, const ParamVector& theta_true,
                                            double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw std::invalid_argument("population loss needs 0 < epsilon < 1");
  }
  if (theta.size() != 2 || theta_true.size() != 2 || !(theta[0] > 0.0 && theta[1] > 0.0) ||
      !(theta_true[0] > 0.0 && theta_true[1] > 0.0)) {
    throw ParameterError("Bernoulli parameters must be two positive numbers");
  }
  const double p1 = theta_true[1] / (theta_true[0] + theta_true[1]);
  const double pd[2] = {1.0 - p1, p1};

  LossReport r;
  r.gradient = Eigen::VectorXd::Zero(2);
  r.n_terms = 4;
  for (int xv = 0; xv < 2; ++xv) {
    for (int yv = 0; yv < 2; ++yv) {
      const double weight = pd[xv] * (xv == yv ? 1.0 - epsilon : epsilon);
      // The ratio form makes the value exactly invariant under θ -> 2^k θ.
      const double g = xv == yv ? 0.0 : std::log(theta[xv] / theta[yv]);
      r.value += 2.0 * weight * softplus(-g);
      const double s = -2.0 * weight * logistic(-g);
      r.gradient[xv] += s / theta[xv];
      r.gradient[yv] -= s / theta[yv];
    }
  }
  return r;
}

double bernoulli_population_loss(const ParamVector& theta, const ParamVector& theta_true,
                                 double epsilon) {
  return bernoulli_population_loss_report(theta, theta_true, epsilon).value;
}

}  // namespace cnce
