#include "cnce/model_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace cnce {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

void require_finite(Point u) {
  for (double v : u) {
    if (!std::isfinite(v)) throw DomainError("input point has a non-finite coordinate");
  }
}

double squared_norm(Point u) {
  double s = 0.0;
  for (double v : u) s += v * v;
  return s;
}

double sign_or_zero(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// ---------------------------------------------------------------------------
// log φ(u; Λ) = -½ uᵀΛu, Λ packed as its upper triangle (row-major).
class GaussianModel final : public Model {
 public:
  using Model::Model;

  double log_phi(const ParamVector& theta, Point u) const override {
    const std::size_t d = spec().dim;
    double q = 0.0;
    std::size_t p = 0;
    for (std::size_t k = 0; k < d; ++k) {
      q += 0.5 * theta[p++] * u[k] * u[k];
      for (std::size_t l = k + 1; l < d; ++l) q += theta[p++] * u[k] * u[l];
    }
    return -q;
  }

  void add_grad_theta(const ParamVector&, Point u, double weight,
                      Eigen::Ref<Eigen::VectorXd> acc) const override {
    const std::size_t d = spec().dim;
    std::size_t p = 0;
    for (std::size_t k = 0; k < d; ++k) {
      acc[p++] -= 0.5 * weight * u[k] * u[k];
      for (std::size_t l = k + 1; l < d; ++l) acc[p++] -= weight * u[k] * u[l];
    }
  }

  void log_phi_rows(const ParamVector& theta, RowsView rows, std::span<double> out) const override {
    const std::size_t d = spec().dim;
    const double* t = theta.data();
    for (std::size_t r = 0; r < rows.count; ++r) {
      const double* u = rows.data + r * rows.dim;
      // Packed upper triangle: diagonal terms weigh ½, off-diagonal terms 1.
      double diag = 0.0;
      double off = 0.0;
      std::size_t p = 0;
      for (std::size_t k = 0; k < d; ++k) {
        diag += t[p++] * u[k] * u[k];
        double s = 0.0;
        for (std::size_t l = k + 1; l < d; ++l) s += t[p++] * u[l];
        off += u[k] * s;
      }
      out[r] = -0.5 * diag - off;
    }
  }

  void add_grad_theta_rows(const ParamVector&, RowsView rows, std::span<const double> weights,
                           Eigen::Ref<Eigen::VectorXd> acc) const override {
    const std::size_t d = spec().dim;
    // Weighted scatter Σ w u uᵀ (upper triangle), packed once at the end.
    std::vector<double> scatter(d * d, 0.0);
    for (std::size_t r = 0; r < rows.count; ++r) {
      const double w = weights[r];
      if (w == 0.0) continue;
      const double* u = rows.data + r * rows.dim;
      for (std::size_t k = 0; k < d; ++k) {
        const double wu = w * u[k];
        double* row = scatter.data() + k * d;
        for (std::size_t l = k; l < d; ++l) row[l] += wu * u[l];
      }
    }
    std::size_t p = 0;
    for (std::size_t k = 0; k < d; ++k) {
      acc[p++] -= 0.5 * scatter[k * d + k];
      for (std::size_t l = k + 1; l < d; ++l) acc[p++] -= scatter[k * d + l];
    }
  }

  bool has_input_derivatives() const override { return true; }

  Eigen::VectorXd grad_u(const ParamVector& theta, Point u) const override {
    check_point(u);
    const Eigen::MatrixXd lambda = unpack_precision(spec().dim, theta);
    Eigen::Map<const Eigen::VectorXd> x(u.data(), static_cast<Eigen::Index>(u.size()));
    return -(lambda * x);
  }

  double laplacian_u(const ParamVector& theta, Point u) const override {
    check_point(u);
    return -unpack_precision(spec().dim, theta).trace();
  }

  double score_matching_term(const ParamVector& theta, Point u, double weight,
                             Eigen::Ref<Eigen::VectorXd> acc) const override {
    const std::size_t d = spec().dim;
    const Eigen::MatrixXd lambda = unpack_precision(d, theta);
    Eigen::Map<const Eigen::VectorXd> x(u.data(), static_cast<Eigen::Index>(d));
    const Eigen::VectorXd lx = lambda * x;
    std::size_t p = 0;
    for (std::size_t k = 0; k < d; ++k) {
      acc[p++] += weight * (-1.0 + lx[k] * x[k]);
      for (std::size_t l = k + 1; l < d; ++l) acc[p++] += weight * (lx[k] * x[l] + lx[l] * x[k]);
    }
    return -lambda.trace() + 0.5 * lx.squaredNorm();
  }

  void check_true_params(const ParamVector& theta) const override {
    check_params(theta);
    Eigen::LLT<Eigen::MatrixXd> llt(unpack_precision(spec().dim, theta));
    if (llt.info() != Eigen::Success) {
      throw ParameterError("precision matrix is not positive definite");
    }
  }

  SampleMatrix sample(const ParamVector& theta_true, std::size_t n, Rng& rng) const override {
    check_true_params(theta_true);
    const std::size_t d = spec().dim;
    Eigen::LLT<Eigen::MatrixXd> llt(unpack_precision(d, theta_true));
    // Λ = LLᵀ, x = L⁻ᵀ z has covariance Λ⁻¹.
    const Eigen::MatrixXd lt = llt.matrixU();
    std::normal_distribution<double> normal;
    SampleMatrix out(n, d);
    Eigen::VectorXd z(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& v : z) v = normal(rng);
      const Eigen::VectorXd x = lt.triangularView<Eigen::Upper>().solve(z);
      std::copy(x.data(), x.data() + d, out.row(i).data());
    }
    return out;
  }

  ParamVector random_true_params(Rng& rng) const override {
    const auto d = static_cast<Eigen::Index>(spec().dim);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd a(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c) a(r, c) = normal(rng);
    const Eigen::MatrixXd lambda = a.transpose() * a + 0.5 * Eigen::MatrixXd::Identity(d, d);
    return pack_precision(lambda);
  }
};

// ---------------------------------------------------------------------------
// log φ(u; B) = -√2 Σ_j |b_j · u|. Subgradient sign(0) := 0 at kinks.
class IcaModel final : public Model {
 public:
  using Model::Model;

  double log_phi(const ParamVector& theta, Point u) const override {
    const std::size_t d = spec().dim;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double proj = 0.0;
      for (std::size_t k = 0; k < d; ++k) proj += theta[j * d + k] * u[k];
      s += std::abs(proj);
    }
    return -kSqrt2 * s;
  }

  void add_grad_theta(const ParamVector& theta, Point u, double weight,
                      Eigen::Ref<Eigen::VectorXd> acc) const override {
    const std::size_t d = spec().dim;
    for (std::size_t j = 0; j < d; ++j) {
      double proj = 0.0;
      for (std::size_t k = 0; k < d; ++k) proj += theta[j * d + k] * u[k];
      const double c = -kSqrt2 * weight * sign_or_zero(proj);
      if (c == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) acc[j * d + k] += c * u[k];
    }
  }

  void log_phi_rows(const ParamVector& theta, RowsView rows, std::span<double> out) const override {
    const Eigen::MatrixXd proj = row_block(rows) * demixing(theta).transpose();
    Eigen::Map<Eigen::VectorXd>(out.data(), proj.rows()) = -kSqrt2 * proj.cwiseAbs().rowwise().sum();
  }

  void add_grad_theta_rows(const ParamVector& theta, RowsView rows, std::span<const double> weights,
                           Eigen::Ref<Eigen::VectorXd> acc) const override {
    const auto u = row_block(rows);
    const Eigen::MatrixXd proj = u * demixing(theta).transpose();
    const Eigen::Map<const Eigen::VectorXd> w(weights.data(), proj.rows());
    // Row j of the gradient block is -√2 Σ_r w_r sign(b_j·u_r) u_r.
    const Eigen::MatrixXd signed_w =
        proj.unaryExpr([](double v) { return sign_or_zero(v); }).array().colwise() * w.array();
    const Eigen::MatrixXd g = signed_w.transpose() * u;
    const auto d = static_cast<Eigen::Index>(spec().dim);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index k = 0; k < d; ++k) acc[j * d + k] -= kSqrt2 * g(j, k);
  }

  void check_true_params(const ParamVector& theta) const override {
    check_params(theta);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(unpack_demixing(spec().dim, theta));
    const auto& sv = svd.singularValues();
    if (sv[sv.size() - 1] <= 1e-12 * std::max(1.0, sv[0])) {
      throw ParameterError("demixing matrix is singular");
    }
  }

  SampleMatrix sample(const ParamVector& theta_true, std::size_t n, Rng& rng) const override {
    check_true_params(theta_true);
    const std::size_t d = spec().dim;
    const Eigen::MatrixXd mixing = unpack_demixing(d, theta_true).inverse();
    // Unit-variance Laplace sources: scale 1/√2, drawn as a difference of exponentials.
    std::exponential_distribution<double> expo(1.0);
    const double scale = 1.0 / kSqrt2;
    SampleMatrix out(n, d);
    Eigen::VectorXd s(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& v : s) v = scale * (expo(rng) - expo(rng));
      const Eigen::VectorXd x = mixing * s;
      std::copy(x.data(), x.data() + d, out.row(i).data());
    }
    return out;
  }

  ParamVector random_true_params(Rng& rng) const override {
    const auto d = static_cast<Eigen::Index>(spec().dim);
    std::normal_distribution<double> normal;
    for (;;) {
      Eigen::MatrixXd b(d, d);
      for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c) b(r, c) = normal(rng);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(b);
      if (svd.singularValues()[d - 1] > 0.1) return pack_demixing(b);
    }
  }

 private:
  using RowBlock = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  static RowBlock row_block(RowsView rows) {
    return {rows.data, static_cast<Eigen::Index>(rows.count), static_cast<Eigen::Index>(rows.dim)};
  }

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> demixing(
      const ParamVector& theta) const {
    const auto d = static_cast<Eigen::Index>(spec().dim);
    return {theta.data(), d, d};
  }
};

// ---------------------------------------------------------------------------
// log φ(u; γ) = -(γ/2)(‖u‖ - μ)², μ fixed by the ModelSpec.
class RingModel final : public Model {
 public:
  using Model::Model;

  double log_phi(const ParamVector& theta, Point u) const override {
    const double d = std::sqrt(squared_norm(u)) - spec().ring_mean;
    return -0.5 * theta[0] * d * d;
  }

  void add_grad_theta(const ParamVector&, Point u, double weight,
                      Eigen::Ref<Eigen::VectorXd> acc) const override {
    const double d = std::sqrt(squared_norm(u)) - spec().ring_mean;
    acc[0] -= 0.5 * weight * d * d;
  }

  bool linear_in_theta() const override { return true; }

  double linear_features(Point u, std::span<double> features) const override {
    const double d = std::sqrt(squared_norm(u)) - spec().ring_mean;
    features[0] = -0.5 * d * d;
    return 0.0;
  }

  bool has_input_derivatives() const override { return true; }

  Eigen::VectorXd grad_u(const ParamVector& theta, Point u) const override {
    check_point(u);
    const double r = radius_or_throw(u);
    const double c = -theta[0] * (r - spec().ring_mean) / r;
    Eigen::VectorXd g(static_cast<Eigen::Index>(u.size()));
    for (std::size_t k = 0; k < u.size(); ++k) g[static_cast<Eigen::Index>(k)] = c * u[k];
    return g;
  }

  double laplacian_u(const ParamVector& theta, Point u) const override {
    check_point(u);
    const double r = radius_or_throw(u);
    const double dm1 = static_cast<double>(u.size()) - 1.0;
    return -theta[0] - dm1 * theta[0] * (r - spec().ring_mean) / r;
  }

  double score_matching_term(const ParamVector& theta, Point u, double weight,
                             Eigen::Ref<Eigen::VectorXd> acc) const override {
    const double r = radius_or_throw(u);
    const double dm1 = static_cast<double>(u.size()) - 1.0;
    const double g = theta[0];
    const double d = r - spec().ring_mean;
    acc[0] += weight * (-1.0 - dm1 * d / r + g * d * d);
    return -g - dm1 * g * d / r + 0.5 * g * g * d * d;
  }

  void check_params(const ParamVector& theta) const override {
    Model::check_params(theta);
    if (!(spec().ring_mean > 0.0)) throw ParameterError("ring mean must be positive");
  }

  void check_true_params(const ParamVector& theta) const override {
    check_params(theta);
    if (!(theta[0] > 0.0)) throw ParameterError("ring precision must be positive");
  }

  // GaussianRadius: radius ~ N(μ, 1/γ) truncated to r > 0. Exact: radius with density
  // ∝ r^{D-1} exp(-γ(r-μ)²/2), the radial law of φ on R^D. Its log-density is γ-strongly
  // concave, so N(mode, 1/γ) is a valid rejection envelope.
  SampleMatrix sample(const ParamVector& theta_true, std::size_t n, Rng& rng) const override {
    check_true_params(theta_true);
    const std::size_t dim = spec().dim;
    const double mu = spec().ring_mean;
    const double gamma = theta_true[0];
    const double dm1 = static_cast<double>(dim) - 1.0;
    const bool exact = spec().ring_sampler == ModelSpec::RingSampler::Exact;
    const double centre = exact ? 0.5 * (mu + std::sqrt(mu * mu + 4.0 * dm1 / gamma)) : mu;
    auto log_target = [&](double r) { return dm1 * std::log(r) - 0.5 * gamma * (r - mu) * (r - mu); };
    const double log_target_mode = log_target(centre);
    const double sd = 1.0 / std::sqrt(gamma);

    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    SampleMatrix out(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0;
      for (;;) {
        r = centre + sd * normal(rng);
        if (r <= 0.0) continue;
        if (!exact) break;
        const double log_env = log_target_mode - 0.5 * gamma * (r - centre) * (r - centre);
        if (std::log(unif(rng)) <= log_target(r) - log_env) break;
      }
      auto row = out.row(i);
      double norm2 = 0.0;
      do {
        norm2 = 0.0;
        for (auto& v : row) {
          v = normal(rng);
          norm2 += v * v;
        }
      } while (norm2 == 0.0);
      const double scale = r / std::sqrt(norm2);
      for (auto& v : row) v *= scale;
    }
    return out;
  }

  ParamVector random_true_params(Rng& rng) const override {
    std::uniform_real_distribution<double> unif(1.0, 10.0);
    ParamVector theta(1);
    theta[0] = unif(rng);
    return theta;
  }

  std::vector<bool> positive_mask() const override { return {true}; }

 private:
  static double radius_or_throw(Point u) {
    const double r = std::sqrt(squared_norm(u));
    if (r == 0.0) throw DomainError("ring model derivatives are singular at u = 0");
    return r;
  }
};

// ---------------------------------------------------------------------------
// Log-normal shape on u > 0, constant C on u <= 0.
class LogNormalExtModel final : public Model {
 public:
  using Model::Model;
  static constexpr double kInitialC = -5.0;

  double log_phi(const ParamVector& theta, Point u) const override {
    const double x = u[0];
    if (x <= 0.0) return theta[1];
    const double l = std::log(x);
    return -0.5 * theta[0] * l * l - l;
  }

  void add_grad_theta(const ParamVector&, Point u, double weight,
                      Eigen::Ref<Eigen::VectorXd> acc) const override {
    const double x = u[0];
    if (x <= 0.0) {
      acc[1] += weight;
    } else {
      const double l = std::log(x);
      acc[0] -= 0.5 * weight * l * l;
    }
  }

  bool linear_in_theta() const override { return true; }

  double linear_features(Point u, std::span<double> features) const override {
    const double x = u[0];
    if (x <= 0.0) {
      features[0] = 0.0;
      features[1] = 1.0;
      return 0.0;
    }
    const double l = std::log(x);
    features[0] = -0.5 * l * l;
    features[1] = 0.0;
    return -l;
  }

  bool has_input_derivatives() const override { return true; }

  Eigen::VectorXd grad_u(const ParamVector& theta, Point u) const override {
    check_smooth(u);
    const double x = u[0];
    Eigen::VectorXd g(1);
    g[0] = -(theta[0] * std::log(x) + 1.0) / x;
    return g;
  }

  double laplacian_u(const ParamVector& theta, Point u) const override {
    check_smooth(u);
    const double x = u[0];
    return (theta[0] * std::log(x) + 1.0 - theta[0]) / (x * x);
  }

  double score_matching_term(const ParamVector& theta, Point u, double weight,
                             Eigen::Ref<Eigen::VectorXd> acc) const override {
    check_smooth(u);
    const double x = u[0];
    const double l = std::log(x);
    const double t = theta[0];
    const double inv_x2 = 1.0 / (x * x);
    acc[0] += weight * ((l - 1.0) + (t * l + 1.0) * l) * inv_x2;
    return ((t * l + 1.0 - t) + 0.5 * (t * l + 1.0) * (t * l + 1.0)) * inv_x2;
  }

  void check_true_params(const ParamVector& theta) const override {
    check_params(theta);
    if (!(theta[0] > 0.0)) throw ParameterError("log-normal precision must be positive");
  }

  SampleMatrix sample(const ParamVector& theta_true, std::size_t n, Rng& rng) const override {
    check_true_params(theta_true);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(theta_true[0]));
    SampleMatrix out(n, 1);
    for (std::size_t i = 0; i < n; ++i) out(i, 0) = std::exp(normal(rng));
    return out;
  }

  ParamVector random_true_params(Rng& rng) const override {
    std::uniform_real_distribution<double> unif(0.5, 2.0);
    ParamVector theta(2);
    theta[0] = unif(rng);
    theta[1] = kInitialC;
    return theta;
  }

  std::vector<bool> positive_mask() const override { return {true, false}; }

  ParamVector initial_free_params(Rng&, double) const override {
    ParamVector free(2);
    free << 0.0, kInitialC;
    return free;
  }

 private:
  void check_smooth(Point u) const {
    check_point(u);
    if (!(u[0] > 0.0)) throw DomainError("log-normal derivatives are only defined for u > 0");
  }
};

// ---------------------------------------------------------------------------
// log φ(0) = log θ1, log φ(1) = log θ2.
class BernoulliModel final : public Model {
 public:
  using Model::Model;

  double log_phi(const ParamVector& theta, Point u) const override {
    return std::log(u[0] == 0.0 ? theta[0] : theta[1]);
  }

  void add_grad_theta(const ParamVector& theta, Point u, double weight,
                      Eigen::Ref<Eigen::VectorXd> acc) const override {
    if (u[0] == 0.0)
      acc[0] += weight / theta[0];
    else
      acc[1] += weight / theta[1];
  }

  void log_phi_rows(const ParamVector& theta, RowsView rows, std::span<double> out) const override {
    const double l0 = std::log(theta[0]);
    const double l1 = std::log(theta[1]);
    for (std::size_t r = 0; r < rows.count; ++r) out[r] = rows.data[r] == 0.0 ? l0 : l1;
  }

  void check_point(Point u) const override {
    Model::check_point(u);
    if (u[0] != 0.0 && u[0] != 1.0) throw DomainError("Bernoulli input must be 0 or 1");
  }

  void check_params(const ParamVector& theta) const override {
    Model::check_params(theta);
    if (!(theta[0] > 0.0 && theta[1] > 0.0)) {
      throw ParameterError("Bernoulli parameters must be positive");
    }
  }

  SampleMatrix sample(const ParamVector& theta_true, std::size_t n, Rng& rng) const override {
    check_true_params(theta_true);
    std::bernoulli_distribution coin(theta_true[1] / (theta_true[0] + theta_true[1]));
    SampleMatrix out(n, 1);
    for (std::size_t i = 0; i < n; ++i) out(i, 0) = coin(rng) ? 1.0 : 0.0;
    return out;
  }

  ParamVector random_true_params(Rng& rng) const override {
    std::uniform_real_distribution<double> unif(0.1, 0.9);
    ParamVector theta(2);
    theta[0] = unif(rng);
    theta[1] = 1.0 - theta[0];
    return theta;
  }

  std::vector<bool> positive_mask() const override { return {true, true}; }
};

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::GaussianPrecision: return "gaussian";
    case ModelKind::IcaLaplace: return "ica";
    case ModelKind::Ring: return "ring";
    case ModelKind::LogNormalExt: return "lognormal";
    case ModelKind::Bernoulli: return "bernoulli";
  }
  return "unknown";
}

ModelKind model_kind_from_string(std::string_view name) {
  for (auto kind : {ModelKind::GaussianPrecision, ModelKind::IcaLaplace, ModelKind::Ring,
                    ModelKind::LogNormalExt, ModelKind::Bernoulli}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("kind", "unknown model kind '" + std::string(name) + "'");
}

ModelSpec ModelSpec::defaults(ModelKind kind) {
  ModelSpec spec;
  spec.kind = kind;
  switch (kind) {
    case ModelKind::GaussianPrecision: spec.dim = 5; break;
    case ModelKind::IcaLaplace: spec.dim = 4; break;
    case ModelKind::Ring: spec.dim = 5; break;
    case ModelKind::LogNormalExt:
    case ModelKind::Bernoulli: spec.dim = 1; break;
  }
  return spec;
}

std::size_t ModelSpec::param_count() const {
  switch (kind) {
    case ModelKind::GaussianPrecision: return dim * (dim + 1) / 2;
    case ModelKind::IcaLaplace: return dim * dim;
    case ModelKind::Ring: return 1;
    case ModelKind::LogNormalExt: return 2;
    case ModelKind::Bernoulli: return 2;
  }
  return 0;
}

std::string ModelSpec::packing() const {
  switch (kind) {
    case ModelKind::GaussianPrecision: return "precision_upper_triangle_row_major";
    case ModelKind::IcaLaplace: return "demixing_rows_concatenated";
    case ModelKind::Ring: return "gamma_r";
    case ModelKind::LogNormalExt: return "theta,C";
    case ModelKind::Bernoulli: return "theta1,theta2";
  }
  return "";
}

void validate(const ModelSpec& spec) {
  if (spec.dim < 1) throw ParameterError("model dimension must be at least 1");
  if ((spec.kind == ModelKind::LogNormalExt || spec.kind == ModelKind::Bernoulli) && spec.dim != 1) {
    throw ParameterError(std::string(to_string(spec.kind)) + " model is one-dimensional");
  }
  if (spec.kind == ModelKind::Ring && !(spec.ring_mean > 0.0)) {
    throw ParameterError("ring mean must be positive");
  }
}

std::size_t upper_triangle_index(std::size_t dim, std::size_t row, std::size_t col) {
  // Entries before row `row`: Σ_{k<row} (dim - k).
  return row * dim - row * (row - 1) / 2 + (col - row);
}

Eigen::MatrixXd unpack_precision(std::size_t dim, const ParamVector& theta) {
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd lambda(d, d);
  Eigen::Index p = 0;
  for (Eigen::Index k = 0; k < d; ++k) {
    for (Eigen::Index l = k; l < d; ++l) {
      lambda(k, l) = theta[p];
      lambda(l, k) = theta[p];
      ++p;
    }
  }
  return lambda;
}

ParamVector pack_precision(const Eigen::MatrixXd& lambda) {
  const Eigen::Index d = lambda.rows();
  ParamVector theta(d * (d + 1) / 2);
  Eigen::Index p = 0;
  for (Eigen::Index k = 0; k < d; ++k)
    for (Eigen::Index l = k; l < d; ++l) theta[p++] = 0.5 * (lambda(k, l) + lambda(l, k));
  return theta;
}

Eigen::MatrixXd unpack_demixing(std::size_t dim, const ParamVector& theta) {
  const auto d = static_cast<Eigen::Index>(dim);
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      theta.data(), d, d);
}

ParamVector pack_demixing(const Eigen::MatrixXd& b) {
  ParamVector theta(b.size());
  Eigen::Index p = 0;
  for (Eigen::Index r = 0; r < b.rows(); ++r)
    for (Eigen::Index c = 0; c < b.cols(); ++c) theta[p++] = b(r, c);
  return theta;
}

// ---------------------------------------------------------------------------

void Model::log_phi_rows(const ParamVector& theta, RowsView rows, std::span<double> out) const {
  for (std::size_t r = 0; r < rows.count; ++r) out[r] = log_phi(theta, rows.row(r));
}

double Model::linear_features(Point, std::span<double>) const {
  throw UnsupportedError(std::string(to_string(spec_.kind)) + " model is not linear in its parameters");
}

void Model::add_grad_theta_rows(const ParamVector& theta, RowsView rows,
                                std::span<const double> weights,
                                Eigen::Ref<Eigen::VectorXd> acc) const {
  for (std::size_t r = 0; r < rows.count; ++r) {
    if (weights[r] != 0.0) add_grad_theta(theta, rows.row(r), weights[r], acc);
  }
}

Eigen::VectorXd Model::grad_u(const ParamVector&, Point) const {
  throw UnsupportedError(std::string(to_string(spec_.kind)) +
                         " model has no input gradient (not smooth)");
}

double Model::laplacian_u(const ParamVector&, Point) const {
  throw UnsupportedError(std::string(to_string(spec_.kind)) +
                         " model has no input Laplacian (not smooth)");
}

double Model::score_matching_term(const ParamVector&, Point, double, Eigen::Ref<Eigen::VectorXd>) const {
  throw UnsupportedError("score matching is unsupported for the " +
                         std::string(to_string(spec_.kind)) + " model");
}

void Model::check_point(Point u) const {
  if (u.size() != spec_.dim) {
    throw DomainError("input point has dimension " + std::to_string(u.size()) + ", expected " +
                      std::to_string(spec_.dim));
  }
  require_finite(u);
}

void Model::check_params(const ParamVector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != param_count()) {
    throw ParameterError("parameter vector has length " + std::to_string(theta.size()) +
                         ", expected " + std::to_string(param_count()));
  }
  if (!theta.allFinite()) throw ParameterError("parameter vector has non-finite entries");
}

ParamVector Model::to_free(const ParamVector& theta) const {
  const auto mask = positive_mask();
  ParamVector free = theta;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    if (!(theta[static_cast<Eigen::Index>(i)] > 0.0)) {
      throw ParameterError("log-parametrised entry must be positive");
    }
    free[static_cast<Eigen::Index>(i)] = std::log(theta[static_cast<Eigen::Index>(i)]);
  }
  return free;
}

ParamVector Model::from_free(const ParamVector& free) const {
  const auto mask = positive_mask();
  ParamVector theta = free;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) theta[static_cast<Eigen::Index>(i)] = std::exp(free[static_cast<Eigen::Index>(i)]);
  }
  return theta;
}

Eigen::VectorXd Model::free_gradient(const ParamVector& free, const Eigen::VectorXd& grad_theta) const {
  const auto mask = positive_mask();
  Eigen::VectorXd g = grad_theta;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (mask[i]) g[k] *= std::exp(free[k]);
  }
  return g;
}

ParamVector Model::initial_free_params(Rng& rng, double init_scale) const {
  const auto mask = positive_mask();
  std::normal_distribution<double> normal;
  ParamVector free(static_cast<Eigen::Index>(param_count()));
  for (std::size_t i = 0; i < mask.size(); ++i) {
    free[static_cast<Eigen::Index>(i)] = mask[i] ? 0.0 : init_scale * normal(rng);
  }
  return free;
}

std::unique_ptr<Model> make_model(const ModelSpec& spec) {
  validate(spec);
  switch (spec.kind) {
    case ModelKind::GaussianPrecision: return std::make_unique<GaussianModel>(spec);
    case ModelKind::IcaLaplace: return std::make_unique<IcaModel>(spec);
    case ModelKind::Ring: return std::make_unique<RingModel>(spec);
    case ModelKind::LogNormalExt: return std::make_unique<LogNormalExtModel>(spec);
    case ModelKind::Bernoulli: return std::make_unique<BernoulliModel>(spec);
  }
  throw ParameterError("unknown model kind");
}

double log_phi(const ModelSpec& spec, const ParamVector& theta, Point u) {
  const auto model = make_model(spec);
  model->check_params(theta);
  model->check_point(u);
  return model->log_phi(theta, u);
}

ParamVector grad_theta_log_phi(const ModelSpec& spec, const ParamVector& theta, Point u) {
  const auto model = make_model(spec);
  model->check_params(theta);
  model->check_point(u);
  ParamVector g = ParamVector::Zero(static_cast<Eigen::Index>(model->param_count()));
  model->add_grad_theta(theta, u, 1.0, g);
  return g;
}

Eigen::VectorXd grad_u_log_phi(const ModelSpec& spec, const ParamVector& theta, Point u) {
  const auto model = make_model(spec);
  model->check_params(theta);
  return model->grad_u(theta, u);
}

double laplacian_u_log_phi(const ModelSpec& spec, const ParamVector& theta, Point u) {
  const auto model = make_model(spec);
  model->check_params(theta);
  return model->laplacian_u(theta, u);
}

SampleMatrix sample_data(const ModelSpec& spec, const ParamVector& theta_true, std::size_t n,
                         std::uint64_t rng_seed) {
  const auto model = make_model(spec);
  Rng rng(rng_seed);
  SampleMatrix x = model->sample(theta_true, n, rng);
  if (n > 0) x.set_standardisation(x.column_moments());
  return x;
}

ParamVector generate_true_params(const ModelSpec& spec, std::uint64_t rng_seed) {
  const auto model = make_model(spec);
  Rng rng(rng_seed);
  return model->random_true_params(rng);
}

// ---------------------------------------------------------------------------

SampleMatrix::SampleMatrix(std::size_t n, std::size_t dim, std::vector<double> values)
    : n_(n), dim_(dim), values_(std::move(values)) {
  if (values_.size() != n * dim) {
    throw std::invalid_argument("sample matrix storage does not match n x dim");
  }
}

StandardisationRecord SampleMatrix::column_moments() const {
  StandardisationRecord rec;
  rec.mean.assign(dim_, 0.0);
  rec.std.assign(dim_, 0.0);
  if (n_ == 0) return rec;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t d = 0; d < dim_; ++d) rec.mean[d] += values_[i * dim_ + d];
  for (auto& m : rec.mean) m /= static_cast<double>(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t d = 0; d < dim_; ++d) {
      const double c = values_[i * dim_ + d] - rec.mean[d];
      rec.std[d] += c * c;
    }
  }
  for (auto& s : rec.std) s = std::sqrt(s / static_cast<double>(n_));
  return rec;
}

}  // namespace cnce
