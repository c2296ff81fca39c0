#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cnce/types.hpp"

namespace cnce {

enum class ModelKind { GaussianPrecision, IcaLaplace, Ring, LogNormalExt, Bernoulli };

/// Canonical lower-case names: gaussian, ica, ring, lognormal, bernoulli.
std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

struct ModelSpec {
  ModelKind kind = ModelKind::GaussianPrecision;
  std::size_t dim = 5;
  /// Known radial mean of the ring model. Not part of the estimated parameters.
  double ring_mean = 4.0;
  /// Ring data generation. GaussianRadius draws the radius from N(μ, 1/γ) (resampling
  /// r <= 0); Exact samples the density ∝ φ, whose radial law carries an extra r^{D-1}.
  enum class RingSampler { GaussianRadius, Exact };
  RingSampler ring_sampler = RingSampler::GaussianRadius;

  /// Default dimension per kind: Gaussian 5, ICA 4, Ring 5, log-normal 1, Bernoulli 1.
  static ModelSpec defaults(ModelKind kind);

  std::size_t param_count() const;

  /// Human-readable description of the ParamVector layout.
  std::string packing() const;
};

/// Throws ParameterError when `dim` is inconsistent with the kind.
void validate(const ModelSpec& spec);

/// Index of Λ(row, col), row <= col, in the upper-triangle row-major packing.
std::size_t upper_triangle_index(std::size_t dim, std::size_t row, std::size_t col);

Eigen::MatrixXd unpack_precision(std::size_t dim, const ParamVector& theta);
ParamVector pack_precision(const Eigen::MatrixXd& lambda);

/// Demixing matrix B; row j is b_j.
Eigen::MatrixXd unpack_demixing(std::size_t dim, const ParamVector& theta);
ParamVector pack_demixing(const Eigen::MatrixXd& b);

/// An unnormalised model log φ(u; θ) together with its derivatives and exact sampler.
///
/// The row-batch methods skip per-point validation; callers validate their
/// samples once with `check_point` before entering a hot loop.
class Model {
 public:
  explicit Model(ModelSpec spec) : spec_(spec) {}
  virtual ~Model() = default;

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelSpec& spec() const { return spec_; }
  std::size_t param_count() const { return spec_.param_count(); }

  virtual double log_phi(const ParamVector& theta, Point u) const = 0;

  /// acc += weight * ∂θ log φ(u; θ)
  virtual void add_grad_theta(const ParamVector& theta, Point u, double weight,
                              Eigen::Ref<Eigen::VectorXd> acc) const = 0;

  virtual void log_phi_rows(const ParamVector& theta, RowsView rows, std::span<double> out) const;

  /// acc += Σ_r weights[r] * ∂θ log φ(row_r; θ)
  virtual void add_grad_theta_rows(const ParamVector& theta, RowsView rows,
                                   std::span<const double> weights,
                                   Eigen::Ref<Eigen::VectorXd> acc) const;

  /// True when log φ(u; θ) = a(u) + Σ_k F_k(u) θ_k exactly, so that objectives over a
  /// fixed sample can cache F and a per row.
  virtual bool linear_in_theta() const { return false; }
  /// Writes F(u) (param_count entries) and returns a(u). Unchecked.
  virtual double linear_features(Point u, std::span<double> features) const;

  /// True when ∇_u and the Laplacian exist (on the model's smooth domain).
  virtual bool has_input_derivatives() const { return false; }
  virtual Eigen::VectorXd grad_u(const ParamVector& theta, Point u) const;
  virtual double laplacian_u(const ParamVector& theta, Point u) const;

  /// Score-matching integrand Σ_i ∂²f/∂u_i² + ½‖∇_u f‖². Adds weight * ∂θ of it to `acc`.
  virtual double score_matching_term(const ParamVector& theta, Point u, double weight,
                                     Eigen::Ref<Eigen::VectorXd> acc) const;

  /// Throws DomainError if u is outside the model's input space.
  virtual void check_point(Point u) const;
  /// Throws ParameterError on a wrongly sized or non-finite vector (and θ <= 0 for Bernoulli).
  virtual void check_params(const ParamVector& theta) const;
  /// Throws ParameterError unless θ defines a proper distribution to sample from.
  virtual void check_true_params(const ParamVector& theta) const { check_params(theta); }

  virtual SampleMatrix sample(const ParamVector& theta_true, std::size_t n, Rng& rng) const = 0;
  virtual ParamVector random_true_params(Rng& rng) const = 0;

  /// Entries optimised on the log scale (γr, θ1, θ2, log-normal θ).
  virtual std::vector<bool> positive_mask() const {
    return std::vector<bool>(param_count(), false);
  }
  ParamVector to_free(const ParamVector& theta) const;
  ParamVector from_free(const ParamVector& free) const;
  /// Chain rule: gradient in free coordinates from a gradient in θ.
  Eigen::VectorXd free_gradient(const ParamVector& free, const Eigen::VectorXd& grad_theta) const;

  /// Optimiser start in free coordinates: N(0, init_scale²) entries, log-parameters at 0.
  virtual ParamVector initial_free_params(Rng& rng, double init_scale) const;

 private:
  ModelSpec spec_;
};

std::unique_ptr<Model> make_model(const ModelSpec& spec);

double log_phi(const ModelSpec& spec, const ParamVector& theta, Point u);
ParamVector grad_theta_log_phi(const ModelSpec& spec, const ParamVector& theta, Point u);
Eigen::VectorXd grad_u_log_phi(const ModelSpec& spec, const ParamVector& theta, Point u);
double laplacian_u_log_phi(const ModelSpec& spec, const ParamVector& theta, Point u);
SampleMatrix sample_data(const ModelSpec& spec, const ParamVector& theta_true, std::size_t n,
                         std::uint64_t rng_seed);
ParamVector generate_true_params(const ModelSpec& spec, std::uint64_t rng_seed);

}  // namespace cnce
