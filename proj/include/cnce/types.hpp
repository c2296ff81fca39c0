#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cnce {

/// Flat model parameters; the packing is defined by the owning ModelSpec.
using ParamVector = Eigen::VectorXd;

/// Single point in the model's input space.
using Point = std::span<const double>;

using Rng = std::mt19937_64;

/// Input outside the model's domain (non-finite coordinates, u not in {0,1}, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Parameters that violate a model invariant (non-PD precision, singular demixing, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation not defined for this model or kernel kind.
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed configuration; `key()` names the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Contiguous read-only window onto `count` rows of a row-major matrix.
struct RowsView {
  const double* data = nullptr;
  std::size_t count = 0;
  std::size_t dim = 0;

  Point row(std::size_t i) const { return {data + i * dim, dim}; }
};

/// Per-dimension location/scale observed on a sample. Recorded, never applied.
struct StandardisationRecord {
  std::vector<double> mean;
  std::vector<double> std;
};

/// N observations in R^D, stored row-major.
class SampleMatrix {
 public:
  SampleMatrix() = default;
  SampleMatrix(std::size_t n, std::size_t dim) : n_(n), dim_(dim), values_(n * dim, 0.0) {}
  SampleMatrix(std::size_t n, std::size_t dim, std::vector<double> values);

  std::size_t n() const { return n_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return n_ == 0; }

  Point row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  std::span<double> row(std::size_t i) { return {values_.data() + i * dim_, dim_}; }
  double operator()(std::size_t i, std::size_t d) const { return values_[i * dim_ + d]; }
  double& operator()(std::size_t i, std::size_t d) { return values_[i * dim_ + d]; }

  RowsView rows() const { return {values_.data(), n_, dim_}; }
  RowsView rows(std::size_t begin, std::size_t count) const {
    return {values_.data() + begin * dim_, count, dim_};
  }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Column means and (population) standard deviations.
  StandardisationRecord column_moments() const;

  const std::optional<StandardisationRecord>& standardisation() const { return standardisation_; }
  void set_standardisation(StandardisationRecord record) { standardisation_ = std::move(record); }

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> as_eigen()
      const {
    return {values_.data(), static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(dim_)};
  }

 private:
  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
  std::optional<StandardisationRecord> standardisation_;
};

/// Value and gradient of a scalar objective. `n_terms` counts the summands.
struct LossReport {
  double value = 0.0;
  Eigen::VectorXd gradient;
  std::size_t n_terms = 0;
};

}  // namespace cnce
