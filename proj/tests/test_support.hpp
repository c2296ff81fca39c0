#pragma once

#include <cmath>
#include <functional>
#include <numbers>

#include <Eigen/Core>

#include "cnce/noise_kernels.hpp"
#include "cnce/types.hpp"

namespace cnce::testing {

inline const double kTwoLog2 = 2.0 * std::numbers::ln2;

/// Central differences with step h on every coordinate.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& at, double h = 1e-6) {
  Eigen::VectorXd g(at.size());
  for (Eigen::Index k = 0; k < at.size(); ++k) {
    Eigen::VectorXd up = at;
    Eigen::VectorXd down = at;
    up[k] += h;
    down[k] -= h;
    g[k] = (f(up) - f(down)) / (2.0 * h);
  }
  return g;
}

/// ‖a - b‖ / ‖b‖, with ‖b‖ floored so that an all-zero reference does not divide by zero.
inline double rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-12);
}

inline Eigen::VectorXd normal_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> z(0.0, scale);
  Eigen::VectorXd v(n);
  for (auto& e : v) e = z(rng);
  return v;
}

/// Asymmetric test double: pc(y|x) = N(y; x + δ, ε² I).
class ShiftedGaussianKernel final : public ConditionalKernel {
 public:
  ShiftedGaussianKernel(double delta, double epsilon) : delta_(delta), epsilon_(epsilon) {}

  std::string name() const override { return "shifted_gaussian"; }
  bool symmetric() const override { return false; }

  void sample(Point x, Rng& rng, std::span<double> y) const override {
    std::normal_distribution<double> z;
    for (std::size_t d = 0; d < x.size(); ++d) y[d] = x[d] + delta_ + epsilon_ * z(rng);
  }

  // (‖u1 - u2 - δ‖² - ‖u2 - u1 - δ‖²) / 2ε², written so that swapping the arguments negates it exactly.
  double log_ratio_asymmetric(Point u1, Point u2) const override {
    double acc = 0.0;
    for (std::size_t d = 0; d < u1.size(); ++d) acc += u2[d] - u1[d];
    return 2.0 * delta_ * acc / (epsilon_ * epsilon_);
  }

 private:
  double delta_;
  double epsilon_;
};

}  // namespace cnce::testing
