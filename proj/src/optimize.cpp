#include "cnce/optimize.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include "cnce/estimators.hpp"

namespace cnce {

namespace {

bool finite_report(const LossReport& r) { return std::isfinite(r.value) && r.gradient.allFinite(); }

double inf_norm(const Eigen::VectorXd& g) { return g.size() == 0 ? 0.0 : g.cwiseAbs().maxCoeff(); }

class Trajectory {
 public:
  Trajectory(const Objective& objective, EstimationRun& run) : objective_(objective), run_(run) {}

  bool start(const Eigen::VectorXd& theta0) {
    run_.theta0 = theta0;
    run_.theta = theta0;
    current_ = evaluate(theta0);
    if (!finite_report(current_)) {
      run_.failure = "non-finite loss or gradient at the initial point";
      return false;
    }
    record();
    return true;
  }

  const LossReport& current() const { return current_; }

  void accept(Eigen::VectorXd theta, LossReport report) {
    run_.theta = std::move(theta);
    current_ = std::move(report);
    ++run_.iters;
    record();
  }

  void fail(const std::string& what) { run_.failure = what; }

  // Bias-corrected adaptive-moment steps until ‖∇‖∞ <= stop_tol.
  void adaptive(const OptimizerConfig& cfg, int budget, double stop_tol) {
    const auto p = run_.theta.size();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
    double b1t = 1.0;
    double b2t = 1.0;
    for (int t = 0; t < budget; ++t) {
      const Eigen::VectorXd& g = current_.gradient;
      if (inf_norm(g) <= stop_tol) return;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      b1t *= cfg.beta1;
      b2t *= cfg.beta2;
      const Eigen::VectorXd m_hat = m / (1.0 - b1t);
      const Eigen::VectorXd v_hat = v / (1.0 - b2t);
      Eigen::VectorXd next =
          run_.theta - cfg.learning_rate * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + 1e-8).matrix());
      LossReport report = evaluate(next);
      if (!finite_report(report)) {
        fail("non-finite loss or gradient during the adaptive phase");
        return;
      }
      accept(std::move(next), std::move(report));
    }
  }

  // Gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.
  // A step is accepted on sufficient decrease, or, once loss differences are at
  // rounding level, on a non-increasing loss with a strictly smaller gradient.
  //
  // Stops early once kStallWindow steps in a row improve neither the loss (beyond
  // rounding) nor the smallest gradient norm seen, as happens on kinked losses.
  void polish(int budget, double grad_tol) {
    constexpr int kStallWindow = 25;
    Eigen::VectorXd prev_theta;
    Eigen::VectorXd prev_grad;
    double step = 0.0;
    double best_g = std::numeric_limits<double>::infinity();
    double window_f = current_.value;
    int stalled = 0;
    for (int k = 0; k < budget; ++k) {
      const Eigen::VectorXd& g = current_.gradient;
      const double g_inf = inf_norm(g);
      if (g_inf <= grad_tol) return;
      if (g_inf < best_g) {
        best_g = g_inf;
        window_f = current_.value;
        stalled = 0;
      } else if (window_f - current_.value > 1e-12 * (1.0 + std::abs(window_f))) {
        window_f = current_.value;
        stalled = 0;
      } else if (++stalled >= kStallWindow) {
        return;
      }
      const double g_sq = g.squaredNorm();
      if (prev_theta.size() > 0) {
        const Eigen::VectorXd s = run_.theta - prev_theta;
        const Eigen::VectorXd y = g - prev_grad;
        const double sy = s.dot(y);
        step = sy > 0.0 ? s.squaredNorm() / sy : 2.0 * step;
      } else {
        step = 1.0 / std::max(1.0, std::sqrt(g_sq));
      }
      step = std::clamp(step, 1e-12, 1e12);

      bool accepted = false;
      for (int halvings = 0; halvings < 60; ++halvings) {
        Eigen::VectorXd trial = run_.theta - step * g;
        LossReport report = evaluate(trial);
        if (finite_report(report)) {
          const double f0 = current_.value;
          const bool armijo = report.value <= f0 - 1e-4 * step * g_sq;
          const bool flat = report.value <= f0 && inf_norm(report.gradient) < g_inf;
          if (armijo || flat) {
            prev_theta = run_.theta;
            prev_grad = g;
            accept(std::move(trial), std::move(report));
            accepted = true;
            break;
          }
        }
        step *= 0.5;
      }
      if (!accepted) return;
    }
  }

 private:
  LossReport evaluate(const Eigen::VectorXd& theta) {
    ++run_.evaluations;
    return objective_(theta);
  }

  void record() {
    run_.loss_trace.push_back(current_.value);
    run_.grad_norm_trace.push_back(inf_norm(current_.gradient));
  }

  const Objective& objective_;
  EstimationRun& run_;
  LossReport current_;
};

EstimationRun minimize_once(const Objective& objective, const Eigen::VectorXd& theta0,
                            const OptimizerConfig& cfg) {
  EstimationRun run;
  Trajectory traj(objective, run);
  if (!traj.start(theta0)) return run;
  if (cfg.step_rule == StepRule::AdaptiveMoment) {
    traj.adaptive(cfg, cfg.max_iters, std::max(cfg.handoff_tol, cfg.grad_tol));
    if (run.failure.empty()) traj.polish(cfg.polish_iters, cfg.grad_tol);
  } else {
    traj.polish(cfg.max_iters, cfg.grad_tol);
  }
  run.converged = run.failure.empty() && inf_norm(traj.current().gradient) <= cfg.grad_tol;
  return run;
}

}  // namespace

std::string_view to_string(StepRule rule) {
  return rule == StepRule::AdaptiveMoment ? "adaptive_moment" : "backtracking_gd";
}

StepRule step_rule_from_string(std::string_view name) {
  if (name == "adaptive_moment") return StepRule::AdaptiveMoment;
  if (name == "backtracking_gd") return StepRule::BacktrackingGd;
  throw ConfigError("optimizer.step_rule", "unknown step rule '" + std::string(name) + "'");
}

void validate(const OptimizerConfig& c) {
  if (c.max_iters < 1) throw ConfigError("optimizer.max_iters", "max_iters must be >= 1");
  if (!(c.grad_tol > 0.0)) throw ConfigError("optimizer.grad_tol", "grad_tol must be > 0");
  if (c.restarts < 1) throw ConfigError("optimizer.restarts", "restarts must be >= 1");
  if (!(c.learning_rate > 0.0)) {
    throw ConfigError("optimizer.learning_rate", "learning_rate must be > 0");
  }
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) throw ConfigError("optimizer.beta1", "beta1 must be in [0, 1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) throw ConfigError("optimizer.beta2", "beta2 must be in [0, 1)");
  if (c.polish_iters < 0) throw ConfigError("optimizer.polish_iters", "polish_iters must be >= 0");
  if (!(c.init_scale >= 0.0)) throw ConfigError("optimizer.init_scale", "init_scale must be >= 0");
}

void validate(const EpsilonSchedule& s) {
  if (!(s.epsilon_0 > 0.0)) throw ConfigError("epsilon.epsilon_0", "epsilon_0 must be > 0");
  if (!(s.growth > 1.0)) throw ConfigError("epsilon.growth", "growth must be > 1");
  if (!(s.delta > 0.0 && s.delta < 2.0 * std::numbers::ln2)) {
    throw ConfigError("epsilon.delta", "delta must lie in (0, 2 log 2)");
  }
  if (!(s.epsilon_max >= s.epsilon_0)) {
    throw ConfigError("epsilon.epsilon_max", "epsilon_max must be >= epsilon_0");
  }
}

EstimationRun minimize(const Objective& objective, const Eigen::VectorXd& theta0,
                       const OptimizerConfig& config, std::uint64_t rng_seed) {
  validate(config);
  const auto t0 = std::chrono::steady_clock::now();
  EstimationRun best = minimize_once(objective, theta0, config);
  if (config.restarts > 1) {
    Rng rng(rng_seed);
    std::normal_distribution<double> normal;
    for (int r = 1; r < config.restarts; ++r) {
      Eigen::VectorXd start = theta0;
      for (auto& v : start) v += config.init_scale * normal(rng);
      EstimationRun run = minimize_once(objective, start, config);
      const bool better = !run.loss_trace.empty() &&
                          (best.loss_trace.empty() || run.final_loss() < best.final_loss());
      if (better) best = std::move(run);
    }
  }
  best.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return best;
}

EpsilonChoice adapt_epsilon(const Model& model, const ParamVector& theta0, const SampleMatrix& x,
                            const KernelConfig& kernel_template, const EpsilonSchedule& schedule,
                            std::size_t kappa, std::uint64_t rng_seed) {
  validate(schedule);
  double cap = schedule.epsilon_max;
  if (kernel_template.kind == KernelConfig::Kind::BernoulliFlip) cap = std::min(cap, 1.0);

  EpsilonChoice choice;
  for (double eps = schedule.epsilon_0; eps < cap; eps *= schedule.growth) choice.ladder.push_back(eps);
  choice.ladder.push_back(cap);

  const double base = 2.0 * std::numbers::ln2;
  for (double eps : choice.ladder) {
    KernelConfig cfg = kernel_template;
    cfg.epsilon = eps;
    const auto kernel = make_kernel(cfg, x);
    const NoisePairing pairing = sample_conditional(*kernel, x, kappa, rng_seed);
    const double gap = std::abs(cnce_loss(model, theta0, x, pairing).value - base);
    choice.gaps.push_back(gap);
    if (gap >= schedule.delta) {
      choice.epsilon = eps;
      return choice;
    }
  }
  choice.epsilon = cap;
  choice.capped = true;
  return choice;
}

}  // namespace cnce
