#include <doctest.h>

#include <cmath>
#include <limits>

#include "cnce/estimators.hpp"
#include "cnce/optimize.hpp"
#include "cnce/types.hpp"
#include "test_support.hpp"

using namespace cnce;

namespace {

Objective bowl(const Eigen::VectorXd& a) {
  return [a](const Eigen::VectorXd& t) {
    LossReport r;
    r.value = 0.5 * (t - a).squaredNorm();
    r.gradient = t - a;
    r.n_terms = 1;
    return r;
  };
}

ParamVector vec(std::initializer_list<double> values) {
  ParamVector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

}  // namespace

TEST_SUITE("optimize") {

TEST_CASE("quadratic bowl") {
  Rng rng(1);
  for (auto rule : {StepRule::AdaptiveMoment, StepRule::BacktrackingGd}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::VectorXd a = cnce::testing::normal_vector(6, rng, 3.0);
      OptimizerConfig cfg;
      cfg.step_rule = rule;
      const EstimationRun run = minimize(bowl(a), Eigen::VectorXd::Zero(6), cfg, 0);
      CHECK(run.converged);
      CHECK((run.theta - a).norm() < 1e-6);
      CHECK(run.failure.empty());
      CHECK(run.loss_trace.size() == static_cast<std::size_t>(run.iters) + 1);
      CHECK(run.evaluations >= run.iters + 1);
    }
  }
}

TEST_CASE("backtracking keeps accepted losses non-increasing") {
  // Rosenbrock: curved valley, many rejected trial steps.
  const Objective rosen = [](const Eigen::VectorXd& t) {
    LossReport r;
    const double a = 1.0 - t[0];
    const double b = t[1] - t[0] * t[0];
    r.value = a * a + 100.0 * b * b;
    r.gradient = vec({-2.0 * a - 400.0 * t[0] * b, 200.0 * b});
    return r;
  };
  OptimizerConfig cfg;
  cfg.step_rule = StepRule::BacktrackingGd;
  cfg.max_iters = 5000;
  const EstimationRun run = minimize(rosen, vec({-1.2, 1.0}), cfg, 0);
  for (std::size_t i = 1; i < run.loss_trace.size(); ++i) CHECK(run.loss_trace[i] <= run.loss_trace[i - 1]);
  CHECK(run.final_loss() < 1e-6);
}

TEST_CASE("minimize is deterministic and restarts keep the best run") {
  // Double well with minima at ±1 of different depth.
  const Objective well = [](const Eigen::VectorXd& t) {
    LossReport r;
    const double x = t[0];
    r.value = (x * x - 1.0) * (x * x - 1.0) + 0.3 * x;
    r.gradient = vec({4.0 * x * (x * x - 1.0) + 0.3});
    return r;
  };
  OptimizerConfig cfg;
  cfg.restarts = 8;
  cfg.init_scale = 2.0;
  const EstimationRun a = minimize(well, vec({0.9}), cfg, 42);
  const EstimationRun b = minimize(well, vec({0.9}), cfg, 42);
  CHECK(a.theta == b.theta);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.theta[0] < 0.0);

  cfg.restarts = 1;
  const EstimationRun single = minimize(well, vec({0.9}), cfg, 42);
  CHECK(single.theta[0] > 0.0);
}

TEST_CASE("non-finite objective is reported, not thrown") {
  const Objective bad = [](const Eigen::VectorXd& t) {
    LossReport r;
    r.value = std::numeric_limits<double>::quiet_NaN();
    r.gradient = t;
    return r;
  };
  const EstimationRun run = minimize(bad, vec({1.0}), OptimizerConfig{}, 0);
  CHECK_FALSE(run.converged);
  CHECK_FALSE(run.failure.empty());
}

TEST_CASE("config validation") {
  OptimizerConfig cfg;
  cfg.max_iters = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = {};
  cfg.grad_tol = 0.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  CHECK_NOTHROW(validate(OptimizerConfig{}));

  EpsilonSchedule s;
  s.growth = 1.0;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = {};
  s.delta = 2.0;
  CHECK_THROWS_AS(validate(s), ConfigError);
  s = {};
  s.epsilon_0 = 0.0;
  CHECK_THROWS_AS(validate(s), ConfigError);

  CHECK(step_rule_from_string(to_string(StepRule::BacktrackingGd)) == StepRule::BacktrackingGd);
}

TEST_CASE("1-D Gaussian CNCE fit agrees with a dense grid search of the same loss") {
  ModelSpec spec = ModelSpec::defaults(ModelKind::GaussianPrecision);
  spec.dim = 1;
  const auto model = make_model(spec);
  const SampleMatrix x = sample_data(spec, vec({1.0}), 10000, 3);
  const auto kernel = make_kernel(KernelConfig{}, x);
  const NoisePairing pairing = sample_conditional(*kernel, x, 10, 4);
  const CnceObjective objective(*model, x, pairing);
  const EstimationRun run = minimize([&](const Eigen::VectorXd& t) { return objective(t); }, vec({0.3}),
                                     OptimizerConfig{}, 5);
  CHECK(run.converged);

  double best = std::numeric_limits<double>::infinity();
  double arg = 0.0;
  for (double lam = 0.5; lam <= 1.5; lam += 1e-4) {
    const double v = objective(vec({lam})).value;
    if (v < best) {
      best = v;
      arg = lam;
    }
  }
  CHECK(std::abs(run.theta[0] - arg) < 2e-4);
  CHECK(std::abs(run.theta[0] - 1.0) < 0.1);
}

TEST_CASE("Bernoulli population loss is minimised at the truth from random starts") {
  const ParamVector truth = vec({0.3, 0.7});
  const Objective in_logs = [&](const Eigen::VectorXd& z) {
    const ParamVector theta = z.array().exp().matrix();
    LossReport r = bernoulli_population_loss_report(theta, truth, 0.2);
    r.gradient = r.gradient.cwiseProduct(theta);
    return r;
  };
  Rng rng(6);
  for (int start = 0; start < 5; ++start) {
    const EstimationRun run = minimize(in_logs, cnce::testing::normal_vector(2, rng), OptimizerConfig{}, 0);
    const ParamVector theta = run.theta.array().exp().matrix();
    CHECK((theta / theta.sum() - truth).norm() < 1e-6);
  }
}

TEST_CASE("epsilon ladder") {
  const ModelSpec spec = ModelSpec::defaults(ModelKind::GaussianPrecision);
  const auto model = make_model(spec);
  const ParamVector eye = pack_precision(Eigen::MatrixXd::Identity(5, 5));
  const SampleMatrix x = sample_data(spec, eye, 2000, 7);

  // Λ = 0 makes log φ constant: the loss is 2 log 2 on every rung.
  const EpsilonChoice flat = adapt_epsilon(*model, ParamVector::Zero(15), x, KernelConfig{}, EpsilonSchedule{}, 5, 8);
  CHECK(flat.capped);
  CHECK(flat.epsilon == EpsilonSchedule{}.epsilon_max);

  const EpsilonChoice c = adapt_epsilon(*model, eye, x, KernelConfig{}, EpsilonSchedule{}, 5, 8);
  CHECK_FALSE(c.capped);
  CHECK(std::isfinite(c.epsilon));
  CHECK(c.gaps.back() >= EpsilonSchedule{}.delta);
  bool on_ladder = false;
  for (double e : c.ladder) on_ladder = on_ladder || e == c.epsilon;
  CHECK(on_ladder);
  for (std::size_t k = 0; k + 1 < c.gaps.size(); ++k) CHECK(c.gaps[k] < EpsilonSchedule{}.delta);
  CHECK(adapt_epsilon(*model, eye, x, KernelConfig{}, EpsilonSchedule{}, 5, 8).epsilon == c.epsilon);

  EpsilonSchedule tiny;
  tiny.delta = 1e-12;
  CHECK(adapt_epsilon(*model, eye, x, KernelConfig{}, tiny, 5, 8).epsilon == tiny.epsilon_0);

  // Flip probabilities never exceed one.
  const ModelSpec bspec = ModelSpec::defaults(ModelKind::Bernoulli);
  const auto bern = make_model(bspec);
  const SampleMatrix bx = sample_data(bspec, vec({0.5, 0.5}), 500, 9);
  const EpsilonChoice bc = adapt_epsilon(*bern, vec({0.5, 0.5}), bx,
                                         KernelConfig{KernelConfig::Kind::BernoulliFlip, 0.2, false},
                                         EpsilonSchedule{}, 5, 10);
  CHECK(bc.capped);
  CHECK(bc.epsilon == 1.0);
}

}  // TEST_SUITE
