#include "cnce/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <thread>

#include "cnce/estimators.hpp"
#include "cnce/stable_hash.hpp"

namespace cnce {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Cnce: return "cnce";
    case Method::Nce: return "nce";
    case Method::Mle: return "mle";
    case Method::ScoreMatching: return "score_matching";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  for (auto m : {Method::Cnce, Method::Nce, Method::Mle, Method::ScoreMatching}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("method", "unknown method '" + std::string(name) + "'");
}

bool ignores_kappa(Method method) { return method == Method::Mle || method == Method::ScoreMatching; }

void check_method_supported(Method method, ModelKind kind) {
  const std::string model(to_string(kind));
  if (method == Method::Mle && kind == ModelKind::Ring) {
    throw ConfigError("method", "mle unsupported for ring");
  }
  if (method == Method::Nce && kind == ModelKind::Bernoulli) {
    throw ConfigError("method", "nce unsupported for bernoulli (Gaussian marginal noise)");
  }
  if (method == Method::ScoreMatching && (kind == ModelKind::IcaLaplace || kind == ModelKind::Bernoulli)) {
    throw ConfigError("method", "score_matching unsupported for " + model);
  }
}

KernelConfig default_kernel(ModelKind kind) {
  KernelConfig k;
  if (kind == ModelKind::Bernoulli) {
    k.kind = KernelConfig::Kind::BernoulliFlip;
    k.epsilon = 0.2;
    k.per_dim = false;
  }
  return k;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t sub_seed(std::uint64_t seed, std::string_view tag) {
  return StableHash().add(seed).add(tag).finish();
}

LossReport non_finite_report(Eigen::Index size) {
  LossReport r;
  r.value = std::numeric_limits<double>::infinity();
  r.gradient = Eigen::VectorXd::Zero(size);
  return r;
}

// Wraps a θ-space loss as an objective over the model's free coordinates.
template <typename Loss>
Objective in_free_coordinates(const Model& model, Loss loss) {
  return [&model, loss](const Eigen::VectorXd& free) {
    try {
      LossReport r = loss(model.from_free(free));
      r.gradient = model.free_gradient(free, r.gradient);
      return r;
    } catch (const ParameterError&) {
      return non_finite_report(free.size());
    }
  };
}

void take_run(FitOutcome& out, EstimationRun run) {
  out.converged = run.converged;
  out.iters = run.iters;
  out.run = std::move(run);
}

}  // namespace

FitOutcome fit(const FitRequest& request, const SampleMatrix& x) {
  check_method_supported(request.method, request.model.kind);
  validate(request.optimizer);
  const auto model = make_model(request.model);
  const auto p = static_cast<Eigen::Index>(model->param_count());

  Rng init_rng(sub_seed(request.seed, "init"));
  const ParamVector free0 = model->initial_free_params(init_rng, request.optimizer.init_scale);
  const std::uint64_t noise_seed = sub_seed(request.seed, "noise");
  const std::uint64_t restart_seed = sub_seed(request.seed, "restarts");

  FitOutcome out;
  switch (request.method) {
    case Method::Cnce: {
      if (request.kappa == 0) throw ConfigError("kappa", "kappa must be at least 1");
      KernelConfig kernel_cfg = request.kernel;
      if (request.epsilon.automatic) {
        EpsilonChoice choice = adapt_epsilon(*model, model->from_free(free0), x, kernel_cfg,
                                             request.epsilon.schedule, request.kappa, noise_seed);
        kernel_cfg.epsilon = choice.epsilon;
        out.epsilon_capped = choice.capped;
        out.epsilon_choice = std::move(choice);
      } else {
        kernel_cfg.epsilon = request.epsilon.fixed;
      }
      out.epsilon = kernel_cfg.epsilon;
      const auto kernel = make_kernel(kernel_cfg, x);
      const NoisePairing pairing = sample_conditional(*kernel, x, request.kappa, noise_seed);
      const CnceObjective loss(*model, x, pairing);
      EstimationRun run = minimize(in_free_coordinates(*model, std::cref(loss)), free0,
                                   request.optimizer, restart_seed);
      out.theta_hat = model->from_free(run.theta);
      take_run(out, std::move(run));
      break;
    }
    case Method::Nce: {
      if (request.kappa == 0) throw ConfigError("kappa", "kappa must be at least 1");
      const MarginalKernel marginal = fit_marginal(x);
      const SampleMatrix noise = sample_marginal(marginal, request.kappa * x.n(), noise_seed);
      const NceObjective loss(*model, x, noise, marginal);
      const Objective objective = [&](const Eigen::VectorXd& free) {
        try {
          ParamVector theta_c(p + 1);
          theta_c.head(p) = model->from_free(free.head(p));
          theta_c[p] = free[p];
          LossReport r = loss(theta_c);
          r.gradient.head(p) = model->free_gradient(free.head(p), r.gradient.head(p));
          return r;
        } catch (const ParameterError&) {
          return non_finite_report(free.size());
        }
      };
      ParamVector start(p + 1);
      start.head(p) = free0;
      start[p] = 0.0;
      EstimationRun run = minimize(objective, start, request.optimizer, restart_seed);
      out.theta_hat = model->from_free(run.theta.head(p));
      out.log_normaliser = run.theta[p];
      take_run(out, std::move(run));
      break;
    }
    case Method::ScoreMatching: {
      auto loss = [&](const ParamVector& theta) { return score_matching_loss(*model, theta, x); };
      EstimationRun run = minimize(in_free_coordinates(*model, loss), free0, request.optimizer, restart_seed);
      out.theta_hat = model->from_free(run.theta);
      take_run(out, std::move(run));
      break;
    }
    case Method::Mle: {
      MleResult mle = mle_fit(*model, x, request.optimizer, restart_seed);
      out.theta_hat = mle.theta_hat;
      out.converged = mle.converged;
      if (mle.run) {
        out.iters = mle.run->iters;
        out.run = std::move(mle.run);
      }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double ica_error(std::size_t d, const ParamVector& theta_hat, const ParamVector& theta_true) {
  if (d > 8) throw UnsupportedError("ICA error search is limited to D <= 8");
  const Eigen::MatrixXd bh = unpack_demixing(d, theta_hat);
  const Eigen::MatrixXd bt = unpack_demixing(d, theta_true);
  // cost[j][k]: best-sign squared distance between estimated row k and true row j.
  std::vector<double> cost(d * d);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < d; ++k) {
      const auto jj = static_cast<Eigen::Index>(j);
      const auto kk = static_cast<Eigen::Index>(k);
      const double plus = (bh.row(kk) - bt.row(jj)).squaredNorm();
      const double minus = (bh.row(kk) + bt.row(jj)).squaredNorm();
      cost[j * d + k] = std::min(plus, minus);
    }
  }
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += cost[j * d + perm[j]];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best);
}

}  // namespace

double estimation_error(const ModelSpec& spec, const ParamVector& theta_hat,
                        const ParamVector& theta_true) {
  const auto p = static_cast<Eigen::Index>(spec.param_count());
  if (theta_hat.size() != p || theta_true.size() != p) {
    throw ParameterError("parameter packing does not match the model");
  }
  switch (spec.kind) {
    case ModelKind::GaussianPrecision:
    case ModelKind::Ring: return (theta_hat - theta_true).norm();
    case ModelKind::IcaLaplace: return ica_error(spec.dim, theta_hat, theta_true);
    case ModelKind::Bernoulli: return (theta_hat / theta_hat.sum() - theta_true).norm();
    case ModelKind::LogNormalExt: return std::abs(theta_hat[0] - theta_true[0]);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------

void validate(const ExperimentConfig& c) {
  try {
    validate(c.model);
  } catch (const ParameterError& e) {
    throw ConfigError("model", e.what());
  }
  const bool flips = c.kernel.kind == KernelConfig::Kind::BernoulliFlip;
  if (flips != (c.model.kind == ModelKind::Bernoulli)) {
    throw ConfigError("kernel.kind", "bernoulli_flip noise is required for, and only valid with, the bernoulli model");
  }
  if (c.methods.empty()) throw ConfigError("methods", "at least one method is required");
  for (Method m : c.methods) {
    try {
      check_method_supported(m, c.model.kind);
    } catch (const ConfigError& e) {
      throw ConfigError("methods", e.what());
    }
  }
  if (c.n_grid.empty()) throw ConfigError("n_grid", "n_grid must not be empty");
  for (std::size_t i = 0; i < c.n_grid.size(); ++i) {
    if (c.n_grid[i] == 0) throw ConfigError("n_grid", "n_grid entries must be positive");
    if (i > 0 && c.n_grid[i] <= c.n_grid[i - 1]) {
      throw ConfigError("n_grid", "n_grid must be strictly ascending");
    }
  }
  if (c.kappa_grid.empty()) throw ConfigError("kappa_grid", "kappa_grid must not be empty");
  for (auto k : c.kappa_grid) {
    if (k == 0) throw ConfigError("kappa_grid", "kappa_grid entries must be positive");
  }
  if (c.repeats < 1) throw ConfigError("repeats", "repeats must be >= 1");
  if (!c.epsilon.automatic && !(c.epsilon.fixed > 0.0)) {
    throw ConfigError("epsilon", "a fixed epsilon must be positive");
  }
  if (c.epsilon.automatic) validate(c.epsilon.schedule);
  validate(c.optimizer);
}

std::uint64_t run_seed(std::uint64_t master_seed, ModelKind kind, Method method, std::uint64_t n,
                       std::uint64_t kappa, std::uint64_t repeat) {
  return StableHash().add(master_seed).add(to_string(kind)).add(to_string(method)).add(n).add(kappa).add(repeat).finish();
}

std::uint64_t truth_seed(std::uint64_t master_seed, ModelKind kind, std::uint64_t repeat) {
  return StableHash().add(master_seed).add(to_string(kind)).add("truth").add(repeat).finish();
}

std::uint64_t data_seed(std::uint64_t master_seed, ModelKind kind, std::uint64_t n,
                        std::uint64_t repeat) {
  return StableHash().add(master_seed).add(to_string(kind)).add("data").add(n).add(repeat).finish();
}

namespace {

struct Task {
  std::size_t method_index;
  std::size_t n_index;
  std::size_t kappa_index;
  std::size_t repeat;
};

struct TaskResult {
  double error = std::numeric_limits<double>::infinity();
  double epsilon = 0.0;
  bool converged = false;
  bool warning = false;
  std::uint64_t iters = 0;
  double wall_ms = 0.0;
  std::uint64_t seed = 0;
};

TaskResult run_task(const ExperimentConfig& cfg, const Task& task) {
  const Method method = cfg.methods[task.method_index];
  const std::uint64_t n = cfg.n_grid[task.n_index];
  const std::uint64_t kappa = ignores_kappa(method) ? 0 : cfg.kappa_grid[task.kappa_index];

  TaskResult result;
  result.seed = run_seed(cfg.master_seed, cfg.model.kind, method, n, kappa, task.repeat);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const ParamVector truth =
        generate_true_params(cfg.model, truth_seed(cfg.master_seed, cfg.model.kind, task.repeat));
    const SampleMatrix x =
        sample_data(cfg.model, truth, n, data_seed(cfg.master_seed, cfg.model.kind, n, task.repeat));
    FitRequest req;
    req.model = cfg.model;
    req.method = method;
    req.kappa = kappa == 0 ? 1 : kappa;
    req.epsilon = cfg.epsilon;
    req.kernel = cfg.kernel;
    req.optimizer = cfg.optimizer;
    req.seed = result.seed;
    const FitOutcome out = fit(req, x);
    result.error = estimation_error(cfg.model, out.theta_hat, truth);
    result.epsilon = out.epsilon;
    result.converged = out.converged;
    result.iters = static_cast<std::uint64_t>(out.iters);
    result.warning = !out.converged || out.epsilon_capped;
    if (!std::isfinite(result.error)) result.error = std::numeric_limits<double>::infinity();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    result.converged = false;
    result.warning = true;
  }
  result.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace

GridResult run_grid(const ExperimentConfig& cfg, std::size_t jobs) {
  validate(cfg);

  // Canonical order: method, N, κ, repeat. κ-independent methods run once per (N, repeat).
  std::vector<Task> tasks;
  std::vector<std::size_t> record_task;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> shared;
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
      for (std::size_t ki = 0; ki < cfg.kappa_grid.size(); ++ki) {
        for (std::size_t r = 0; r < cfg.repeats; ++r) {
          if (ignores_kappa(cfg.methods[m])) {
            const auto key = std::make_tuple(m, ni, r);
            auto it = shared.find(key);
            if (it == shared.end()) {
              it = shared.emplace(key, tasks.size()).first;
              tasks.push_back({m, ni, ki, r});
            }
            record_task.push_back(it->second);
          } else {
            record_task.push_back(tasks.size());
            tasks.push_back({m, ni, ki, r});
          }
        }
      }
    }
  }

  std::vector<TaskResult> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        results[i] = run_task(cfg, tasks[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, tasks.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  GridResult grid;
  std::size_t id = 0;
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
      for (std::size_t ki = 0; ki < cfg.kappa_grid.size(); ++ki) {
        for (std::size_t r = 0; r < cfg.repeats; ++r, ++id) {
          const TaskResult& tr = results[record_task[id]];
          ErrorRecord rec;
          rec.run_id = id;
          rec.model = std::string(to_string(cfg.model.kind));
          rec.method = std::string(to_string(cfg.methods[m]));
          rec.n = cfg.n_grid[ni];
          rec.kappa = cfg.kappa_grid[ki];
          rec.epsilon = tr.epsilon;
          rec.seed = tr.seed;
          rec.error = tr.error;
          rec.sq_error = tr.error * tr.error;
          rec.converged = tr.converged;
          rec.iters = tr.iters;
          rec.wall_ms = tr.wall_ms;
          grid.records.push_back(std::move(rec));
        }
      }
    }
  }
  for (const auto& tr : results) grid.warnings += tr.warning ? 1 : 0;
  grid.summaries = summarise(grid.records);
  return grid;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || values[lo] == values[hi]) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<QuantileSummary> summarise(const std::vector<ErrorRecord>& records) {
  std::vector<std::tuple<std::string, std::uint64_t, std::uint64_t>> keys;
  std::map<std::tuple<std::string, std::uint64_t, std::uint64_t>, std::vector<double>> groups;
  for (const auto& r : records) {
    const auto key = std::make_tuple(r.method, r.n, r.kappa);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) keys.push_back(key);
    it->second.push_back(r.error);
  }
  std::vector<QuantileSummary> out;
  for (const auto& key : keys) {
    const auto& errors = groups[key];
    QuantileSummary s;
    s.method = std::get<0>(key);
    s.n = std::get<1>(key);
    s.kappa = std::get<2>(key);
    s.median = quantile(errors, 0.5);
    s.q10 = quantile(errors, 0.1);
    s.q90 = quantile(errors, 0.9);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<LimitRow> limit_check(const ParamVector& theta, const std::vector<double>& eps_grid,
                                  std::size_t mc_pairs, std::uint64_t rng_seed) {
  // Recover D from the packed length D(D+1)/2.
  std::size_t dim = 1;
  while (dim * (dim + 1) / 2 < static_cast<std::size_t>(theta.size())) ++dim;
  if (dim * (dim + 1) / 2 != static_cast<std::size_t>(theta.size())) {
    throw ParameterError("limit check needs a packed Gaussian precision matrix");
  }
  const std::size_t draws = mc_pairs / 2;
  if (draws < 2) throw std::invalid_argument("limit check needs at least 4 pair draws");

  ModelSpec spec = ModelSpec::defaults(ModelKind::GaussianPrecision);
  spec.dim = dim;
  const auto model = make_model(spec);
  const SampleMatrix x = sample_data(spec, theta, draws, sub_seed(rng_seed, "data"));

  SampleMatrix xi(draws, dim);
  {
    Rng rng(sub_seed(rng_seed, "xi"));
    std::normal_distribution<double> normal;
    for (auto& v : xi.values()) v = normal(rng);
  }

  // Per-draw score-matching integrand with H = -Λ, ∇f = -Λx.
  const Eigen::MatrixXd lambda = unpack_precision(dim, theta);
  const auto d = static_cast<Eigen::Index>(dim);
  std::vector<double> sm(draws);
  std::vector<double> fx(draws);
  double sm_sum = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    Eigen::Map<const Eigen::VectorXd> xv(x.row(i).data(), d);
    Eigen::Map<const Eigen::VectorXd> e(xi.row(i).data(), d);
    const Eigen::VectorXd le = lambda * e;
    const double a = -xv.dot(le);
    const double q = -e.dot(le);
    sm[i] = q + 0.5 * a * a;
    sm_sum += sm[i];
    fx[i] = model->log_phi(theta, x.row(i));
  }
  const double sm_mean = sm_sum / static_cast<double>(draws);
  const double log4 = 2.0 * std::numbers::ln2;
  const GaussianPerturbKernel symmetric_kernel(std::vector<double>(dim, 1.0));

  std::vector<LimitRow> rows;
  for (double eps : eps_grid) {
    if (!(eps >= 0.0)) throw std::invalid_argument("limit check epsilon must be >= 0");
    SampleMatrix noise(2 * draws, dim);
    for (std::size_t i = 0; i < draws; ++i) {
      auto plus = noise.row(2 * i);
      auto minus = noise.row(2 * i + 1);
      for (std::size_t k = 0; k < dim; ++k) {
        plus[k] = x(i, k) + eps * xi(i, k);
        minus[k] = x(i, k) - eps * xi(i, k);
      }
    }
    const NoisePairing pairing = pair_with_noise(symmetric_kernel, x, std::move(noise), 2);
    LimitRow row;
    row.epsilon = eps;
    row.mc_loss = cnce_loss(*model, theta, x, pairing).value;
    row.sm_term = 0.5 * eps * eps * sm_mean;
    row.sm_prediction = log4 + row.sm_term;
    row.residual = (row.mc_loss - log4) - row.sm_term;

    // Spread of the per-draw residual contributions.
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
      const double g_plus = fx[i] - model->log_phi(theta, pairing.noise.row(2 * i));
      const double g_minus = fx[i] - model->log_phi(theta, pairing.noise.row(2 * i + 1));
      const double r = (softplus(-g_plus) + softplus(-g_minus) - log4) - 0.5 * eps * eps * sm[i];
      const double delta = r - mean;
      mean += delta / static_cast<double>(i + 1);
      m2 += delta * (r - mean);
    }
    row.residual_stderr = std::sqrt(m2 / static_cast<double>(draws - 1) / static_cast<double>(draws));
    row.flagged = eps > 0.0 && std::abs(row.residual) < 3.0 * row.residual_stderr;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace cnce
