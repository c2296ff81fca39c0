// Acceptance suite: one PASS/FAIL line per criterion.
//
//   cnce_acceptance --criterion N [--work DIR]
//
// Criteria that run experiment grids go through the `cnce experiment` front end
// with the configs in configs/acceptance and keep their outputs under DIR.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cnce/cli.hpp"
#include "cnce/estimators.hpp"
#include "cnce/experiments.hpp"
#include "cnce/json_io.hpp"
#include "cnce/persist.hpp"
#include "cnce/stable_hash.hpp"
#include "gradient_oracle.hpp"

using namespace cnce;
namespace fs = std::filesystem;

namespace {

const double kTwoLog2 = 2.0 * std::numbers::ln2;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void info(const std::string& line) { std::cout << "  " << line << "\n"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Runs `cnce experiment` on an acceptance config; returns the records of results.csv.
std::vector<ErrorRecord> experiment(const std::string& config, const fs::path& out, int jobs = 1) {
  const std::string path = std::string(CNCE_ACCEPTANCE_CONFIGS) + "/" + config;
  const std::string out_dir = out.string();
  const std::string jobs_arg = std::to_string(jobs);
  const char* argv[] = {"cnce", "experiment", "--config", path.c_str(), "--out", out_dir.c_str(),
                        "--jobs", jobs_arg.c_str(), "--force"};
  std::ostringstream sink;
  std::ostringstream err;
  const int code = run_cli(9, argv, sink, err);
  if (code == kExitConfig) throw std::runtime_error("experiment " + config + " failed: " + err.str());
  if (code == kExitWarnings) info(config + ": completed with warnings (non-convergence or epsilon cap)");
  return load_csv(out / "results.csv");
}

double median_error(const std::vector<ErrorRecord>& records, const std::string& method, std::uint64_t n,
                    std::uint64_t kappa) {
  std::vector<double> e;
  for (const auto& r : records) {
    if (r.method == method && r.n == n && r.kappa == kappa) e.push_back(r.error);
  }
  if (e.empty()) throw std::runtime_error("no records for " + method);
  return quantile(e, 0.5);
}

std::size_t unconverged(const std::vector<ErrorRecord>& records) {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const ErrorRecord& r) { return !r.converged; }));
}

// ---------------------------------------------------------------------------

Verdict gradients() {
  using cnce::testing::LossKind;
  bool pass = true;
  int total = 0;
  double worst = 0.0;
  for (auto loss : {LossKind::Cnce, LossKind::Nce, LossKind::ScoreMatching}) {
    for (auto kind : {ModelKind::GaussianPrecision, ModelKind::IcaLaplace, ModelKind::Ring, ModelKind::LogNormalExt,
                      ModelKind::Bernoulli}) {
      if (!cnce::testing::loss_supported(loss, kind)) continue;
      const auto c = cnce::testing::check_loss_gradient(loss, kind, 100, 20190417);
      info(std::string(cnce::testing::to_string(loss)) + " / " + std::string(to_string(kind)) + ": " +
           std::to_string(c.configs - c.failures) + "/" + std::to_string(c.configs) +
           " within 1e-6, worst relative error " + fmt(c.worst, 3));
      pass = pass && c.failures == 0;
      total += c.configs;
      worst = std::max(worst, c.worst);
    }
  }
  return {pass, std::to_string(total) + " configurations, worst relative error " + fmt(worst, 3) + " (< 1e-6)"};
}

Verdict epsilon_zero() {
  double worst = 0.0;
  for (auto kind : {ModelKind::GaussianPrecision, ModelKind::IcaLaplace, ModelKind::Ring, ModelKind::LogNormalExt,
                    ModelKind::Bernoulli}) {
    const ModelSpec spec = ModelSpec::defaults(kind);
    const auto model = make_model(spec);
    Rng rng(StableHash().add(20190417).add(to_string(kind)).finish());
    for (int trial = 0; trial < 10; ++trial) {
      ParamVector theta = model->random_true_params(rng);
      const SampleMatrix x = sample_data(spec, theta, 100, rng());
      // Evaluate away from the truth as well: any θ must give 2 log 2.
      theta = model->from_free(model->initial_free_params(rng, 1.0));
      SampleMatrix noise(x.n() * 3, x.dim());
      for (std::size_t i = 0; i < x.n(); ++i) {
        for (std::size_t j = 0; j < 3; ++j) std::copy(x.row(i).begin(), x.row(i).end(), noise.row(i * 3 + j).begin());
      }
      const auto kernel = make_kernel(default_kernel(kind), x);
      const NoisePairing pairing = pair_with_noise(*kernel, x, std::move(noise), 3);
      worst = std::max(worst, std::abs(cnce_loss(*model, theta, x, pairing).value - kTwoLog2));
    }
  }
  return {worst <= 1e-12, "max |J - 2 log 2| = " + fmt(worst, 3) + " over 50 (model, theta) pairs (<= 1e-12)"};
}

Verdict scale_invariance() {
  const ModelSpec spec = ModelSpec::defaults(ModelKind::Bernoulli);
  const auto model = make_model(spec);
  double worst = 0.0;
  for (std::uint64_t r = 0; r < 10; ++r) {
    const ParamVector truth = generate_true_params(spec, truth_seed(20190417, spec.kind, r));
    const SampleMatrix x = sample_data(spec, truth, 5000, data_seed(20190417, spec.kind, 5000, r));
    const NoisePairing pairing = sample_conditional(BernoulliFlipKernel(0.2), x, 10, r);
    ParamVector theta(2);
    theta << 0.2 + 0.1 * static_cast<double>(r), 1.1;
    const double base = cnce_loss(*model, theta, x, pairing).value;
    for (double c : {0.1, 10.0}) {
      worst = std::max(worst, std::abs(cnce_loss(*model, c * theta, x, pairing).value - base) / base);
    }
  }
  // Machine precision: a few units in the last place of the loss.
  const double tol = 8.0 * std::numeric_limits<double>::epsilon();
  return {worst <= tol, "max relative change " + fmt(worst, 3) + " under theta -> c theta, c in {0.1, 10} (<= " +
                            fmt(tol, 3) + ")"};
}

Verdict nonparametric_optimum() {
  ParamVector truth(2);
  truth << 0.3, 0.7;
  const double eps = 0.2;
  double best = std::numeric_limits<double>::infinity();
  double arg = 0.0;
  int minima = 0;
  std::vector<double> values;
  for (int k = 100; k <= 9900; ++k) {
    const double t = k * 1e-4;
    ParamVector theta(2);
    theta << t, 1.0 - t;
    values.push_back(bernoulli_population_loss(theta, truth, eps));
    if (values.back() < best) {
      best = values.back();
      arg = t;
    }
  }
  for (std::size_t i = 1; i + 1 < values.size(); ++i) {
    if (values[i] < values[i - 1] && values[i] < values[i + 1]) ++minima;
  }
  const bool grid_ok = std::abs(arg - 0.3) <= 1e-4 + 1e-12 && minima == 1;

  const Objective in_logs = [&](const Eigen::VectorXd& z) {
    const ParamVector theta = z.array().exp().matrix();
    LossReport r = bernoulli_population_loss_report(theta, truth, eps);
    r.gradient = r.gradient.cwiseProduct(theta);
    return r;
  };
  Rng rng(20190417);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int start = 0; start < 5; ++start) {
    Eigen::VectorXd z0(2);
    z0 << normal(rng), normal(rng);
    const EstimationRun run = minimize(in_logs, z0, OptimizerConfig{}, static_cast<std::uint64_t>(start));
    const ParamVector theta = run.theta.array().exp().matrix();
    worst = std::max(worst, (theta / theta.sum() - truth).norm());
  }
  return {grid_ok && worst <= 1e-6, "grid argmin " + fmt(arg, 6) + " (" + std::to_string(minima) +
                                        " local minimum), worst optimiser error over 5 starts " + fmt(worst, 3) +
                                        " (<= 1e-6)"};
}

Verdict score_matching_limit(const fs::path& work) {
  const LimitCheckConfig cfg =
      limit_check_config_from_json(read_config_file(std::string(CNCE_ACCEPTANCE_CONFIGS) + "/limit_check.json"));
  const ParamVector theta = pack_precision(Eigen::MatrixXd::Identity(5, 5));
  const auto rows = limit_check(theta, cfg.eps_grid, cfg.mc_pairs, cfg.seed);
  std::map<double, LimitRow> by_eps;
  std::string csv = "epsilon,mc_loss,sm_term,residual,residual_stderr\n";
  for (const auto& r : rows) {
    by_eps[r.epsilon] = r;
    csv += format_real(r.epsilon) + ',' + format_real(r.mc_loss) + ',' + format_real(r.sm_term) + ',' +
           format_real(r.residual) + ',' + format_real(r.residual_stderr) + '\n';
    info("eps " + fmt(r.epsilon) + ": residual " + fmt(r.residual, 3) + " +- " + fmt(r.residual_stderr, 2) +
         ", sm term " + fmt(r.sm_term, 6) + " vs " + fmt(-1.25 * r.epsilon * r.epsilon, 6));
  }
  fs::create_directories(work);
  write_file(work / "limit_check.csv", csv);

  bool pass = true;
  std::string detail;
  for (double eps : {0.04, 0.02}) {
    const double ratio = std::abs(by_eps.at(2 * eps).residual) / std::abs(by_eps.at(eps).residual);
    const double sm = by_eps.at(eps).sm_term;
    const double rel = std::abs(sm / (-1.25 * eps * eps) - 1.0);
    pass = pass && ratio >= 6.0 && rel <= 0.01;
    if (!detail.empty()) detail += "; ";
    detail += "eps " + fmt(eps) + ": |R(2e)|/|R(e)| = " + fmt(ratio, 3) + " (>= 6), sm term off by " +
              fmt(100 * rel, 2) + "% (<= 1%)";
  }
  return {pass, detail};
}

Verdict consistency(const fs::path& work) {
  const auto gauss = experiment("consistency_gaussian.json", work / "gaussian");
  std::vector<double> lx;
  std::vector<double> ly;
  bool decreasing = true;
  double prev = std::numeric_limits<double>::infinity();
  std::string gdetail;
  for (std::uint64_t n : {1000, 10000, 100000}) {
    const double m = median_error(gauss, "cnce", n, 10);
    decreasing = decreasing && m < prev;
    prev = m;
    lx.push_back(std::log10(static_cast<double>(n)));
    ly.push_back(std::log10(m));
    gdetail += fmt(m, 3) + " ";
  }
  const double mx = (lx[0] + lx[1] + lx[2]) / 3.0;
  const double my = (ly[0] + ly[1] + ly[2]) / 3.0;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  const double slope = sxy / sxx;
  info("gaussian medians " + gdetail + "slope " + fmt(slope, 3) + ", " + std::to_string(unconverged(gauss)) +
       " runs not converged");

  const auto ica = experiment("consistency_ica.json", work / "ica");
  bool ica_decreasing = true;
  prev = std::numeric_limits<double>::infinity();
  std::string idetail;
  for (std::uint64_t n : {1000, 10000, 100000}) {
    const double m = median_error(ica, "cnce", n, 10);
    ica_decreasing = ica_decreasing && m < prev;
    prev = m;
    idetail += fmt(m, 3) + " ";
  }
  info("ica medians " + idetail);

  const bool pass = decreasing && slope >= -0.7 && slope <= -0.3 && ica_decreasing;
  return {pass, "gaussian medians strictly decreasing: " + std::string(decreasing ? "yes" : "no") +
                    ", log-log slope " + fmt(slope, 3) + " (in [-0.7, -0.3]); ica medians strictly decreasing: " +
                    (ica_decreasing ? "yes" : "no")};
}

Verdict kappa_to_mle(const fs::path& work) {
  const auto records = experiment("kappa_gaussian.json", work / "kappa");
  const double k1 = median_error(records, "cnce", 10000, 1);
  const double k100 = median_error(records, "cnce", 10000, 100);
  const double mle = median_error(records, "mle", 10000, 1);
  const bool pass = k1 > k100 && k100 <= 2.0 * mle;
  return {pass, "median error kappa=1 " + fmt(k1) + ", kappa=100 " + fmt(k100) + ", mle " + fmt(mle) +
                    " (need kappa=1 > kappa=100 and kappa=100 <= 2 x mle = " + fmt(2 * mle) + ")"};
}

Verdict ring_gap(const fs::path& work) {
  const auto records = experiment("ring_gap.json", work / "ring");
  const double cnce = median_error(records, "cnce", 10000, 10);
  const double nce = median_error(records, "nce", 10000, 10);
  const auto auto_eps = experiment("ring_gap_auto.json", work / "ring_auto");
  const double cnce_auto = median_error(auto_eps, "cnce", 10000, 10);
  info("cnce with the epsilon ladder: median " + fmt(cnce_auto) + ", ratio to nce " + fmt(cnce_auto / nce, 3));
  return {cnce <= nce / 3.0, "median error cnce (epsilon = 1) " + fmt(cnce) + ", nce " + fmt(nce) + ", ratio " +
                                 fmt(cnce / nce, 3) + " (<= 1/3)"};
}

Verdict appendix_models(const fs::path& work) {
  const auto ln = experiment("lognormal_shrink.json", work / "lognormal");
  const double ln_small = median_error(ln, "cnce", 1000, 10);
  const double ln_large = median_error(ln, "cnce", 100000, 10);
  info("lognormal: " + std::to_string(unconverged(ln)) + " runs not converged");
  const auto bern = experiment("bernoulli_shrink.json", work / "bernoulli");
  const double b_small = median_error(bern, "cnce", 1000, 10);
  const double b_large = median_error(bern, "cnce", 100000, 10);
  const bool pass = ln_large * 3.0 <= ln_small && b_large * 3.0 <= b_small;
  return {pass, "lognormal median |theta - theta*| " + fmt(ln_small) + " -> " + fmt(ln_large) + " (shrink " +
                    fmt(ln_small / ln_large, 3) + "x), bernoulli " + fmt(b_small) + " -> " + fmt(b_large) +
                    " (shrink " + fmt(b_small / b_large, 3) + "x); need >= 3x"};
}

Verdict determinism(const fs::path& work) {
  const std::vector<std::string> files{"results.csv", "summary.json", "errors_ring.svg"};
  experiment("determinism.json", work / "jobs1_a", 1);
  experiment("determinism.json", work / "jobs1_b", 1);
  experiment("determinism.json", work / "jobs8", 8);
  bool pass = true;
  for (const auto& f : files) {
    const std::string a = slurp(work / "jobs1_a" / f);
    const bool same = !a.empty() && a == slurp(work / "jobs1_b" / f) && a == slurp(work / "jobs8" / f);
    info(f + (same ? ": identical" : ": DIFFERS"));
    pass = pass && same;
  }
  return {pass, "two --jobs 1 runs and one --jobs 8 run produce byte-identical CSV, JSON and SVG"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int criterion = 0;
  std::string work = "acceptance_work";
  app.add_option("--criterion", criterion, "Criterion number (1-10)")->required()->check(CLI::Range(1, 10));
  app.add_option("--work", work, "Directory for experiment outputs");
  CLI11_PARSE(app, argc, argv);

  static const char* const kTitles[] = {"",
                                        "gradient correctness",
                                        "epsilon = 0 identity",
                                        "scale invariance",
                                        "nonparametric optimum",
                                        "score-matching limit",
                                        "consistency trend",
                                        "kappa -> MLE",
                                        "ring-model gap",
                                        "log-normal and Bernoulli validation",
                                        "determinism"};
  const fs::path dir = fs::path(work) / ("criterion_" + std::to_string(criterion));
  Verdict v;
  try {
    switch (criterion) {
      case 1: v = gradients(); break;
      case 2: v = epsilon_zero(); break;
      case 3: v = scale_invariance(); break;
      case 4: v = nonparametric_optimum(); break;
      case 5: v = score_matching_limit(dir); break;
      case 6: v = consistency(dir); break;
      case 7: v = kappa_to_mle(dir); break;
      case 8: v = ring_gap(dir); break;
      case 9: v = appendix_models(dir); break;
      case 10: v = determinism(dir); break;
    }
  } catch (const std::exception& e) {
    v = {false, std::string("error: ") + e.what()};
  }
  std::cout << (v.pass ? "PASS" : "FAIL") << " [" << criterion << "] " << kTitles[criterion] << ": " << v.detail
            << std::endl;
  return v.pass ? 0 : 1;
}
