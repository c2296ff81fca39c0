#include "cnce/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cnce/experiments.hpp"
#include "cnce/json_io.hpp"
#include "cnce/persist.hpp"
#include "cnce/svg_chart.hpp"

namespace cnce {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::size_t jobs = 1;
  bool timing = false;
  std::string csv;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("out", "cannot create '" + dir.string() + "': " + ec.message());
}

int cmd_estimate(const Options& opt, std::ostream& out) {
  EstimateConfig cfg = estimate_config_from_json(read_config_file(opt.config));
  if (opt.seed) cfg.seed = *opt.seed;
  const fs::path dir(opt.out);
  guard_outputs(dir, {"estimate.json"}, opt.force);

  const ModelKind kind = cfg.model.kind;
  const ParamVector truth = generate_true_params(cfg.model, truth_seed(cfg.seed, kind, 0));
  const SampleMatrix x = sample_data(cfg.model, truth, cfg.n, data_seed(cfg.seed, kind, cfg.n, 0));
  FitRequest req;
  req.model = cfg.model;
  req.method = cfg.method;
  req.kappa = cfg.kappa;
  req.epsilon = cfg.epsilon;
  req.kernel = cfg.kernel;
  req.optimizer = cfg.optimizer;
  req.seed = run_seed(cfg.seed, kind, cfg.method, cfg.n, ignores_kappa(cfg.method) ? 0 : cfg.kappa, 0);
  const FitOutcome fit_out = fit(req, x);
  const double error = estimation_error(cfg.model, fit_out.theta_hat, truth);

  Json result{{"theta_hat", params_to_json(cfg.model, fit_out.theta_hat)},
              {"theta_true", params_to_json(cfg.model, truth)},
              {"error", error},
              {"converged", fit_out.converged},
              {"iters", fit_out.iters},
              {"epsilon", fit_out.epsilon},
              {"epsilon_capped", fit_out.epsilon_capped}};
  if (cfg.method == Method::Nce) result["log_normaliser"] = fit_out.log_normaliser;
  out << result.dump(2) << "\n";

  Json trace = result;
  trace["config"] = to_json(cfg);
  if (fit_out.run) trace["run"] = to_json(*fit_out.run);
  if (fit_out.epsilon_choice) trace["epsilon_search"] = to_json(*fit_out.epsilon_choice);
  ensure_dir(dir);
  write_file(dir / "estimate.json", trace.dump(2) + "\n");
  return fit_out.converged && !fit_out.epsilon_capped ? kExitOk : kExitWarnings;
}

void write_report(const std::vector<ErrorRecord>& records, const fs::path& dir, bool force,
                  std::ostream& out) {
  const auto files = render_report(records);
  std::vector<std::string> names;
  for (const auto& [name, svg] : files) names.push_back(name);
  guard_outputs(dir, names, force);
  ensure_dir(dir);
  for (const auto& [name, svg] : files) {
    write_file(dir / name, svg);
    out << "wrote " << (dir / name).string() << "\n";
  }
}

int cmd_experiment(const Options& opt, std::ostream& out) {
  ExperimentConfig cfg = experiment_config_from_json(read_config_file(opt.config));
  if (opt.seed) cfg.master_seed = *opt.seed;
  const fs::path dir(opt.out);
  guard_outputs(dir, {"results.csv", "summary.json"}, opt.force);
  guard_outputs(dir, {"errors_" + std::string(to_string(cfg.model.kind)) + ".svg"}, opt.force);

  const GridResult result = run_grid(cfg, opt.jobs);
  persist(result, to_json(cfg), dir, opt.force, opt.timing);
  out << "wrote " << (dir / "results.csv").string() << " (" << result.records.size() << " rows)\n";
  write_report(result.records, dir, true, out);

  out << "method,n,kappa,median,q10,q90\n";
  for (const auto& s : result.summaries) {
    out << s.method << ',' << s.n << ',' << s.kappa << ',' << format_real(s.median) << ','
        << format_real(s.q10) << ',' << format_real(s.q90) << "\n";
  }
  if (result.warnings > 0) {
    out << result.warnings << " run(s) did not converge or hit the epsilon cap\n";
    return kExitWarnings;
  }
  return kExitOk;
}

int cmd_limit_check(const Options& opt, std::ostream& out) {
  LimitCheckConfig cfg;
  if (!opt.config.empty()) cfg = limit_check_config_from_json(read_config_file(opt.config));
  if (opt.seed) cfg.seed = *opt.seed;
  const fs::path dir(opt.out);
  guard_outputs(dir, {"limit_check.csv"}, opt.force);

  ParamVector theta;
  if (cfg.precision.empty()) {
    theta = pack_precision(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(cfg.dim),
                                                     static_cast<Eigen::Index>(cfg.dim)));
  } else {
    theta = Eigen::Map<const Eigen::VectorXd>(cfg.precision.data(),
                                              static_cast<Eigen::Index>(cfg.precision.size()));
  }
  const auto rows = limit_check(theta, cfg.eps_grid, cfg.mc_pairs, cfg.seed);

  std::string csv = "epsilon,mc_loss,sm_prediction,sm_term,residual,residual_stderr,flagged\n";
  bool flagged = false;
  for (const auto& r : rows) {
    csv += format_real(r.epsilon) + ',' + format_real(r.mc_loss) + ',' + format_real(r.sm_prediction) + ',' +
           format_real(r.sm_term) + ',' + format_real(r.residual) + ',' + format_real(r.residual_stderr) + ',' +
           (r.flagged ? "1" : "0") + '\n';
    flagged = flagged || r.flagged;
  }
  out << csv;
  ensure_dir(dir);
  write_file(dir / "limit_check.csv", csv);
  if (flagged) {
    out << "some residuals are not resolved above 3 standard errors; increase mc_pairs\n";
    return kExitWarnings;
  }
  return kExitOk;
}

int cmd_report(const Options& opt, std::ostream& out) {
  const auto records = load_csv(opt.csv);
  write_report(records, fs::path(opt.out), opt.force, out);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional noise-contrastive estimation toolkit"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", opt.config, "JSON config file (\"schema\": 1)");
    if (config_required) c->required();
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", opt.seed, "Override the config seed");
    sub->add_flag("--force", opt.force, "Overwrite existing outputs");
  };

  auto* estimate = app.add_subcommand("estimate", "Fit one method to one simulated data set");
  common(estimate, true);
  auto* experiment = app.add_subcommand("experiment", "Run an experiment grid and write CSV, JSON and SVG");
  common(experiment, true);
  experiment->add_option("--jobs", opt.jobs, "Worker threads")->check(CLI::PositiveNumber);
  experiment->add_flag("--timing", opt.timing, "Record wall-clock times in the CSV (not byte-stable)");
  auto* limit = app.add_subcommand("limit-check", "Small-epsilon expansion check on a Gaussian model");
  common(limit, false);
  auto* report = app.add_subcommand("report", "Render a results CSV as SVG plots");
  report->add_option("--csv", opt.csv, "Results CSV")->required();
  report->add_option("--out", opt.out, "Output directory")->capture_default_str();
  report->add_flag("--force", opt.force, "Overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    if (estimate->parsed()) return cmd_estimate(opt, out);
    if (experiment->parsed()) return cmd_experiment(opt, out);
    if (limit->parsed()) return cmd_limit_check(opt, out);
    if (report->parsed()) return cmd_report(opt, out);
  } catch (const ConfigError& e) {
    err << "error [" << e.key() << "]: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace cnce
