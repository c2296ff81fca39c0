#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <vector>

#include "cnce/cli.hpp"
#include "cnce/estimators.hpp"
#include "cnce/experiments.hpp"
#include "cnce/json_io.hpp"
#include "cnce/persist.hpp"

namespace py = pybind11;
using namespace cnce;

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Array2 = py::array_t<double, py::array::c_style | py::array::forcecast>;

ModelSpec parse_model(const std::string& model_json) {
  const Json j = Json::parse(model_json);
  ModelSpec spec = model_spec_from_json(Json{{"model", j}});
  validate(spec);
  return spec;
}

SampleMatrix to_samples(const Array2& x) {
  if (x.ndim() != 2) throw std::invalid_argument("x must be a 2-d array");
  const auto n = static_cast<std::size_t>(x.shape(0));
  const auto d = static_cast<std::size_t>(x.shape(1));
  return SampleMatrix(n, d, std::vector<double>(x.data(), x.data() + n * d));
}

RowMajor to_array(const SampleMatrix& x) { return x.as_eigen(); }

Point as_point(const Eigen::VectorXd& u) { return {u.data(), static_cast<std::size_t>(u.size())}; }

py::tuple cnce_loss_py(const std::string& model_json, const ParamVector& theta, const Array2& x, std::size_t kappa,
                       double epsilon, std::uint64_t seed, bool per_dim) {
  const ModelSpec spec = parse_model(model_json);
  const SampleMatrix samples = to_samples(x);
  KernelConfig kc = default_kernel(spec.kind);
  kc.epsilon = epsilon;
  kc.per_dim = per_dim && kc.kind == KernelConfig::Kind::GaussianPerturb;
  const auto model = make_model(spec);
  const auto kernel = make_kernel(kc, samples);
  const NoisePairing pairing = sample_conditional(*kernel, samples, kappa, seed);
  const LossReport r = cnce_loss(*model, theta, samples, pairing);
  return py::make_tuple(r.value, r.gradient);
}

std::string fit_py(const std::string& config_json, const Array2& x) {
  const EstimateConfig cfg = estimate_config_from_json(Json::parse(config_json));
  const SampleMatrix samples = to_samples(x);
  FitRequest req;
  req.model = cfg.model;
  req.method = cfg.method;
  req.kappa = cfg.kappa;
  req.epsilon = cfg.epsilon;
  req.kernel = cfg.kernel;
  req.optimizer = cfg.optimizer;
  req.seed = cfg.seed;
  FitOutcome out;
  {
    py::gil_scoped_release release;
    out = fit(req, samples);
  }
  Json result{{"theta_hat", out.theta_hat.size() ? std::vector<double>(out.theta_hat.data(),
                                                                       out.theta_hat.data() + out.theta_hat.size())
                                                 : std::vector<double>{}},
              {"converged", out.converged},
              {"iters", out.iters},
              {"epsilon", out.epsilon},
              {"epsilon_capped", out.epsilon_capped}};
  if (cfg.method == Method::Nce) result["log_normaliser"] = out.log_normaliser;
  return result.dump();
}

std::string run_experiment_py(const std::string& config_json, std::size_t jobs) {
  const ExperimentConfig cfg = experiment_config_from_json(Json::parse(config_json));
  GridResult result;
  {
    py::gil_scoped_release release;
    result = run_grid(cfg, jobs);
  }
  return to_csv(result.records);
}

py::tuple run_cli_py(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"cnce"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Conditional noise-contrastive estimation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<UnsupportedError>(m, "UnsupportedError", PyExc_NotImplementedError);

  m.def("log_phi", [](const std::string& model, const ParamVector& theta, const Eigen::VectorXd& u) {
    return log_phi(parse_model(model), theta, as_point(u));
  });
  m.def("grad_theta_log_phi", [](const std::string& model, const ParamVector& theta, const Eigen::VectorXd& u) {
    return Eigen::VectorXd(grad_theta_log_phi(parse_model(model), theta, as_point(u)));
  });
  m.def("true_params", [](const std::string& model, std::uint64_t seed) {
    return Eigen::VectorXd(generate_true_params(parse_model(model), seed));
  });
  m.def("sample", [](const std::string& model, const ParamVector& theta, std::size_t n, std::uint64_t seed) {
    return to_array(sample_data(parse_model(model), theta, n, seed));
  });
  m.def("estimation_error", [](const std::string& model, const ParamVector& theta_hat, const ParamVector& truth) {
    return estimation_error(parse_model(model), theta_hat, truth);
  });
  m.def("cnce_loss", &cnce_loss_py, py::arg("model"), py::arg("theta"), py::arg("x"), py::arg("kappa"),
        py::arg("epsilon"), py::arg("seed"), py::arg("per_dim") = false);
  m.def("fit", &fit_py, py::arg("config"), py::arg("x"));
  m.def("run_experiment", &run_experiment_py, py::arg("config"), py::arg("jobs") = 1);
  m.def("run_cli", &run_cli_py, py::arg("args"));
}
