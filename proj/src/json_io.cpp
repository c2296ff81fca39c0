#include "cnce/json_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace cnce {

namespace {

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

const Json* find(const Json& j, const std::string& name) {
  if (!j.is_object()) return nullptr;
  auto it = j.find(name);
  return it == j.end() ? nullptr : &*it;
}

const Json& require(const Json& j, const std::string& name, const std::string& key) {
  const Json* v = find(j, name);
  if (v == nullptr) throw ConfigError(key, "missing required key '" + key + "'");
  return *v;
}

double as_real(const Json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(key, "'" + key + "' must be a number");
  return v.get<double>();
}

std::uint64_t as_count(const Json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
  // Accept integral floats such as 1e5.
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
  }
  throw ConfigError(key, "'" + key + "' must be a non-negative integer");
}

int as_int(const Json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError(key, "'" + key + "' must be an integer");
  const auto i = v.get<std::int64_t>();
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
    throw ConfigError(key, "'" + key + "' is out of range");
  }
  return static_cast<int>(i);
}

std::string as_string(const Json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(key, "'" + key + "' must be a string");
  return v.get<std::string>();
}

bool as_bool(const Json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(key, "'" + key + "' must be true or false");
  return v.get<bool>();
}

template <typename T, typename Read>
void read_optional(const Json& j, const std::string& name, const std::string& prefix, T& out, Read read) {
  if (const Json* v = find(j, name)) out = read(*v, join(prefix, name));
}

std::vector<std::size_t> count_list(const Json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError(key, "'" + key + "' must be a list");
  std::vector<std::size_t> out;
  for (const auto& e : v) out.push_back(as_count(e, key));
  return out;
}

std::vector<double> real_list(const Json& v, const std::string& key) {
  if (!v.is_array()) throw ConfigError(key, "'" + key + "' must be a list");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(as_real(e, key));
  return out;
}

Method method_at(const Json& v, const std::string& key) {
  try {
    return method_from_string(as_string(v, key));
  } catch (const ConfigError& e) {
    throw ConfigError(key, e.what());
  }
}

Json vector_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (double x : v) out.push_back(x);
  return out;
}

}  // namespace

Json params_to_json(const ModelSpec& spec, const ParamVector& theta) {
  return Json{{"kind", std::string(to_string(spec.kind))},
              {"dim", spec.dim},
              {"values", vector_json(theta)},
              {"packing", spec.packing()}};
}

ParamVector params_from_json(const ModelSpec& spec, const Json& j, const std::string& key) {
  const Json& values = j.is_array() ? j : require(j, "values", join(key, "values"));
  const std::vector<double> v = real_list(values, key);
  if (v.size() != spec.param_count()) {
    throw ConfigError(key, "'" + key + "' needs " + std::to_string(spec.param_count()) + " values (" +
                               spec.packing() + ")");
  }
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json to_json(const ModelSpec& spec) {
  Json j{{"kind", std::string(to_string(spec.kind))}, {"dim", spec.dim}};
  if (spec.kind == ModelKind::Ring) {
    j["ring_mean"] = spec.ring_mean;
    j["ring_sampler"] = spec.ring_sampler == ModelSpec::RingSampler::Exact ? "exact" : "gaussian_radius";
  }
  return j;
}

ModelSpec model_spec_from_json(const Json& j, const std::string& key) {
  const Json& m = require(j, "model", key);
  if (m.is_string()) {
    try {
      return ModelSpec::defaults(model_kind_from_string(as_string(m, key)));
    } catch (const ConfigError& e) {
      throw ConfigError(key, e.what());
    }
  }
  if (!m.is_object()) throw ConfigError(key, "'" + key + "' must be an object or a model name");
  const std::string kind_key = join(key, "kind");
  ModelKind kind;
  try {
    kind = model_kind_from_string(as_string(require(m, "kind", kind_key), kind_key));
  } catch (const ConfigError& e) {
    throw ConfigError(kind_key, e.what());
  }
  ModelSpec spec = ModelSpec::defaults(kind);
  read_optional(m, "dim", key, spec.dim, as_count);
  read_optional(m, "ring_mean", key, spec.ring_mean, as_real);
  if (const Json* v = find(m, "ring_sampler")) {
    const std::string sampler_key = join(key, "ring_sampler");
    const std::string name = as_string(*v, sampler_key);
    if (name == "gaussian_radius") {
      spec.ring_sampler = ModelSpec::RingSampler::GaussianRadius;
    } else if (name == "exact") {
      spec.ring_sampler = ModelSpec::RingSampler::Exact;
    } else {
      throw ConfigError(sampler_key, "'" + sampler_key + "' must be \"gaussian_radius\" or \"exact\"");
    }
  }
  try {
    validate(spec);
  } catch (const ParameterError& e) {
    throw ConfigError(join(key, "dim"), e.what());
  }
  return spec;
}

Json to_json(const KernelConfig& k) {
  return Json{{"kind", k.kind == KernelConfig::Kind::BernoulliFlip ? "bernoulli_flip" : "gaussian_perturb"},
              {"epsilon", k.epsilon},
              {"per_dim", k.per_dim}};
}

KernelConfig kernel_from_json(const Json& j, const std::string& key) {
  KernelConfig k;
  if (!j.is_object()) throw ConfigError(key, "'" + key + "' must be an object");
  if (const Json* kind = find(j, "kind")) {
    const std::string name = as_string(*kind, join(key, "kind"));
    if (name == "gaussian_perturb") {
      k.kind = KernelConfig::Kind::GaussianPerturb;
    } else if (name == "bernoulli_flip") {
      k.kind = KernelConfig::Kind::BernoulliFlip;
      k.per_dim = false;
    } else {
      throw ConfigError(join(key, "kind"), "unknown kernel kind '" + name + "'");
    }
  }
  read_optional(j, "epsilon", key, k.epsilon, as_real);
  read_optional(j, "per_dim", key, k.per_dim, as_bool);
  return k;
}

Json to_json(const OptimizerConfig& c) {
  return Json{{"max_iters", c.max_iters},       {"grad_tol", c.grad_tol},
              {"step_rule", to_string(c.step_rule)}, {"init_scale", c.init_scale},
              {"restarts", c.restarts},         {"learning_rate", c.learning_rate},
              {"beta1", c.beta1},               {"beta2", c.beta2},
              {"handoff_tol", c.handoff_tol},   {"polish_iters", c.polish_iters}};
}

OptimizerConfig optimizer_from_json(const Json& j, const std::string& key) {
  if (!j.is_object()) throw ConfigError(key, "'" + key + "' must be an object");
  OptimizerConfig c;
  read_optional(j, "max_iters", key, c.max_iters, as_int);
  read_optional(j, "grad_tol", key, c.grad_tol, as_real);
  if (const Json* v = find(j, "step_rule")) {
    c.step_rule = step_rule_from_string(as_string(*v, join(key, "step_rule")));
  }
  read_optional(j, "init_scale", key, c.init_scale, as_real);
  read_optional(j, "restarts", key, c.restarts, as_int);
  read_optional(j, "learning_rate", key, c.learning_rate, as_real);
  read_optional(j, "beta1", key, c.beta1, as_real);
  read_optional(j, "beta2", key, c.beta2, as_real);
  read_optional(j, "handoff_tol", key, c.handoff_tol, as_real);
  read_optional(j, "polish_iters", key, c.polish_iters, as_int);
  validate(c);
  return c;
}

Json to_json(const EpsilonSetting& s) {
  if (!s.automatic) return s.fixed;
  const EpsilonSchedule& e = s.schedule;
  return Json{{"epsilon_0", e.epsilon_0}, {"growth", e.growth}, {"delta", e.delta}, {"epsilon_max", e.epsilon_max}};
}

EpsilonSetting epsilon_from_json(const Json& j, const std::string& key) {
  EpsilonSetting s;
  if (j.is_number()) {
    s.automatic = false;
    s.fixed = j.get<double>();
    if (!(s.fixed > 0.0)) throw ConfigError(key, "a fixed epsilon must be positive");
    return s;
  }
  if (j.is_string()) {
    if (j.get<std::string>() != "auto") throw ConfigError(key, "'" + key + "' must be a number or \"auto\"");
    return s;
  }
  if (!j.is_object()) throw ConfigError(key, "'" + key + "' must be a number, \"auto\" or a schedule");
  read_optional(j, "epsilon_0", key, s.schedule.epsilon_0, as_real);
  read_optional(j, "growth", key, s.schedule.growth, as_real);
  read_optional(j, "delta", key, s.schedule.delta, as_real);
  read_optional(j, "epsilon_max", key, s.schedule.epsilon_max, as_real);
  validate(s.schedule);
  return s;
}

Json to_json(const ExperimentConfig& c) {
  Json methods = Json::array();
  for (Method m : c.methods) methods.push_back(std::string(to_string(m)));
  return Json{{"schema", kConfigSchema},
              {"model", to_json(c.model)},
              {"methods", methods},
              {"n_grid", c.n_grid},
              {"kappa_grid", c.kappa_grid},
              {"repeats", c.repeats},
              {"master_seed", c.master_seed},
              {"epsilon", to_json(c.epsilon)},
              {"kernel", to_json(c.kernel)},
              {"optimizer", to_json(c.optimizer)}};
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig c;
  c.model = model_spec_from_json(j);
  const Json& methods = require(j, "methods", "methods");
  if (!methods.is_array()) throw ConfigError("methods", "'methods' must be a list");
  for (const auto& m : methods) c.methods.push_back(method_at(m, "methods"));
  c.n_grid = count_list(require(j, "n_grid", "n_grid"), "n_grid");
  c.kappa_grid = count_list(require(j, "kappa_grid", "kappa_grid"), "kappa_grid");
  read_optional(j, "repeats", "", c.repeats, as_count);
  read_optional(j, "master_seed", "", c.master_seed, as_count);
  if (const Json* e = find(j, "epsilon")) c.epsilon = epsilon_from_json(*e);
  c.kernel = default_kernel(c.model.kind);
  if (const Json* k = find(j, "kernel")) c.kernel = kernel_from_json(*k);
  if (const Json* o = find(j, "optimizer")) c.optimizer = optimizer_from_json(*o);
  validate(c);
  return c;
}

Json to_json(const EstimateConfig& c) {
  return Json{{"schema", kConfigSchema},
              {"model", to_json(c.model)},
              {"method", std::string(to_string(c.method))},
              {"n", c.n},
              {"kappa", c.kappa},
              {"epsilon", to_json(c.epsilon)},
              {"kernel", to_json(c.kernel)},
              {"optimizer", to_json(c.optimizer)},
              {"seed", c.seed}};
}

EstimateConfig estimate_config_from_json(const Json& j) {
  EstimateConfig c;
  c.model = model_spec_from_json(j);
  c.method = method_at(require(j, "method", "method"), "method");
  try {
    check_method_supported(c.method, c.model.kind);
  } catch (const ConfigError& e) {
    throw ConfigError("method", e.what());
  }
  read_optional(j, "n", "", c.n, as_count);
  if (c.n == 0) throw ConfigError("n", "'n' must be positive");
  read_optional(j, "kappa", "", c.kappa, as_count);
  if (c.kappa == 0) throw ConfigError("kappa", "'kappa' must be positive");
  if (const Json* e = find(j, "epsilon")) c.epsilon = epsilon_from_json(*e);
  c.kernel = default_kernel(c.model.kind);
  if (const Json* k = find(j, "kernel")) c.kernel = kernel_from_json(*k);
  if ((c.kernel.kind == KernelConfig::Kind::BernoulliFlip) != (c.model.kind == ModelKind::Bernoulli)) {
    throw ConfigError("kernel.kind", "bernoulli_flip noise is required for, and only valid with, the bernoulli model");
  }
  if (const Json* o = find(j, "optimizer")) c.optimizer = optimizer_from_json(*o);
  read_optional(j, "seed", "", c.seed, as_count);
  return c;
}

Json to_json(const LimitCheckConfig& c) {
  return Json{{"schema", kConfigSchema}, {"dim", c.dim},           {"precision", c.precision},
              {"eps_grid", c.eps_grid},   {"mc_pairs", c.mc_pairs}, {"seed", c.seed}};
}

LimitCheckConfig limit_check_config_from_json(const Json& j) {
  LimitCheckConfig c;
  read_optional(j, "dim", "", c.dim, as_count);
  if (c.dim == 0) throw ConfigError("dim", "'dim' must be positive");
  if (const Json* p = find(j, "precision")) {
    c.precision = real_list(*p, "precision");
    if (c.precision.size() != c.dim * (c.dim + 1) / 2) {
      throw ConfigError("precision", "'precision' needs dim(dim+1)/2 packed values");
    }
  }
  if (const Json* e = find(j, "eps_grid")) c.eps_grid = real_list(*e, "eps_grid");
  for (double e : c.eps_grid) {
    if (!(e >= 0.0)) throw ConfigError("eps_grid", "'eps_grid' entries must be >= 0");
  }
  read_optional(j, "mc_pairs", "", c.mc_pairs, as_count);
  if (c.mc_pairs < 4) throw ConfigError("mc_pairs", "'mc_pairs' must be at least 4");
  read_optional(j, "seed", "", c.seed, as_count);
  return c;
}

Json to_json(const LossReport& r) {
  return Json{{"value", r.value}, {"gradient", vector_json(r.gradient)}, {"n_terms", r.n_terms}};
}

Json to_json(const EstimationRun& run) {
  Json j{{"theta0", vector_json(run.theta0)},
         {"theta", vector_json(run.theta)},
         {"converged", run.converged},
         {"iters", run.iters},
         {"evaluations", run.evaluations},
         {"wall_ms", run.wall_ms},
         {"loss_trace", run.loss_trace},
         {"grad_norm_trace", run.grad_norm_trace}};
  if (!run.failure.empty()) j["failure"] = run.failure;
  return j;
}

Json to_json(const EpsilonChoice& c) {
  return Json{{"epsilon", c.epsilon}, {"capped", c.capped}, {"ladder", c.ladder}, {"gaps", c.gaps}};
}

Json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON in '") + path + "': " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config", "config must be a JSON object");
  const Json* schema = find(j, "schema");
  if (schema == nullptr) throw ConfigError("schema", "missing required key 'schema'");
  if (!schema->is_number_integer() || schema->get<int>() != kConfigSchema) {
    throw ConfigError("schema", "unsupported schema version (expected " + std::to_string(kConfigSchema) + ")");
  }
  return j;
}

}  // namespace cnce
