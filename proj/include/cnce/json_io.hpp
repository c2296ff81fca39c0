#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cnce/experiments.hpp"

namespace cnce {

using Json = nlohmann::ordered_json;

/// Current config schema version.
inline constexpr int kConfigSchema = 1;

/// {"kind", "dim", "values", "packing"}
Json params_to_json(const ModelSpec& spec, const ParamVector& theta);
ParamVector params_from_json(const ModelSpec& spec, const Json& j, const std::string& key);

Json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const Json& j, const std::string& key = "model");

Json to_json(const KernelConfig& kernel);
KernelConfig kernel_from_json(const Json& j, const std::string& key = "kernel");

Json to_json(const OptimizerConfig& config);
OptimizerConfig optimizer_from_json(const Json& j, const std::string& key = "optimizer");

/// A number, "auto", or {"epsilon_0", "growth", "delta", "epsilon_max"} (automatic).
Json to_json(const EpsilonSetting& setting);
EpsilonSetting epsilon_from_json(const Json& j, const std::string& key = "epsilon");

Json to_json(const ExperimentConfig& config);
/// Missing "kernel" falls back to default_kernel(model.kind).
ExperimentConfig experiment_config_from_json(const Json& j);

/// Single estimation run for `cnce estimate`.
struct EstimateConfig {
  ModelSpec model;
  Method method = Method::Cnce;
  std::size_t n = 10000;
  std::size_t kappa = 10;
  EpsilonSetting epsilon;
  KernelConfig kernel;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
};

Json to_json(const EstimateConfig& config);
EstimateConfig estimate_config_from_json(const Json& j);

/// Gaussian limit check for `cnce limit-check`.
struct LimitCheckConfig {
  std::size_t dim = 5;
  /// Packed precision; empty means the identity.
  std::vector<double> precision;
  std::vector<double> eps_grid{0.0, 0.08, 0.04, 0.02, 0.01};
  std::size_t mc_pairs = 1000000;
  std::uint64_t seed = 0;
};

Json to_json(const LimitCheckConfig& config);
LimitCheckConfig limit_check_config_from_json(const Json& j);

Json to_json(const LossReport& report);
Json to_json(const EstimationRun& run);
Json to_json(const EpsilonChoice& choice);

/// Parses a config file; throws ConfigError("schema", ...) on a missing or wrong version.
Json read_config_file(const std::string& path);

}  // namespace cnce
