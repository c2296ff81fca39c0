#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cnce/experiments.hpp"
#include "cnce/json_io.hpp"

namespace cnce {

/// Exact CSV header of the results file.
inline constexpr const char* kCsvHeader =
    "run_id,model,method,n,kappa,epsilon,seed,error,sq_error,converged,iters,wall_ms";

/// Shortest round-trip decimal form of a double; "inf"/"-inf"/"nan" for non-finite values.
std::string format_real(double value);

/// Header line plus one line per record. wall_ms is written as 0 unless include_timing.
std::string to_csv(const std::vector<ErrorRecord>& records, bool include_timing = false);

/// Parses a results CSV. Throws ConfigError("csv", ...) naming any missing columns.
std::vector<ErrorRecord> parse_csv(const std::string& text);
std::vector<ErrorRecord> load_csv(const std::filesystem::path& path);

Json summary_json(const Json& config, const std::vector<QuantileSummary>& summaries);

/// Throws ConfigError("out", ...) if any of `files` exists in `out_dir` and !force.
void guard_outputs(const std::filesystem::path& out_dir, const std::vector<std::string>& files, bool force);

/// Writes results.csv and summary.json into out_dir (created if needed).
void persist(const GridResult& result, const Json& config, const std::filesystem::path& out_dir,
             bool force, bool include_timing = false);

/// Writes `text` to `path` in binary mode.
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cnce
