#include "cnce/persist.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace cnce {

namespace {

constexpr std::array<const char*, 12> kColumns{"run_id", "model", "method", "n",        "kappa",
                                               "epsilon", "seed", "error",  "sq_error", "converged",
                                               "iters",   "wall_ms"};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& s, const std::string& column) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("csv", "bad value '" + s + "' in column " + column);
  }
  return v;
}

std::uint64_t parse_count(const std::string& s, const std::string& column) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("csv", "bad value '" + s + "' in column " + column);
  }
  return v;
}

}  // namespace

std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

std::string to_csv(const std::vector<ErrorRecord>& records, bool include_timing) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.run_id) + ',' + r.model + ',' + r.method + ',' + std::to_string(r.n) + ',' +
           std::to_string(r.kappa) + ',' + format_real(r.epsilon) + ',' + std::to_string(r.seed) + ',' +
           format_real(r.error) + ',' + format_real(r.sq_error) + ',' + (r.converged ? "1" : "0") + ',' +
           std::to_string(r.iters) + ',' + format_real(include_timing ? r.wall_ms : 0.0) + '\n';
  }
  return out;
}

std::vector<ErrorRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("csv", "empty CSV: missing columns " + std::string(kCsvHeader));
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);
  std::string missing;
  for (const char* c : kColumns) {
    if (!index.contains(c)) missing += (missing.empty() ? "" : ",") + std::string(c);
  }
  if (!missing.empty()) throw ConfigError("csv", "CSV is missing columns: " + missing);

  std::vector<ErrorRecord> records;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) {
      throw ConfigError("csv", "row has " + std::to_string(f.size()) + " fields, expected " +
                                   std::to_string(header.size()));
    }
    auto at = [&](const char* c) -> const std::string& { return f[index.at(c)]; };
    ErrorRecord r;
    r.run_id = parse_count(at("run_id"), "run_id");
    r.model = at("model");
    r.method = at("method");
    r.n = parse_count(at("n"), "n");
    r.kappa = parse_count(at("kappa"), "kappa");
    r.epsilon = parse_real(at("epsilon"), "epsilon");
    r.seed = parse_count(at("seed"), "seed");
    r.error = parse_real(at("error"), "error");
    r.sq_error = parse_real(at("sq_error"), "sq_error");
    r.converged = at("converged") == "1" || at("converged") == "true";
    r.iters = parse_count(at("iters"), "iters");
    r.wall_ms = parse_real(at("wall_ms"), "wall_ms");
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<ErrorRecord> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("csv", "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

Json summary_json(const Json& config, const std::vector<QuantileSummary>& summaries) {
  Json list = Json::array();
  for (const auto& s : summaries) {
    list.push_back(Json{{"method", s.method},
                        {"n", s.n},
                        {"kappa", s.kappa},
                        {"median", s.median},
                        {"q10", s.q10},
                        {"q90", s.q90}});
  }
  return Json{{"config", config}, {"summaries", list}};
}

void guard_outputs(const std::filesystem::path& out_dir, const std::vector<std::string>& files, bool force) {
  if (force) return;
  for (const auto& f : files) {
    if (std::filesystem::exists(out_dir / f)) {
      throw ConfigError("out", "'" + (out_dir / f).string() + "' exists; pass --force to overwrite");
    }
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("out", "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("out", "failed writing '" + path.string() + "'");
}

void persist(const GridResult& result, const Json& config, const std::filesystem::path& out_dir, bool force,
             bool include_timing) {
  guard_outputs(out_dir, {"results.csv", "summary.json"}, force);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ConfigError("out", "cannot create '" + out_dir.string() + "': " + ec.message());
  write_file(out_dir / "results.csv", to_csv(result.records, include_timing));
  write_file(out_dir / "summary.json", summary_json(config, result.summaries).dump(2) + "\n");
}

}  // namespace cnce
