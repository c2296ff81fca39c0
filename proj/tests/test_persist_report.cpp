#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "cnce/persist.hpp"
#include "cnce/svg_chart.hpp"

using namespace cnce;
namespace fs = std::filesystem;

namespace {

ErrorRecord record(std::uint64_t id, const std::string& method, std::uint64_t n, std::uint64_t kappa, double error) {
  ErrorRecord r;
  r.run_id = id;
  r.model = "gaussian";
  r.method = method;
  r.n = n;
  r.kappa = kappa;
  r.epsilon = method == "cnce" ? 0.4 : 0.0;
  r.seed = 0xFFFFFFFFFFFFFFF0ULL - id;
  r.error = error;
  r.sq_error = error * error;
  r.converged = id % 3 != 0;
  r.iters = 100 + id;
  return r;
}

std::vector<ErrorRecord> sample_records() {
  std::vector<ErrorRecord> out;
  std::uint64_t id = 0;
  for (std::uint64_t n : {100, 1000, 10000}) {
    for (std::uint64_t kappa : {1, 10}) {
      for (int r = 0; r < 4; ++r) {
        out.push_back(record(id++, "cnce", n, kappa, 1.0 / std::sqrt(static_cast<double>(n)) * (1.0 + 0.1 * r) /
                                                        static_cast<double>(kappa)));
      }
    }
  }
  for (std::uint64_t n : {100, 1000, 10000}) {
    for (std::uint64_t kappa : {1, 10}) {
      for (int r = 0; r < 4; ++r) out.push_back(record(id++, "mle", n, kappa, 0.5 / std::sqrt(static_cast<double>(n))));
    }
  }
  return out;
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t c = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++c;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cnce_unit_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("persist_report") {

TEST_CASE("number formatting") {
  CHECK(format_real(0.1) == "0.1");
  CHECK(format_real(1e-300) == "1e-300");
  CHECK(format_real(2.0) == "2");
  CHECK(format_real(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_real(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("CSV layout") {
  CHECK(to_csv({}) == std::string(kCsvHeader) + "\n");
  CHECK(std::string(kCsvHeader) == "run_id,model,method,n,kappa,epsilon,seed,error,sq_error,converged,iters,wall_ms");

  ErrorRecord r = record(7, "cnce", 1000, 10, 0.25);
  r.wall_ms = 12.5;
  const std::string csv = to_csv({r});
  CHECK(csv == std::string(kCsvHeader) + "\n7,gaussian,cnce,1000,10,0.4,18446744073709551593,0.25,0.0625,1,107,0\n");
  CHECK(to_csv({r}, true).find(",107,12.5\n") != std::string::npos);
}

TEST_CASE("CSV round trip") {
  auto records = sample_records();
  records[3].error = std::numeric_limits<double>::infinity();
  records[3].sq_error = records[3].error;
  records[5].error = 0.1 + 0.2;
  records[5].sq_error = records[5].error * records[5].error;
  CHECK(parse_csv(to_csv(records)) == records);

  for (auto& r : records) r.wall_ms = 1.0 / 3.0;
  CHECK(parse_csv(to_csv(records, true)) == records);
  CHECK(parse_csv(to_csv({})).empty());
}

TEST_CASE("CSV schema errors list the missing columns") {
  try {
    parse_csv("run_id,model,method,n\n");
    FAIL("expected a schema error");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "csv");
    const std::string what = e.what();
    CHECK(what.find("kappa") != std::string::npos);
    CHECK(what.find("wall_ms") != std::string::npos);
    CHECK(what.find("run_id") == std::string::npos);
  }
}

TEST_CASE("persist writes CSV and summary and guards existing files") {
  const fs::path dir = scratch("persist");
  GridResult result;
  result.records = sample_records();
  result.summaries = summarise(result.records);
  persist(result, Json{{"schema", 1}}, dir, false);
  CHECK(load_csv(dir / "results.csv") == result.records);

  const Json summary = Json::parse(slurp(dir / "summary.json"));
  CHECK(summary["config"]["schema"] == 1);
  REQUIRE(summary["summaries"].size() == result.summaries.size());
  const auto& first = summary["summaries"][0];
  for (const char* key : {"method", "n", "kappa", "median", "q10", "q90"}) CHECK(first.contains(key));

  CHECK_THROWS_AS(persist(result, Json::object(), dir, false), ConfigError);
  CHECK_NOTHROW(persist(result, Json::object(), dir, true));
  fs::remove_all(dir);
}

TEST_CASE("empty report still draws axes and legend") {
  const auto files = render_report({});
  REQUIRE(files.size() == 1);
  const std::string& svg = files.at("errors.svg");
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\"") != std::string::npos);
  CHECK(svg.find("log10 N") != std::string::npos);
  CHECK(svg.find("0.1 / 0.9 quantiles") != std::string::npos);
  CHECK(count(svg, "<polyline") == 0);
  CHECK(svg.size() >= 7);
  CHECK(svg.substr(svg.size() - 7) == "</svg>\n");
}

TEST_CASE("report series layout") {
  const auto files = render_report(sample_records());
  REQUIRE(files.size() == 1);
  const std::string& svg = files.at("errors_gaussian.svg");
  // cnce at two κ values plus one collapsed mle series; one solid and two dashed lines each.
  CHECK(count(svg, "<polyline") == 9);
  CHECK(count(svg, "stroke-dasharray=\"5,4\" points") == 6);
  CHECK(svg.find("cnce k=1<") != std::string::npos);
  CHECK(svg.find("cnce k=10<") != std::string::npos);
  CHECK(count(svg, ">mle<") == 1);
  CHECK(render_report(sample_records()) == files);
}

TEST_CASE("non-finite points split a line") {
  Chart chart{"t", "x", "y", {}};
  chart.series.push_back({"s", {0.0, 1.0, 2.0, 3.0}, {0.0, std::nan(""), -1.0, -2.0}, {0.0, 0.0, 0.0, 0.0},
                          {1.0, 1.0, 1.0, 1.0}});
  const std::string svg = render_svg(chart);
  CHECK(count(svg, "<polyline") == 4);
}

TEST_CASE("report matches the golden file") {
  const fs::path data(CNCE_TEST_DATA_DIR);
  const auto files = render_report(load_csv(data / "golden_records.csv"));
  REQUIRE(files.count("errors_ring.svg") == 1);
  CHECK(files.at("errors_ring.svg") == slurp(data / "golden_errors_ring.svg"));
}

}  // TEST_SUITE
