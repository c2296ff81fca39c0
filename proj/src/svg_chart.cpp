#include "cnce/svg_chart.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <tuple>

namespace cnce {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 190;
constexpr double kTop = 40;
constexpr double kBottom = 55;

constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                              "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void include(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  // Expands to whole decades, at least one wide.
  void snap() {
    if (!(lo <= hi)) {
      lo = 0.0;
      hi = 1.0;
      return;
    }
    lo = std::floor(lo);
    hi = std::ceil(hi);
    if (hi <= lo) hi = lo + 1.0;
  }
};

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys, const Range& xr,
                     const Range& yr, const char* colour, bool dashed) {
  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  std::string out;
  std::string points;
  auto flush = [&] {
    if (points.empty()) return;
    out += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"" +
           (dashed ? "1" : "2") + "\"" + (dashed ? " stroke-dasharray=\"5,4\"" : "") + " points=\"" + points +
           "\"/>\n";
    points.clear();
  };
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      flush();
      continue;
    }
    const double px = kLeft + (xs[i] - xr.lo) / (xr.hi - xr.lo) * pw;
    const double py = kTop + (yr.hi - ys[i]) / (yr.hi - yr.lo) * ph;
    if (!points.empty()) points += ' ';
    points += num(px) + ',' + num(py);
  }
  flush();
  return out;
}

}  // namespace

std::string render_svg(const Chart& chart) {
  Range xr;
  Range yr;
  for (const auto& s : chart.series) {
    for (double v : s.x) xr.include(v);
    for (const auto* ys : {&s.median, &s.q10, &s.q90}) {
      for (double v : *ys) yr.include(v);
    }
  }
  xr.snap();
  yr.snap();

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + ' ' + num(kHeight) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">" + escape(chart.title) + "</text>\n";

  // Axes and decade ticks.
  svg += "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
  svg += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\"/>\n";
  std::string labels;
  for (double t = xr.lo; t <= xr.hi + 1e-9; t += 1.0) {
    const double px = kLeft + (t - xr.lo) / (xr.hi - xr.lo) * pw;
    svg += "<line x1=\"" + num(px) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(px) + "\" y2=\"" +
           num(kTop + ph + 5) + "\"/>\n";
    labels += "<text x=\"" + num(px) + "\" y=\"" + num(kTop + ph + 20) +
              "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + num(t) + "</text>\n";
  }
  for (double t = yr.lo; t <= yr.hi + 1e-9; t += 1.0) {
    const double py = kTop + (yr.hi - t) / (yr.hi - yr.lo) * ph;
    svg += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(py) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(py) +
           "\"/>\n";
    labels += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py + 4) +
              "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" + num(t) + "</text>\n";
  }
  svg += "</g>\n" + labels;
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + escape(chart.x_label) +
         "</text>\n";
  svg += "<text x=\"18\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 18 " + num(kTop + ph / 2) + ")\">" + escape(chart.y_label) +
         "</text>\n";

  // Series and legend.
  const double lx = kWidth - kRight + 15;
  for (std::size_t i = 0; i < chart.series.size(); ++i) {
    const auto& s = chart.series[i];
    const char* colour = kPalette[i % kPalette.size()];
    svg += "<g>\n";
    svg += polyline(s.x, s.median, xr, yr, colour, false);
    svg += polyline(s.x, s.q10, xr, yr, colour, true);
    svg += polyline(s.x, s.q90, xr, yr, colour, true);
    svg += "</g>\n";
    const double ly = kTop + 10 + 20.0 * static_cast<double>(i);
    svg += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 24) + "\" y2=\"" + num(ly) +
           "\" stroke=\"" + colour + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(lx + 30) + "\" y=\"" + num(ly + 4) + "\" font-family=\"sans-serif\" font-size=\"12\">" +
           escape(s.label) + "</text>\n";
  }
  const double ly = kTop + 10 + 20.0 * static_cast<double>(chart.series.size());
  svg += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 24) + "\" y2=\"" + num(ly) +
         "\" stroke=\"gray\" stroke-width=\"1\" stroke-dasharray=\"5,4\"/>\n";
  svg += "<text x=\"" + num(lx + 30) + "\" y=\"" + num(ly + 4) +
         "\" font-family=\"sans-serif\" font-size=\"12\">0.1 / 0.9 quantiles</text>\n";
  svg += "</svg>\n";
  return svg;
}

std::map<std::string, std::string> render_report(const std::vector<ErrorRecord>& records) {
  const std::string x_label = "log10 N";
  const std::string y_label = "log10 squared error";
  std::map<std::string, std::string> files;
  if (records.empty()) {
    files["errors.svg"] = render_svg(Chart{"estimation error", x_label, y_label, {}});
    return files;
  }

  // model -> series key (first-seen order) -> n -> squared errors
  struct SeriesData {
    std::string label;
    std::map<std::uint64_t, std::vector<double>> by_n;
  };
  std::map<std::string, std::vector<SeriesData>> models;
  // κ-independent rows are copied once per κ; only the first κ of each cell is kept.
  std::map<std::tuple<std::string, std::string, std::uint64_t>, std::uint64_t> first_kappa;
  for (const auto& r : records) {
    const bool kappa_free = r.method == "mle" || r.method == "score_matching";
    if (kappa_free) {
      const auto [it, inserted] = first_kappa.try_emplace({r.model, r.method, r.n}, r.kappa);
      if (!inserted && it->second != r.kappa) continue;
    }
    const std::string label = kappa_free ? r.method : r.method + " k=" + std::to_string(r.kappa);
    auto& list = models[r.model];
    auto it = std::find_if(list.begin(), list.end(), [&](const SeriesData& s) { return s.label == label; });
    if (it == list.end()) {
      list.push_back({label, {}});
      it = std::prev(list.end());
    }
    it->by_n[r.n].push_back(r.sq_error);
  }

  for (const auto& [model, list] : models) {
    Chart chart{model + ": estimation error", x_label, y_label, {}};
    for (const auto& s : list) {
      ChartSeries cs;
      cs.label = s.label;
      for (const auto& [n, values] : s.by_n) {
        cs.x.push_back(std::log10(static_cast<double>(n)));
        cs.median.push_back(std::log10(quantile(values, 0.5)));
        cs.q10.push_back(std::log10(quantile(values, 0.1)));
        cs.q90.push_back(std::log10(quantile(values, 0.9)));
      }
      chart.series.push_back(std::move(cs));
    }
    files["errors_" + model + ".svg"] = render_svg(chart);
  }
  return files;
}

}  // namespace cnce
