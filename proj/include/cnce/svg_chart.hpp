#pragma once

#include <map>
#include <string>
#include <vector>

#include "cnce/experiments.hpp"

namespace cnce {

/// One line group: solid median, dashed q10 and q90. Coordinates are already log10.
struct ChartSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> median;
  std::vector<double> q10;
  std::vector<double> q90;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<ChartSeries> series;
};

/// Standalone SVG 1.1 document. Axis ticks sit on integer powers of ten; with no
/// finite data the axes span [0, 1] on both sides.
std::string render_svg(const Chart& chart);

/// log10 squared error against log10 N, one series per (method, κ); κ-independent
/// methods collapse to one series. Returns file name -> SVG text, one file per model
/// ("errors_<model>.svg"), or a single empty "errors.svg" when there are no records.
std::map<std::string, std::string> render_report(const std::vector<ErrorRecord>& records);

}  // namespace cnce
