// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nilm/metrics.hpp"

namespace nilm {

/// A table rendered both as aligned text and as CSV.
struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_text() const;
  std::string to_csv() const;
};

/// 2 x 2 confusion layout: predicted positive/negative rows, real positive/negative columns.
Table confusion_table(const ConfusionCounts& counts);

struct NamedMetrics {
  std::string name;
  MetricsReport report;
};

/// Model | ACC (%) | F1-score | MCC
Table metrics_table(const std::vector<NamedMetrics>& rows);

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

/// Standalone SVG line chart with axes, ticks and a legend.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series);

/// Standalone SVG grouped bar chart: one group per category, one bar per series.
std::string svg_bar_chart(const std::string& title, const std::string& y_label,
                          const std::vector<std::string>& categories, const std::vector<PlotSeries>& series);

}  // namespace nilm
