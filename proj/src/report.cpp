// SPDX-License-Identifier: Apache-2.0
#include "nilm/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nilm/text.hpp"

namespace nilm {

std::string Table::to_text() const {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string cell = c < cells.size() ? cells[c] : "";
      if (c) out += "  ";
      out += cell + std::string(width[c] - cell.size(), ' ');
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out;
  if (!title.empty()) out += title + "\n";
  out += line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') + "\n";
  for (const auto& row : rows) out += line(row);
  return out;
}

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string Table::to_csv() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out += (c ? "," : "") + csv_cell(cells[c]);
    out += "\n";
  };
  line(header);
  for (const auto& row : rows) line(row);
  return out;
}

Table confusion_table(const ConfusionCounts& c) {
  Table t;
  t.title = "Confusion matrix";
  t.header = {"predicted \\ real", "positive", "negative"};
  t.rows = {{"positive", std::to_string(c.tp), std::to_string(c.fp)},
            {"negative", std::to_string(c.fn), std::to_string(c.tn)}};
  return t;
}

Table metrics_table(const std::vector<NamedMetrics>& rows) {
  Table t;
  t.title = "Performance comparison";
  t.header = {"model", "ACC (%)", "F1-score", "MCC"};
  for (const auto& r : rows) {
    t.rows.push_back({r.name, format_fixed(100.0 * r.report.acc, 2), format_fixed(r.report.f1, 4),
                      format_fixed(r.report.mcc, 4)});
  }
  return t;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 150, kTop = 40, kBottom = 60;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Axis {
  double lo, hi;

  double to(double v, double from_px, double to_px) const {
    return from_px + (v - lo) / (hi - lo) * (to_px - from_px);
  }
};

Axis padded_axis(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string fmt(double v) { return format_fixed(v, 2); }

std::string svg_header(const std::string& title) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"16\">" << xml_escape(title) << "</text>\n";
  return out.str();
}

void draw_frame(std::ostringstream& out, const std::string& x_label, const std::string& y_label, const Axis& y) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  out << "<g stroke=\"black\" stroke-width=\"1\">\n"
      << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\"/>\n"
      << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\"/>\n"
      << "</g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = y.to(v, y0, y1);
    out << "<line x1=\"" << x0 - 4 << "\" y1=\"" << fmt(py) << "\" x2=\"" << x0 << "\" y2=\"" << fmt(py)
        << "\" stroke=\"black\"/>\n"
        << "<text x=\"" << x0 - 8 << "\" y=\"" << fmt(py + 4) << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << format_fixed(v, 3) << "</text>\n";
  }
  out << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 15
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << xml_escape(x_label)
      << "</text>\n"
      << "<text x=\"18\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"13\" transform=\"rotate(-90 18 " << (y0 + y1) / 2 << ")\">" << xml_escape(y_label)
      << "</text>\n";
}

void draw_legend(std::ostringstream& out, const std::vector<PlotSeries>& series) {
  const double x = kWidth - kRight + 15;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 10 + 20.0 * static_cast<double>(i);
    out << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[i % 6]
        << "\"/>\n"
        << "<text x=\"" << x + 18 << "\" y=\"" << y + 2 << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << xml_escape(series[i].name) << "</text>\n";
  }
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      xlo = std::min(xlo, x);
      xhi = std::max(xhi, x);
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    }
  }
  if (!std::isfinite(xlo)) xlo = xhi = ylo = yhi = 0.0;
  const Axis xa = padded_axis(xlo, xhi), ya = padded_axis(ylo, yhi);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;

  std::ostringstream out;
  out << svg_header(title);
  draw_frame(out, x_label, y_label, ya);
  for (int i = 0; i <= 4; ++i) {
    const double v = xa.lo + (xa.hi - xa.lo) * i / 4.0;
    const double px = xa.to(v, x0, x1);
    out << "<text x=\"" << fmt(px) << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << format_fixed(v, 1) << "</text>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << "<polyline fill=\"none\" stroke=\"" << kPalette[i % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t j = 0; j < series[i].points.size(); ++j) {
      const auto& [x, y] = series[i].points[j];
      out << (j ? " " : "") << fmt(xa.to(x, x0, x1)) << "," << fmt(ya.to(y, y0, y1));
    }
    out << "\"/>\n";
  }
  draw_legend(out, series);
  out << "</svg>\n";
  return out.str();
}

std::string svg_bar_chart(const std::string& title, const std::string& y_label,
                          const std::vector<std::string>& categories, const std::vector<PlotSeries>& series) {
  double ylo = std::numeric_limits<double>::infinity(), yhi = -ylo;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      ylo = std::min(ylo, p.second);
      yhi = std::max(yhi, p.second);
    }
  }
  if (!std::isfinite(ylo)) ylo = yhi = 0.0;
  const Axis ya = padded_axis(ylo, yhi);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  const double group = (x1 - x0) / static_cast<double>(std::max<std::size_t>(categories.size(), 1));
  const double bar = 0.8 * group / static_cast<double>(std::max<std::size_t>(series.size(), 1));

  std::ostringstream out;
  out << svg_header(title);
  draw_frame(out, "", y_label, ya);
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = x0 + group * static_cast<double>(c);
    out << "<text x=\"" << fmt(gx + group / 2) << "\" y=\"" << y0 + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(categories[c])
        << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (c >= series[s].points.size()) continue;
      const double top = ya.to(series[s].points[c].second, y0, y1);
      out << "<rect x=\"" << fmt(gx + 0.1 * group + bar * static_cast<double>(s)) << "\" y=\"" << fmt(top)
          << "\" width=\"" << fmt(bar) << "\" height=\"" << fmt(y0 - top) << "\" fill=\"" << kPalette[s % 6]
          << "\"/>\n";
    }
  }
  draw_legend(out, series);
  out << "</svg>\n";
  return out.str();
}

}  // namespace nilm
