#include "groundcheck/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "groundcheck/errors.hpp"

namespace groundcheck {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMarginLeft = 60;
constexpr int kMarginRight = 140;
constexpr int kMarginTop = 20;
constexpr int kMarginBottom = 40;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf"};

std::string fnum(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::optional<double> parse_cell(const std::string& cell, std::size_t row,
                                 const std::string& column) {
  if (cell == "n/a" || cell.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw FormatError("non-numeric cell '" + cell + "' at row " +
                      std::to_string(row) + ", column '" + column + "'");
  }
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (header) {
      table.columns = std::move(cells);
      header = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

CsvTable load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_csv(text);
}

std::string plot_csv_to_svg(const CsvTable& table) {
  if (table.columns.size() < 2)
    throw FormatError("plot needs an x column and at least one series");
  if (table.rows.empty()) throw FormatError("plot: no data rows");

  const std::size_t n_series = table.columns.size() - 1;
  std::vector<double> xs;
  std::vector<std::vector<std::optional<double>>> series(n_series);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.columns.size())
      throw FormatError("row " + std::to_string(r + 1) + " has " +
                        std::to_string(row.size()) + " cells, expected " +
                        std::to_string(table.columns.size()));
    const auto x = parse_cell(row[0], r + 1, table.columns[0]);
    if (!x)
      throw FormatError("non-numeric cell '" + row[0] + "' at row " +
                        std::to_string(r + 1) + ", column '" + table.columns[0] + "'");
    xs.push_back(*x);
    for (std::size_t s = 0; s < n_series; ++s)
      series[s].push_back(parse_cell(row[s + 1], r + 1, table.columns[s + 1]));
  }

  double x_min = xs[0], x_max = xs[0];
  for (double x : xs) {
    x_min = std::min(x_min, x);
    x_max = std::max(x_max, x);
  }
  double y_min = 0.0, y_max = 0.0;
  bool any = false;
  for (const auto& s : series) {
    for (const auto& v : s) {
      if (!v) continue;
      if (!any) {
        y_min = y_max = *v;
        any = true;
      } else {
        y_min = std::min(y_min, *v);
        y_max = std::max(y_max, *v);
      }
    }
  }
  if (!any) throw FormatError("plot: every series cell is n/a");
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_max = y_min + 1.0;

  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  auto px = [&](double x) {
    return kMarginLeft + (x - x_min) / (x_max - x_min) * plot_w;
  };
  auto py = [&](double y) {
    return kMarginTop + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  svg << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n";
  // axes
  svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop + plot_h
      << "\" x2=\"" << kMarginLeft + plot_w << "\" y2=\"" << kMarginTop + plot_h
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\""
      << kMarginLeft << "\" y2=\"" << kMarginTop + plot_h
      << "\" stroke=\"black\"/>\n";
  // axis labels
  svg << "<text x=\"" << fnum(kMarginLeft) << "\" y=\""
      << fnum(kMarginTop + plot_h + 24) << "\" font-size=\"12\">" << fnum(x_min)
      << "</text>\n";
  svg << "<text x=\"" << fnum(kMarginLeft + plot_w - 20) << "\" y=\""
      << fnum(kMarginTop + plot_h + 24) << "\" font-size=\"12\">" << fnum(x_max)
      << "</text>\n";
  svg << "<text x=\"4\" y=\"" << fnum(kMarginTop + plot_h) << "\" font-size=\"12\">"
      << fnum(y_min) << "</text>\n";
  svg << "<text x=\"4\" y=\"" << fnum(kMarginTop + 10) << "\" font-size=\"12\">"
      << fnum(y_max) << "</text>\n";
  svg << "<text x=\"" << fnum(kMarginLeft + plot_w / 2 - 20) << "\" y=\""
      << fnum(kMarginTop + plot_h + 34) << "\" font-size=\"12\">"
      << table.columns[0] << "</text>\n";

  for (std::size_t s = 0; s < n_series; ++s) {
    const char* color = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::ostringstream points;
    bool first = true;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!series[s][i]) continue;
      if (!first) points << " ";
      points << fnum(px(xs[i])) << "," << fnum(py(*series[s][i]));
      first = false;
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"" << points.str() << "\"/>\n";
    // legend
    const double ly = kMarginTop + 16.0 * (static_cast<double>(s) + 1.0);
    svg << "<line x1=\"" << fnum(kMarginLeft + plot_w + 10) << "\" y1=\""
        << fnum(ly - 4) << "\" x2=\"" << fnum(kMarginLeft + plot_w + 30)
        << "\" y2=\"" << fnum(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n";
    svg << "<text x=\"" << fnum(kMarginLeft + plot_w + 34) << "\" y=\"" << fnum(ly)
        << "\" font-size=\"12\">" << table.columns[s + 1] << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace groundcheck
