#pragma once

#include <string>
#include <vector>

namespace groundcheck {

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

CsvTable parse_csv(const std::string& text);
CsvTable load_csv(const std::string& path);

// Renders a fixed-canvas SVG line chart: the first column is the x axis,
// every other column becomes one polyline. Cells may be "n/a" (the point
// is skipped). Output is byte-deterministic: no timestamps, fixed float
// formatting. Non-numeric cells raise FormatError naming row and column.
std::string plot_csv_to_svg(const CsvTable& table);

}  // namespace groundcheck
