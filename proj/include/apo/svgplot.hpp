#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace apo::svgplot {

struct Series {
  std::string name;
  std::string color;  // any SVG color
  std::vector<std::pair<double, double>> points;
};

// Self-contained SVG line chart with axes, ticks, and a legend. Series with
// fewer than one point are skipped; an all-empty chart still renders axes.
void write_line_chart(const std::filesystem::path& path,
                      const std::string& title, const std::string& x_label,
                      const std::string& y_label,
                      const std::vector<Series>& series);

}  // namespace apo::svgplot
