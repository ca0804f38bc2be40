#include "apo/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace apo::svgplot {

namespace {

constexpr double kWidth = 840.0;
constexpr double kHeight = 480.0;
constexpr double kMarginLeft = 70.0;
constexpr double kMarginRight = 20.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 50.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_line_chart(const std::filesystem::path& path,
                      const std::string& title, const std::string& x_label,
                      const std::string& y_label,
                      const std::vector<Series>& series) {
  double x_min = std::numeric_limits<double>::infinity();
  double x_max = -x_min;
  double y_min = x_min;
  double y_max = -x_min;
  for (const Series& s : series) {
    for (const auto& [x, y] : s.points) {
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
      y_min = std::min(y_min, y);
      y_max = std::max(y_max, y);
    }
  }
  const bool has_data = std::isfinite(x_min);
  if (!has_data) {
    x_min = 0.0;
    x_max = 1.0;
    y_min = 0.0;
    y_max = 1.0;
  }
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) {
    y_max += 0.5;
    y_min -= 0.5;
  }
  // Pad the value axis a little so lines do not sit on the frame.
  const double y_pad = 0.05 * (y_max - y_min);
  y_min -= y_pad;
  y_max += y_pad;

  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  const auto sx = [&](double x) {
    return kMarginLeft + (x - x_min) / (x_max - x_min) * plot_w;
  };
  const auto sy = [&](double y) {
    return kMarginTop + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;
  };

  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write svg: " + path.string());
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 "
      << num(kWidth) << ' ' << num(kHeight) << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-size=\"16\">" << escape_xml(title) << "</text>\n";

  // Frame and grid lines with tick labels.
  out << "<rect x=\"" << num(kMarginLeft) << "\" y=\"" << num(kMarginTop)
      << "\" width=\"" << num(plot_w) << "\" height=\"" << num(plot_h)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double fx = x_min + (x_max - x_min) * i / kTicks;
    const double fy = y_min + (y_max - y_min) * i / kTicks;
    out << "<line x1=\"" << num(sx(fx)) << "\" y1=\"" << num(kMarginTop)
        << "\" x2=\"" << num(sx(fx)) << "\" y2=\""
        << num(kMarginTop + plot_h) << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << num(sx(fx)) << "\" y=\""
        << num(kMarginTop + plot_h + 18)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << num(fx)
        << "</text>\n";
    out << "<line x1=\"" << num(kMarginLeft) << "\" y1=\"" << num(sy(fy))
        << "\" x2=\"" << num(kMarginLeft + plot_w) << "\" y2=\"" << num(sy(fy))
        << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << num(kMarginLeft - 6) << "\" y=\""
        << num(sy(fy) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << num(fy)
        << "</text>\n";
  }
  out << "<text x=\"" << num(kMarginLeft + plot_w / 2) << "\" y=\""
      << num(kHeight - 10) << "\" text-anchor=\"middle\" font-size=\"13\">"
      << escape_xml(x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << num(kMarginTop + plot_h / 2)
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
      << num(kMarginTop + plot_h / 2) << ")\">" << escape_xml(y_label)
      << "</text>\n";

  double legend_y = kMarginTop + 14;
  for (const Series& s : series) {
    if (!s.points.empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << s.color
          << "\" stroke-width=\"1.5\" points=\"";
      for (const auto& [x, y] : s.points) {
        out << num(sx(x)) << ',' << num(sy(y)) << ' ';
      }
      out << "\"/>\n";
    }
    out << "<line x1=\"" << num(kMarginLeft + plot_w - 150) << "\" y1=\""
        << num(legend_y - 4) << "\" x2=\"" << num(kMarginLeft + plot_w - 130)
        << "\" y2=\"" << num(legend_y - 4) << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << num(kMarginLeft + plot_w - 124) << "\" y=\""
        << num(legend_y) << "\" font-size=\"12\">" << escape_xml(s.name)
        << "</text>\n";
    legend_y += 16;
  }
  out << "</svg>\n";
  if (!out) {
    throw std::runtime_error("svg write failed: " + path.string());
  }
}

}  // namespace apo::svgplot
