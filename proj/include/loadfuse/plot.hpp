#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace loadfuse {

// Data-first plot emission: aligned series as CSV, plus an optional
// self-contained SVG line chart for quick inspection.

inline void write_series_csv(
    std::ostream& out, const std::vector<std::string>& timestamps,
    const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  out << "timestamp";
  for (const auto& [name, v] : series) out << ',' << name;
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    out << timestamps[i];
    for (const auto& [name, v] : series) {
      out << ',';
      if (i < v.size() && std::isfinite(v[i])) {
        std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
        out << buf;
      }
    }
    out << '\n';
  }
}

inline void write_line_chart_svg(
    std::ostream& out, const std::string& title,
    const std::vector<std::pair<std::string, std::vector<double>>>& series,
    int width = 960, int height = 320) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                   "#ff7f0e", "#9467bd", "#8c564b"};
  double lo = 0.0, hi = 1.0;
  std::size_t n = 0;
  bool first = true;
  for (const auto& [name, v] : series) {
    n = std::max(n, v.size());
    for (double y : v) {
      if (!std::isfinite(y)) continue;
      if (first) {
        lo = hi = y;
        first = false;
      }
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  if (hi <= lo) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const int mleft = 50, mtop = 30, mbot = 20, mright = 10;
  const double pw = width - mleft - mright, ph = height - mtop - mbot;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << mleft << "\" y=\"18\" font-family=\"sans-serif\" "
         "font-size=\"13\">" << title << "</text>\n";
  char buf[64];
  for (int g = 0; g <= 4; ++g) {
    const double y = mtop + ph * g / 4.0;
    const double val = hi - (hi - lo) * g / 4.0;
    out << "<line x1=\"" << mleft << "\" y1=\"" << y << "\" x2=\""
        << (width - mright) << "\" y2=\"" << y
        << "\" stroke=\"#dddddd\"/>\n";
    std::snprintf(buf, sizeof(buf), "%.3g", val);
    out << "<text x=\"4\" y=\"" << y + 4
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << buf
        << "</text>\n";
  }
  int ci = 0;
  for (const auto& [name, v] : series) {
    const char* color = kPalette[ci % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) continue;
      const double x = mleft + pw * (n > 1 ? (double)i / (n - 1) : 0.5);
      const double y = mtop + ph * (hi - v[i]) / (hi - lo);
      std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", x, y);
      out << buf;
    }
    out << "\"/>\n";
    out << "<text x=\"" << mleft + 8 + 110 * ci << "\" y=\""
        << height - 6 << "\" font-family=\"sans-serif\" font-size=\"11\" "
        << "fill=\"" << color << "\">" << name << "</text>\n";
    ++ci;
  }
  out << "</svg>\n";
}

}  // namespace loadfuse
