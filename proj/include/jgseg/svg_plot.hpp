// Copyright (c) 2026 jgseg contributors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal static line charts as SVG files.

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "jgseg/errors.hpp"

namespace jgseg {

struct PlotSeries {
  std::string label;
  std::vector<double> xs, ys;
};

inline void write_svg_plot(const std::string& path, const std::string& title,
                           const std::vector<PlotSeries>& series) {
  const int w = 720, h = 420, ml = 60, mr = 20, mt = 36, mb = 40;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.xs.size(); ++i) {
      if (!std::isfinite(s.ys[i])) continue;
      xmin = std::min(xmin, s.xs[i]);
      xmax = std::max(xmax, s.xs[i]);
      ymin = std::min(ymin, s.ys[i]);
      ymax = std::max(ymax, s.ys[i]);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto X = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto Y = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ofstream os(path);
  if (!os) throw IoError("cannot write plot: " + path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-family='sans-serif' "
        "font-size='14'>"
     << title << "</text>\n";
  os << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
     << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
     << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x='" << ml - 6 << "' y='" << Y(yv) + 4
       << "' text-anchor='end' font-family='sans-serif' font-size='10'>" << yv << "</text>\n";
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    os << "<text x='" << X(xv) << "' y='" << h - mb + 16
       << "' text-anchor='middle' font-family='sans-serif' font-size='10'>" << xv << "</text>\n";
  }
  int ci = 0;
  for (const auto& s : series) {
    os << "<polyline fill='none' stroke='" << colors[ci % 6] << "' stroke-width='1.5' points='";
    for (size_t i = 0; i < s.xs.size(); ++i)
      if (std::isfinite(s.ys[i])) os << X(s.xs[i]) << "," << Y(s.ys[i]) << " ";
    os << "'/>\n";
    os << "<text x='" << w - mr - 4 << "' y='" << mt + 14 * (ci + 1)
       << "' text-anchor='end' font-family='sans-serif' font-size='11' fill='" << colors[ci % 6]
       << "'>" << s.label << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
}

}  // namespace jgseg
