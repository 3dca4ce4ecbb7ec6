#pragma once

#include <string>
#include <vector>

namespace redlab {

// One line with an optional shaded band around it.
struct SvgSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> band_lo;  // empty = no band
  std::vector<double> band_hi;
  std::string color = "#1f6fb2";
  std::string label;
};

// Self-contained line chart; data-first consumers should use the CSV exports.
std::string render_svg(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<SvgSeries>& series);

}  // namespace redlab
