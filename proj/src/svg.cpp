#include "redlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "redlab/errors.hpp"

namespace redlab {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<SvgSeries>& series) {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DomainError("svg: x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      double lo = s.y[i], hi = s.y[i];
      if (!s.band_lo.empty()) {
        lo = std::min(lo, s.band_lo[i]);
        hi = std::max(hi, s.band_hi[i]);
      }
      if (first) {
        xmin = xmax = s.x[i];
        ymin = lo;
        ymax = hi;
        first = false;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, lo);
        ymax = std::max(ymax, hi);
      }
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;

  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * (kWidth - kLeft - kRight); };
  auto py = [&](double y) {
    return kHeight - kBottom - (y - ymin) / (ymax - ymin) * (kHeight - kTop - kBottom);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // axes + ticks
  out << "<g stroke=\"#444\" stroke-width=\"1\">\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
      << "\" y2=\"" << kHeight - kBottom << "\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kHeight - kBottom << "\"/>\n";
  out << "</g>\n";
  out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    out << "<line x1=\"" << px(xv) << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << px(xv)
        << "\" y2=\"" << kHeight - kBottom + 4 << "\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << px(xv) << "\" y=\"" << kHeight - kBottom + 16
        << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
    out << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << py(yv) << "\" x2=\"" << kLeft << "\" y2=\""
        << py(yv) << "\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
        << num(yv) << "</text>\n";
  }
  out << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">" << escape_xml(x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (kTop + kHeight - kBottom) / 2
      << ")\">" << escape_xml(y_label) << "</text>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape_xml(title) << "</text>\n";
  out << "</g>\n";

  int label_row = 0;
  for (const auto& s : series) {
    if (!s.band_lo.empty()) {
      out << "<polygon fill=\"" << s.color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        out << num(px(s.x[i])) << "," << num(py(s.band_hi[i])) << " ";
      }
      for (std::size_t i = s.x.size(); i-- > 0;) {
        out << num(px(s.x[i])) << "," << num(py(s.band_lo[i])) << " ";
      }
      out << "\"/>\n";
    }
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out << num(px(s.x[i])) << "," << num(py(s.y[i])) << " ";
    }
    out << "\"/>\n";
    if (!s.label.empty()) {
      const double ly = kTop + 14 * label_row++;
      out << "<rect x=\"" << kWidth - kRight - 150 << "\" y=\"" << ly - 8
          << "\" width=\"10\" height=\"10\" fill=\"" << s.color << "\"/>\n";
      out << "<text x=\"" << kWidth - kRight - 136 << "\" y=\"" << ly + 1
          << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">" << escape_xml(s.label)
          << "</text>\n";
    }
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace redlab
