// SPDX-License-Identifier: Apache-2.0
#include "langtrack/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace langtrack {
namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 24;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 48;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;

  double place(double v, double px_lo, double px_hi) const {
    const double t = hi == lo ? 0.5 : (v - lo) / (hi - lo);
    return px_lo + t * (px_hi - px_lo);
  }
};

Range pad_range(double lo, double hi) {
  if (lo > hi) std::swap(lo, hi);
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return Range{lo - pad, hi + pad};
}

void open_svg(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
     << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
     << kHeight << "\">\n";
  os << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"16\">"
     << escape(title) << "</text>\n";
}

void draw_axes(std::ostringstream& os) {
  const int x0 = kMarginLeft;
  const int x1 = kWidth - kMarginRight;
  const int y0 = kHeight - kMarginBottom;
  const int y1 = kMarginTop;
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1
     << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0
     << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
}

void axis_text(std::ostringstream& os, double x, double y,
               const std::string& anchor, const std::string& text) {
  os << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" text-anchor=\""
     << anchor << "\" font-family=\"sans-serif\" font-size=\"12\">"
     << escape(text) << "</text>\n";
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<Series>& series) {
  if (series.empty()) throw std::runtime_error("svg_line_chart: no series");
  double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
  bool seen = false;
  for (const Series& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!seen) {
        xlo = xhi = x;
        ylo = yhi = y;
        seen = true;
      }
      xlo = std::min(xlo, x);
      xhi = std::max(xhi, x);
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    }
  }
  if (!seen) throw std::runtime_error("svg_line_chart: no points");
  const Range xr = pad_range(xlo, xhi);
  const Range yr = pad_range(ylo, yhi);
  const double px0 = kMarginLeft, px1 = kWidth - kMarginRight;
  const double py0 = kHeight - kMarginBottom, py1 = kMarginTop;

  std::ostringstream os;
  open_svg(os, title);
  draw_axes(os);
  axis_text(os, (px0 + px1) / 2, kHeight - 12, "middle", x_label);
  axis_text(os, 16, (py0 + py1) / 2, "middle",
            y_label);  // plain horizontal label keeps the markup simple
  axis_text(os, px0, py0 + 16, "middle", fmt(xlo));
  axis_text(os, px1, py0 + 16, "middle", fmt(xhi));
  axis_text(os, px0 - 6, py0, "end", fmt(ylo));
  axis_text(os, px0 - 6, py1 + 4, "end", fmt(yhi));

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % kPaletteSize];
    std::ostringstream pts;
    for (const auto& [x, y] : series[i].points) {
      pts << fmt(xr.place(x, px0, px1)) << "," << fmt(yr.place(y, py0, py1))
          << " ";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
    const double ly = kMarginTop + 14.0 * static_cast<double>(i);
    os << "<line x1=\"" << px1 - 110 << "\" y1=\"" << fmt(ly) << "\" x2=\""
       << px1 - 90 << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
       << "\" stroke-width=\"1.5\"/>\n";
    axis_text(os, px1 - 84, ly + 4, "start", series[i].name);
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_bar_chart(const std::string& title, const std::string& y_label,
                          const std::vector<std::pair<std::string, double>>& bars) {
  if (bars.empty()) throw std::runtime_error("svg_bar_chart: no bars");
  double hi = 0.0;
  double lo = 0.0;
  for (const auto& [name, v] : bars) {
    hi = std::max(hi, v);
    lo = std::min(lo, v);
  }
  const Range yr = pad_range(std::min(0.0, lo), hi == 0.0 ? 1.0 : hi);
  const double px0 = kMarginLeft, px1 = kWidth - kMarginRight;
  const double py0 = kHeight - kMarginBottom, py1 = kMarginTop;

  std::ostringstream os;
  open_svg(os, title);
  draw_axes(os);
  axis_text(os, 16, (py0 + py1) / 2, "middle", y_label);
  axis_text(os, px0 - 6, py0, "end", fmt(yr.lo));
  axis_text(os, px0 - 6, py1 + 4, "end", fmt(yr.hi));

  const double slot = (px1 - px0) / static_cast<double>(bars.size());
  const double bar_w = slot * 0.6;
  const double base = yr.place(0.0, py0, py1);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double cx = px0 + slot * (static_cast<double>(i) + 0.5);
    const double top = yr.place(bars[i].second, py0, py1);
    const double y = std::min(top, base);
    const double h = std::fabs(base - top);
    os << "<rect x=\"" << fmt(cx - bar_w / 2) << "\" y=\"" << fmt(y)
       << "\" width=\"" << fmt(bar_w) << "\" height=\"" << fmt(h)
       << "\" fill=\"" << kPalette[i % kPaletteSize] << "\"/>\n";
    axis_text(os, cx, py0 + 16, "middle", bars[i].first);
    axis_text(os, cx, y - 4, "middle", fmt(bars[i].second));
  }
  os << "</svg>\n";
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << content;
  if (!f) throw std::runtime_error("write failed for " + path);
}

}  // namespace langtrack
