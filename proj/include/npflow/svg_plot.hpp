#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace npflow {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label = "t";
  std::string y_label;
  bool log_y = true;
  int width = 720;
  int height = 440;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
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

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace detail

/// Elements of one polyline chart with axes, decade (or linear) ticks and a
/// legend, without the enclosing <svg>. Points that are non-finite, or
/// nonpositive on a log axis, break the line.
inline std::string render_chart(const PlotSpec& spec, const std::vector<Series>& series) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  const double left = 70, right = 170, top = 36, bottom = 48;
  const double pw = spec.width - left - right, ph = spec.height - top - bottom;

  auto ty = [&](double y) { return spec.log_y ? std::log10(y) : y; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!spec.log_y || y > 0.0);
  };

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!usable(s.x[i], s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (!(x0 <= x1)) x0 = 0, x1 = 1;
  if (!(y0 <= y1)) y0 = 0, y1 = 1;
  if (spec.log_y) {
    y0 = std::floor(y0);
    y1 = std::max(std::ceil(y1), y0 + 1);
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;

  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string o;
  o += "<text x=\"" + detail::fmt("%.1f", left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
       detail::svg_escape(spec.title) + "</text>\n";
  o += "<rect x=\"" + detail::fmt("%.1f", left) + "\" y=\"" + detail::fmt("%.1f", top) + "\" width=\"" +
       detail::fmt("%.1f", pw) + "\" height=\"" + detail::fmt("%.1f", ph) +
       "\" fill=\"none\" stroke=\"black\"/>\n";

  // y ticks
  const int ny = spec.log_y ? static_cast<int>(y1 - y0) : 5;
  const int ystride = std::max(1, ny / 8);
  for (int k = 0; k <= ny; k += ystride) {
    const double v = y0 + (y1 - y0) * k / ny;
    const double y = py(v);
    o += "<line x1=\"" + detail::fmt("%.1f", left - 4) + "\" x2=\"" + detail::fmt("%.1f", left) + "\" y1=\"" +
         detail::fmt("%.1f", y) + "\" y2=\"" + detail::fmt("%.1f", y) + "\" stroke=\"black\"/>\n";
    const std::string lab = spec.log_y ? "1e" + std::to_string(static_cast<int>(std::lround(v)))
                                       : detail::fmt("%.3g", v);
    o += "<text x=\"" + detail::fmt("%.1f", left - 7) + "\" y=\"" + detail::fmt("%.1f", y + 4) +
         "\" text-anchor=\"end\">" + lab + "</text>\n";
  }
  // x ticks
  for (int k = 0; k <= 5; ++k) {
    const double v = x0 + (x1 - x0) * k / 5;
    const double x = px(v);
    o += "<line x1=\"" + detail::fmt("%.1f", x) + "\" x2=\"" + detail::fmt("%.1f", x) + "\" y1=\"" +
         detail::fmt("%.1f", top + ph) + "\" y2=\"" + detail::fmt("%.1f", top + ph + 4) + "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + detail::fmt("%.1f", x) + "\" y=\"" + detail::fmt("%.1f", top + ph + 18) +
         "\" text-anchor=\"middle\">" + detail::fmt("%.3g", v) + "</text>\n";
  }
  o += "<text x=\"" + detail::fmt("%.1f", left + pw / 2) + "\" y=\"" + detail::fmt("%.1f", spec.height - 8.0) +
       "\" text-anchor=\"middle\">" + detail::svg_escape(spec.x_label) + "</text>\n";
  o += "<text transform=\"translate(16," + detail::fmt("%.1f", top + ph / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + detail::svg_escape(spec.y_label) + "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    const Series& ser = series[s];
    std::string pts;
    auto flush = [&] {
      if (!pts.empty())
        o += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" +
             pts + "\"/>\n";
      pts.clear();
    };
    const std::size_t n = std::min(ser.x.size(), ser.y.size());
    const std::size_t stride = std::max<std::size_t>(1, n / 2000);  // keep files small
    for (std::size_t i = 0; i < n; i = (i + stride < n || i + 1 == n) ? i + stride : n - 1) {
      if (!usable(ser.x[i], ser.y[i])) {
        flush();
        continue;
      }
      if (!pts.empty()) pts += ' ';
      pts += detail::fmt("%.2f", px(ser.x[i])) + "," + detail::fmt("%.2f", py(ty(ser.y[i])));
    }
    flush();
    const double ly = top + 14 + 18.0 * s;
    o += "<line x1=\"" + detail::fmt("%.1f", left + pw + 12) + "\" x2=\"" + detail::fmt("%.1f", left + pw + 36) +
         "\" y1=\"" + detail::fmt("%.1f", ly) + "\" y2=\"" + detail::fmt("%.1f", ly) + "\" stroke=\"" + color +
         "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"" + detail::fmt("%.1f", left + pw + 42) + "\" y=\"" + detail::fmt("%.1f", ly + 4) + "\">" +
         detail::svg_escape(ser.label) + "</text>\n";
  }
  return o;
}

using Chart = std::pair<PlotSpec, std::vector<Series>>;

/// Charts stacked vertically in one document.
inline std::string render_svg(const std::vector<Chart>& charts) {
  int width = 0, height = 0;
  for (const auto& c : charts) {
    width = std::max(width, c.first.width);
    height += c.first.height;
  }
  std::string o = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
                  "\" height=\"" + std::to_string(height) +
                  "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  int y = 0;
  for (const auto& c : charts) {
    o += "<g transform=\"translate(0," + std::to_string(y) + ")\">\n";
    o += render_chart(c.first, c.second);
    o += "</g>\n";
    y += c.first.height;
  }
  o += "</svg>\n";
  return o;
}

inline std::string render_svg(const PlotSpec& spec, const std::vector<Series>& series) {
  return render_svg(std::vector<Chart>{{spec, series}});
}

}  // namespace npflow
