#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

// Small hand-rolled SVG charts: line plots, ROC-style curves, a confusion
// heatmap and grouped bars. Plots are derived artifacts; nothing here feeds
// back into reports.
namespace mpnet::svg {

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors = {
      "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
      "#8c564b", "#17becf", "#e377c2", "#7f7f7f", "#bcbd22"};
  return colors;
}

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
  std::string color;       // picked from the palette when empty
  double opacity = 1.0;
  bool in_legend = true;
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

struct Frame {
  double width = 640, height = 420;
  double left = 60, right = 20, top = 36, bottom = 46;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

  double px(double x) const {
    return left + (x - x_min) / (x_max - x_min) * (width - left - right);
  }
  double py(double y) const {
    return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom);
  }
};

inline void open_svg(std::ostringstream& os, const Frame& f, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\""
     << f.height << "\" viewBox=\"0 0 " << f.width << " " << f.height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
     << title << "</text>\n";
}

inline void axes(std::ostringstream& os, const Frame& f, const std::string& x_label,
                 const std::string& y_label, int ticks = 5) {
  os << "<g stroke=\"#333\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"10\">\n";
  os << "<line x1=\"" << f.left << "\" y1=\"" << f.height - f.bottom << "\" x2=\""
     << f.width - f.right << "\" y2=\"" << f.height - f.bottom << "\"/>\n";
  os << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left << "\" y2=\""
     << f.height - f.bottom << "\"/>\n";
  for (int i = 0; i <= ticks; ++i) {
    const double tx = f.x_min + (f.x_max - f.x_min) * i / ticks;
    const double ty = f.y_min + (f.y_max - f.y_min) * i / ticks;
    os << "<line x1=\"" << f.px(tx) << "\" y1=\"" << f.height - f.bottom << "\" x2=\"" << f.px(tx)
       << "\" y2=\"" << f.height - f.bottom + 4 << "\"/>\n";
    os << "<text x=\"" << f.px(tx) << "\" y=\"" << f.height - f.bottom + 16
       << "\" text-anchor=\"middle\" stroke=\"none\">" << fmt(tx) << "</text>\n";
    os << "<line x1=\"" << f.left - 4 << "\" y1=\"" << f.py(ty) << "\" x2=\"" << f.left << "\" y2=\""
       << f.py(ty) << "\"/>\n";
    os << "<text x=\"" << f.left - 8 << "\" y=\"" << f.py(ty) + 3
       << "\" text-anchor=\"end\" stroke=\"none\">" << fmt(ty) << "</text>\n";
  }
  os << "<text x=\"" << (f.left + f.width - f.right) / 2 << "\" y=\"" << f.height - 8
     << "\" text-anchor=\"middle\" stroke=\"none\" font-size=\"12\">" << x_label << "</text>\n";
  os << "<text x=\"14\" y=\"" << (f.top + f.height - f.bottom) / 2
     << "\" text-anchor=\"middle\" stroke=\"none\" font-size=\"12\" transform=\"rotate(-90 14 "
     << (f.top + f.height - f.bottom) / 2 << ")\">" << y_label << "</text>\n";
  os << "</g>\n";
}

inline void legend(std::ostringstream& os, const Frame& f,
                   const std::vector<std::pair<std::string, std::string>>& entries) {
  double y = f.top + 6;
  for (const auto& [name, color] : entries) {
    const double x = f.width - f.right - 150;
    os << "<line x1=\"" << x << "\" y1=\"" << y << "\" x2=\"" << x + 18 << "\" y2=\"" << y
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << x + 24 << "\" y=\"" << y + 3
       << "\" font-family=\"sans-serif\" font-size=\"10\">" << name << "</text>\n";
    y += 14;
  }
}

}  // namespace detail

// Generic multi-series line chart; axes autoscale to the data unless fixed
// bounds are supplied.
inline std::string line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, std::vector<Series> series,
                              std::optional<std::pair<double, double>> y_bounds = {}) {
  detail::Frame f;
  f.x_min = 1e300;
  f.x_max = -1e300;
  f.y_min = 1e300;
  f.y_max = -1e300;
  for (const Series& s : series) {
    for (auto [x, y] : s.points) {
      f.x_min = std::min(f.x_min, x);
      f.x_max = std::max(f.x_max, x);
      f.y_min = std::min(f.y_min, y);
      f.y_max = std::max(f.y_max, y);
    }
  }
  if (f.x_min > f.x_max) { f.x_min = 0; f.x_max = 1; }
  if (f.y_min > f.y_max) { f.y_min = 0; f.y_max = 1; }
  if (y_bounds) { f.y_min = y_bounds->first; f.y_max = y_bounds->second; }
  if (f.x_max == f.x_min) f.x_max = f.x_min + 1;
  if (f.y_max == f.y_min) f.y_max = f.y_min + 1;

  std::ostringstream os;
  detail::open_svg(os, f, title);
  detail::axes(os, f, x_label, y_label);
  std::vector<std::pair<std::string, std::string>> legend_entries;
  std::size_t color_at = 0;
  for (Series& s : series) {
    if (s.color.empty()) s.color = palette()[color_at++ % palette().size()];
    if (s.points.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" stroke-opacity=\""
       << s.opacity << "\" points=\"";
    for (auto [x, y] : s.points) os << detail::fmt(f.px(x)) << "," << detail::fmt(f.py(y)) << " ";
    os << "\"/>\n";
    if (s.in_legend) legend_entries.emplace_back(s.name, s.color);
  }
  detail::legend(os, f, legend_entries);
  os << "</svg>\n";
  return os.str();
}

// Confusion heatmap: rows true class, columns predicted.
inline std::string confusion_heatmap(const std::string& title,
                                     const std::vector<std::string>& classes,
                                     const std::vector<std::vector<long>>& counts) {
  const std::size_t C = classes.size();
  const double cell = std::max(40.0, 280.0 / static_cast<double>(C));
  const double left = 110, top = 70;
  const double width = left + cell * static_cast<double>(C) + 30;
  const double height = top + cell * static_cast<double>(C) + 40;
  long max_count = 1;
  for (const auto& row : counts)
    for (long v : row) max_count = std::max(max_count, v);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
     << title << "</text>\n";
  for (std::size_t i = 0; i < C; ++i) {
    for (std::size_t j = 0; j < C; ++j) {
      const double frac = static_cast<double>(counts[i][j]) / static_cast<double>(max_count);
      const int blue = static_cast<int>(255 - 175 * frac);
      const int rg = static_cast<int>(255 - 215 * frac);
      os << "<rect x=\"" << left + cell * static_cast<double>(j) << "\" y=\"" << top + cell * static_cast<double>(i)
         << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << rg << "," << rg
         << "," << blue << ")\" stroke=\"#999\"/>\n";
      os << "<text x=\"" << left + cell * (static_cast<double>(j) + 0.5) << "\" y=\""
         << top + cell * (static_cast<double>(i) + 0.5) + 4
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" fill=\""
         << (frac > 0.55 ? "white" : "black") << "\">" << counts[i][j] << "</text>\n";
    }
    os << "<text x=\"" << left - 6 << "\" y=\"" << top + cell * (static_cast<double>(i) + 0.5) + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << classes[i] << "</text>\n";
    os << "<text x=\"" << left + cell * (static_cast<double>(i) + 0.5) << "\" y=\"" << top - 8
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << classes[i] << "</text>\n";
  }
  os << "<text x=\"" << left + cell * static_cast<double>(C) / 2 << "\" y=\"" << top - 28
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">predicted</text>\n";
  os << "<text x=\"24\" y=\"" << top + cell * static_cast<double>(C) / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 24 "
     << top + cell * static_cast<double>(C) / 2 << ")\">true</text>\n";
  os << "</svg>\n";
  return os.str();
}

// Grouped bars (two groups per category), for side-by-side accuracy
// comparisons.
inline std::string grouped_bars(const std::string& title, const std::string& y_label,
                                const std::vector<std::string>& categories,
                                const std::pair<std::string, std::vector<double>>& a,
                                const std::pair<std::string, std::vector<double>>& b) {
  detail::Frame f;
  f.width = std::max(480.0, 90.0 * static_cast<double>(categories.size()) + 120.0);
  f.x_min = 0;
  f.x_max = static_cast<double>(categories.size());
  f.y_min = 0;
  f.y_max = 100;
  std::ostringstream os;
  detail::open_svg(os, f, title);
  detail::axes(os, f, "", y_label);
  const double slot = (f.width - f.left - f.right) / static_cast<double>(categories.size());
  const double bar = slot * 0.32;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const double cx = f.left + slot * (static_cast<double>(i) + 0.5);
    const double va = a.second[i], vb = b.second[i];
    os << "<rect x=\"" << cx - bar << "\" y=\"" << f.py(va) << "\" width=\"" << bar
       << "\" height=\"" << f.py(0) - f.py(va) << "\" fill=\"" << palette()[0] << "\"/>\n";
    os << "<rect x=\"" << cx << "\" y=\"" << f.py(vb) << "\" width=\"" << bar << "\" height=\""
       << f.py(0) - f.py(vb) << "\" fill=\"" << palette()[1] << "\"/>\n";
    os << "<text x=\"" << cx << "\" y=\"" << f.height - f.bottom + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << categories[i]
       << "</text>\n";
  }
  detail::legend(os, f, {{a.first, palette()[0]}, {b.first, palette()[1]}});
  os << "</svg>\n";
  return os.str();
}

}  // namespace mpnet::svg
