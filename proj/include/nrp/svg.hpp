#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nrp/roadmap.hpp"
#include "nrp/robot.hpp"
#include "nrp/world.hpp"

namespace nrp {

namespace detail {

// Shortest round-trip decimal form, shared by SVG and CSV emission so
// repeated runs produce byte-identical artifacts.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::logic_error("format_double: to_chars failed");
  return std::string(buf, p);
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
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

}  // namespace detail

// Tag-at-a-time SVG document builder. Every attribute value is written
// through format_double or xml_escape, which is all the well-formedness
// the emitted subset of SVG needs.
struct SvgCanvas {
  double width, height;
  std::ostringstream body;

  SvgCanvas(double w, double h) : width(w), height(h) {}

  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "none") {
    body << "  <rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
         << "\" height=\"" << num(h) << "\" fill=\"" << esc(fill) << "\" stroke=\"" << esc(stroke)
         << "\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double stroke_width = 1.0) {
    body << "  <line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
         << "\" y2=\"" << num(y2) << "\" stroke=\"" << esc(stroke) << "\" stroke-width=\""
         << num(stroke_width) << "\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                double stroke_width = 1.5) {
    body << "  <polyline fill=\"none\" stroke=\"" << esc(stroke) << "\" stroke-width=\""
         << num(stroke_width) << "\" points=\"";
    for (size_t i = 0; i < pts.size(); ++i) {
      if (i) body << ' ';
      body << num(pts[i].first) << ',' << num(pts[i].second);
    }
    body << "\"/>\n";
  }

  void circle(double cx, double cy, double r, const std::string& fill) {
    body << "  <circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r)
         << "\" fill=\"" << esc(fill) << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, double size = 12.0,
            const std::string& fill = "#333333") {
    body << "  <text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << num(size)
         << "\" font-family=\"sans-serif\" fill=\"" << esc(fill) << "\">" << esc(s) << "</text>\n";
  }

  std::string str() const {
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
        << num(height) << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height) << "\">\n"
        << body.str() << "</svg>\n";
    return out.str();
  }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("svg: cannot open " + path);
    f << str();
    if (!f) throw std::runtime_error("svg: write failed: " + path);
  }

 private:
  static std::string num(double v) { return detail::format_double(v); }
  static std::string esc(const std::string& s) { return detail::xml_escape(s); }
};

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> pts;  // (x, y), x ascending
};

namespace detail {

inline const std::vector<std::string>& chart_palette() {
  static const std::vector<std::string> colors = {"#1f77b4", "#d62728", "#2ca02c",
                                                  "#9467bd", "#ff7f0e", "#8c564b"};
  return colors;
}

// Round tick spacing to 1/2/5 times a power of ten.
inline double nice_step(double span, int target_ticks) {
  if (span <= 0) return 1.0;
  double raw = span / std::max(1, target_ticks);
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double m = raw / mag;
  double f = m < 1.5 ? 1.0 : (m < 3.5 ? 2.0 : (m < 7.5 ? 5.0 : 10.0));
  return f * mag;
}

}  // namespace detail

// Static line chart: fixed canvas, axes with 1/2/5 ticks, a legend entry
// per series. Non-finite points are skipped. Empty input yields an
// axes-only chart over a default [0, 1] range.
inline void write_line_chart(const std::string& path, const std::string& title,
                             const std::string& x_label, const std::string& y_label,
                             const std::vector<Series>& series) {
  const double W = 640, H = 440, ml = 62, mr = 14, mt = 34, mb = 48;
  double x_lo = kInf, x_hi = -kInf, y_lo = kInf, y_hi = -kInf;
  for (const Series& s : series)
    for (auto [x, y] : s.pts) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x_lo = std::min(x_lo, x), x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y), y_hi = std::max(y_hi, y);
    }
  if (!(x_lo < x_hi)) x_lo = std::isfinite(x_lo) ? x_lo - 0.5 : 0.0, x_hi = x_lo + 1.0;
  if (!(y_lo < y_hi)) y_lo = std::isfinite(y_lo) ? y_lo - 0.5 : 0.0, y_hi = y_lo + 1.0;
  y_hi += (y_hi - y_lo) * 0.05;  // headroom so the top of a curve is not clipped

  auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - y_lo) / (y_hi - y_lo) * (H - mt - mb); };

  SvgCanvas c(W, H);
  c.rect(0, 0, W, H, "#ffffff");
  c.text(ml, mt - 14, title, 15.0, "#111111");
  c.line(ml, H - mb, W - mr, H - mb, "#444444");
  c.line(ml, mt, ml, H - mb, "#444444");

  double xs = detail::nice_step(x_hi - x_lo, 6);
  for (double t = std::ceil(x_lo / xs) * xs; t <= x_hi + 1e-9 * xs; t += xs) {
    c.line(px(t), H - mb, px(t), H - mb + 4, "#444444");
    c.text(px(t) - 10, H - mb + 18, detail::format_double(std::round(t / xs) * xs), 11.0);
  }
  double ys = detail::nice_step(y_hi - y_lo, 5);
  for (double t = std::ceil(y_lo / ys) * ys; t <= y_hi + 1e-9 * ys; t += ys) {
    c.line(ml - 4, py(t), ml, py(t), "#444444");
    c.text(8, py(t) + 4, detail::format_double(std::round(t / ys) * ys), 11.0);
  }
  c.text((W - ml - mr) / 2 + ml - 20, H - 10, x_label, 12.0);
  c.text(8, mt - 6, y_label, 12.0);

  const auto& palette = detail::chart_palette();
  for (size_t i = 0; i < series.size(); ++i) {
    std::vector<std::pair<double, double>> pts;
    for (auto [x, y] : series[i].pts)
      if (std::isfinite(x) && std::isfinite(y)) pts.emplace_back(px(x), py(y));
    const std::string& color = palette[i % palette.size()];
    if (!pts.empty()) c.polyline(pts, color, 1.8);
    for (auto [x, y] : pts) c.circle(x, y, 2.4, color);
    double ly = mt + 16 + 16 * double(i);
    c.line(W - mr - 150, ly - 4, W - mr - 126, ly - 4, color, 2.5);
    c.text(W - mr - 120, ly, series[i].name, 12.0);
  }
  c.write(path);
}

// Top-down rendering of a run: obstacles as merged cell runs, the base
// trajectory and the end-effector trajectory as one polyline each, start
// and goal marked. Both polylines have exactly one vertex per path
// waypoint.
inline void write_env_path_svg(const std::string& path, const OccupancyGrid& g,
                               const SnakeModel& model, const Path& plan, double scale = 80.0) {
  double W = g.width * g.resolution * scale, H = g.height * g.resolution * scale;
  auto px = [&](double x) { return (x - g.min_x()) * scale; };
  auto py = [&](double y) { return H - (y - g.min_y()) * scale; };  // y up

  SvgCanvas c(W, H);
  c.rect(0, 0, W, H, "#ffffff", "#999999");
  double cell = g.resolution * scale;
  for (int iy = 0; iy < g.height; ++iy) {
    for (int ix = 0; ix < g.width; ++ix) {
      if (!g.at(ix, iy)) continue;
      int run = ix;
      while (run < g.width && g.at(run, iy)) ++run;
      c.rect(ix * cell, H - (iy + 1) * cell, (run - ix) * cell, cell, "#37474f");
      ix = run;
    }
  }
  std::vector<std::pair<double, double>> base, ee;
  base.reserve(plan.waypoints.size());
  ee.reserve(plan.waypoints.size());
  for (const Config& q : plan.waypoints) {
    Pose pose = forward_kinematics(model, q);
    Vec2 tip = pose.segments.empty() ? pose.base : pose.segments.back().second;
    base.emplace_back(px(pose.base.x), py(pose.base.y));
    ee.emplace_back(px(tip.x), py(tip.y));
  }
  if (!base.empty()) {
    c.polyline(base, "#1565c0", 2.0);
    c.polyline(ee, "#fbc02d", 2.0);
    c.circle(base.front().first, base.front().second, 4.0, "#2e7d32");
    c.circle(base.back().first, base.back().second, 4.0, "#c62828");
  }
  c.write(path);
}

}  // namespace nrp
