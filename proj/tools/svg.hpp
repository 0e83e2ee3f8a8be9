#pragma once

// Minimal static SVG renderings for `nlpvis export --svg`.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace svg {

using json = nlohmann::json;

struct Box {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  void add(double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  void finish() {
    if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  }
};

inline double num(const json& j) { return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN(); }

class Canvas {
 public:
  Canvas(Box box, double w = 640, double h = 480) : box_(box), w_(w), h_(h) { box_.finish(); }

  double px(double x) const { return pad_ + (x - box_.x0) / (box_.x1 - box_.x0) * (w_ - 2 * pad_); }
  double py(double y) const { return h_ - pad_ - (y - box_.y0) / (box_.y1 - box_.y0) * (h_ - 2 * pad_); }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color, double width = 1.5) {
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width << "\" points=\"";
    for (const auto& [x, y] : pts) {
      if (std::isfinite(x) && std::isfinite(y)) body_ << px(x) << ',' << py(y) << ' ';
    }
    body_ << "\"/>\n";
  }

  void polygon(const json& poly, const std::string& fill, double opacity = 1.0) {
    body_ << "<polygon stroke=\"none\" fill=\"" << fill << "\" fill-opacity=\"" << opacity << "\" points=\"";
    for (const auto& p : poly) body_ << px(num(p[0])) << ',' << py(num(p[1])) << ' ';
    body_ << "\"/>\n";
  }

  void circle(double x, double y, double r, const std::string& color) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    body_ << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"" << r << "\" fill=\"" << color << "\"/>\n";
  }

  void title(const std::string& text) {
    body_ << "<text x=\"" << pad_ << "\" y=\"" << pad_ * 0.6 << "\" font-family=\"sans-serif\" font-size=\"14\">" << text
          << "</text>\n";
  }

  std::string str() const {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\" viewBox=\"0 0 " << w_
       << ' ' << h_ << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<rect x=\"" << pad_ << "\" y=\"" << pad_ << "\" width=\"" << w_ - 2 * pad_ << "\" height=\"" << h_ - 2 * pad_
       << "\" fill=\"none\" stroke=\"#999\"/>\n"
       << body_.str() << "</svg>\n";
    return os.str();
  }

 private:
  Box box_;
  double w_, h_;
  double pad_ = 40;
  std::ostringstream body_;
};

// Cycles through a small qualitative palette.
inline std::string color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

inline std::string gray(double level) {
  const int v = static_cast<int>(std::lround(235 - 170 * std::clamp(level, 0.0, 1.0)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", v, v, v);
  return buf;
}

inline std::vector<std::pair<double, double>> series_points(const json& points) {
  std::vector<std::pair<double, double>> out;
  for (const auto& p : points) out.emplace_back(p.at("step").get<double>(), num(p.at("value")));
  return out;
}

inline std::string progression(const json& doc) {
  Box box;
  const auto pts = series_points(doc.at("points"));
  for (const auto& [x, y] : pts) box.add(x, y);
  box.add(0, 0);
  box.add(0, 1);
  Canvas c(box);
  c.title("remaining distance");
  c.polyline(pts, color(0));
  return c.str();
}

inline std::string groups(const json& doc) {
  Box box;
  for (const auto& g : doc.at("groups")) {
    for (const auto& [x, y] : series_points(g.at("points"))) box.add(x, y);
  }
  Canvas c(box);
  c.title("constraint groups (max |value|)");
  std::size_t i = 0;
  for (const auto& g : doc.at("groups")) c.polyline(series_points(g.at("points")), color(i++));
  return c.str();
}

inline std::string paths(const json& doc) {
  Box box;
  auto pt = [](const json& p) { return std::pair{num(p.at("p")[0]), num(p.at("p")[1])}; };
  for (const auto& tr : doc.at("trajectories")) {
    for (const auto& p : tr.at("points")) box.add(pt(p).first, pt(p).second);
  }
  for (const auto& path : doc.at("paths")) {
    for (const auto& p : path.at("points")) box.add(pt(p).first, pt(p).second);
  }
  Canvas c(box);
  c.title("path evolution");
  for (const auto& tr : doc.at("trajectories")) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : tr.at("points")) pts.push_back(pt(p));
    c.polyline(pts, color(tr.at("config").get<std::size_t>()), 1.0);
  }
  if (!doc.at("paths").empty()) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : doc.at("paths").back().at("points")) pts.push_back(pt(p));
    c.polyline(pts, "black", 2.0);
  }
  return c.str();
}

inline std::string landscape(const json& doc) {
  const auto& w = doc.at("plane").at("window");
  Box box;
  box.add(num(w.at("s_min")), num(w.at("t_min")));
  box.add(num(w.at("s_max")), num(w.at("t_max")));
  Canvas c(box);
  c.title("landscape: " + doc.at("fields").at(0).at("name").get<std::string>());
  const auto& bands = doc.at("fields").at(0).at("isobands").at("bands");
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const double level = bands.size() > 1 ? static_cast<double>(b) / static_cast<double>(bands.size() - 1) : 0.5;
    for (const auto& poly : bands[b].at("polygons")) c.polygon(poly, gray(level));
  }
  if (doc.contains("feasibility") && !doc.at("feasibility").is_null()) {
    for (const auto& poly : doc.at("feasibility").at("polygons")) c.polygon(poly, "#d62728", 0.25);
  }
  std::vector<std::pair<double, double>> traj;
  for (const auto& p : doc.at("trajectory")) traj.emplace_back(num(p.at("s")), num(p.at("t")));
  c.polyline(traj, "#e377c2", 1.0);
  for (const auto& p : doc.at("trajectory")) c.circle(num(p.at("s")), num(p.at("t")), 0.5 * num(p.at("width")), "#e377c2");
  return c.str();
}

}  // namespace svg
