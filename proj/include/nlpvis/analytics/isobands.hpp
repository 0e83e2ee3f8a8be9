#pragma once

#include "nlpvis/analytics/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace nlpvis {

struct Point2 {
  double s = 0.0;
  double t = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Simple polygon, counter-clockwise, without the closing repeat.
using Polygon = std::vector<Point2>;

inline double polygon_area(const Polygon& p) {
  double a = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& q = p[i];
    const auto& r = p[(i + 1) % p.size()];
    a += q.s * r.t - r.s * q.t;
  }
  return 0.5 * a;
}

struct Isoband {
  double lower = 0.0;
  double upper = 0.0;
  std::vector<Polygon> polygons;

  double area() const {
    double a = 0.0;
    for (const auto& p : polygons) a += polygon_area(p);
    return a;
  }
};

struct IsobandSet {
  std::vector<Isoband> bands;
  /// Cells dropped from every band because a corner value is not finite,
  /// as row-major cell indices on the (rows−1)×(cols−1) cell lattice.
  std::vector<std::size_t> excluded_cells;
};

namespace detail {

struct VPoint {
  double s, t, v;
};

// Sutherland-Hodgman against the half-plane sign·(v − level) ≥ 0 in value
// space; the field is linear on each triangle, so crossings interpolate
// exactly.
inline std::vector<VPoint> clip_value(const std::vector<VPoint>& poly, double level, double sign) {
  std::vector<VPoint> out;
  if (poly.empty()) return out;
  out.reserve(poly.size() + 2);
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const VPoint& a = poly[i];
    const VPoint& b = poly[(i + 1) % poly.size()];
    const double da = sign * (a.v - level), db = sign * (b.v - level);
    if (da >= 0.0) out.push_back(a);
    if ((da >= 0.0) != (db >= 0.0)) {
      const double w = da / (da - db);
      out.push_back({a.s + w * (b.s - a.s), a.t + w * (b.t - a.t), level});
    }
  }
  return out;
}

// Index of the band holding v under the half-open rule with the top band
// closed, or -1 outside the level range.
inline long band_of(std::span<const double> levels, double v) {
  const std::size_t nb = levels.size() - 1;
  if (v < levels.front() || v > levels.back()) return -1;
  if (v == levels.back()) return static_cast<long>(nb - 1);
  const auto it = std::upper_bound(levels.begin(), levels.end(), v);
  return static_cast<long>(it - levels.begin()) - 1;
}

inline void push_polygon(std::vector<Polygon>& out, const std::vector<VPoint>& poly) {
  if (poly.size() < 3) return;
  Polygon p;
  p.reserve(poly.size());
  for (const auto& q : poly) {
    if (!p.empty() && p.back().s == q.s && p.back().t == q.t) continue;
    p.push_back({q.s, q.t});
  }
  if (p.size() > 1 && p.front() == p.back()) p.pop_back();
  if (p.size() < 3 || !(polygon_area(p) > 0.0)) return;
  out.push_back(std::move(p));
}

}  // namespace detail

/// Isobands of a node-sampled scalar field. Each cell is split into four
/// triangles around its center, which carries the mean of the corners (this
/// also decides saddle cells); the field is linear on each triangle. Band b
/// covers levels[b] ≤ v < levels[b+1], the last band also includes its upper
/// level. Cells lying entirely in one band are merged into row runs.
inline IsobandSet isobands(const GridGeometry& geo, std::span<const double> values, std::span<const double> levels) {
  if (geo.rows < 2 || geo.cols < 2) throw InvalidArgument("isobands need a grid of at least 2x2");
  if (values.size() != geo.size()) throw InvalidArgument("field size does not match the grid");
  if (levels.size() < 2) throw InvalidArgument("isobands need at least two levels");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!std::isfinite(levels[i])) throw InvalidArgument("isoband levels must be finite");
    if (i > 0 && !(levels[i] > levels[i - 1])) throw InvalidArgument("isoband levels must be strictly ascending");
  }

  const std::size_t nb = levels.size() - 1;
  IsobandSet out;
  out.bands.resize(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    out.bands[b].lower = levels[b];
    out.bands[b].upper = levels[b + 1];
  }

  for (std::size_t r = 0; r + 1 < geo.rows; ++r) {
    const double t0 = geo.t_at(r), t1 = geo.t_at(r + 1);
    long run_band = -1;
    std::size_t run_start = 0;
    auto flush = [&](std::size_t c_end) {
      if (run_band >= 0) {
        out.bands[static_cast<std::size_t>(run_band)].polygons.push_back(
            {{geo.s_at(run_start), t0}, {geo.s_at(c_end), t0}, {geo.s_at(c_end), t1}, {geo.s_at(run_start), t1}});
      }
      run_band = -1;
    };

    for (std::size_t c = 0; c + 1 < geo.cols; ++c) {
      const double s0 = geo.s_at(c), s1 = geo.s_at(c + 1);
      const double v00 = values[r * geo.cols + c], v01 = values[r * geo.cols + c + 1];
      const double v10 = values[(r + 1) * geo.cols + c], v11 = values[(r + 1) * geo.cols + c + 1];
      if (!std::isfinite(v00) || !std::isfinite(v01) || !std::isfinite(v10) || !std::isfinite(v11)) {
        flush(c);
        out.excluded_cells.push_back(r * (geo.cols - 1) + c);
        continue;
      }

      const long b00 = detail::band_of(levels, v00);
      if (b00 >= 0 && b00 == detail::band_of(levels, v01) && b00 == detail::band_of(levels, v10) &&
          b00 == detail::band_of(levels, v11)) {
        if (run_band != b00) {
          flush(c);
          run_band = b00;
          run_start = c;
        }
        continue;
      }
      flush(c);

      const detail::VPoint p00{s0, t0, v00}, p01{s1, t0, v01}, p11{s1, t1, v11}, p10{s0, t1, v10};
      const detail::VPoint mid{0.5 * (s0 + s1), 0.5 * (t0 + t1), 0.25 * (v00 + v01 + v10 + v11)};
      const detail::VPoint tris[4][3] = {{p00, p01, mid}, {p01, p11, mid}, {p11, p10, mid}, {p10, p00, mid}};
      for (const auto& tri : tris) {
        const double vmin = std::min({tri[0].v, tri[1].v, tri[2].v});
        const double vmax = std::max({tri[0].v, tri[1].v, tri[2].v});
        if (vmin == vmax) {
          // Flat triangle: assign by the half-open rule so it lands in one band.
          const long b = detail::band_of(levels, vmin);
          if (b >= 0) detail::push_polygon(out.bands[static_cast<std::size_t>(b)].polygons, {tri[0], tri[1], tri[2]});
          continue;
        }
        for (std::size_t b = 0; b < nb; ++b) {
          if (vmax < levels[b] || vmin > levels[b + 1]) continue;
          auto poly = detail::clip_value({tri[0], tri[1], tri[2]}, levels[b], 1.0);
          poly = detail::clip_value(poly, levels[b + 1], -1.0);
          detail::push_polygon(out.bands[b].polygons, poly);
        }
      }
    }
    flush(geo.cols - 1);
  }
  return out;
}

inline IsobandSet isobands(const GridGeometry& geo, const std::vector<double>& values, const std::vector<double>& levels) {
  return isobands(geo, std::span<const double>(values), std::span<const double>(levels));
}

/// `count` levels at evenly spaced quantiles (0 … 1) of the finite values,
/// duplicates removed. A constant field yields [v, v + 1].
inline std::vector<double> quantile_levels(std::span<const double> values, std::size_t count = 9) {
  if (count < 2) throw InvalidArgument("need at least two levels");
  std::vector<double> finite;
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  if (finite.empty()) return {0.0, 1.0};
  std::sort(finite.begin(), finite.end());
  std::vector<double> levels;
  for (std::size_t k = 0; k < count; ++k) {
    const double q = static_cast<double>(k) / static_cast<double>(count - 1) * static_cast<double>(finite.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(q));
    const auto hi = std::min(lo + 1, finite.size() - 1);
    const double w = q - static_cast<double>(lo);
    double v = w == 0.0 ? finite[lo] : finite[lo] + w * (finite[hi] - finite[lo]);
    if (k + 1 == count) v = finite.back();
    if (levels.empty() || v > levels.back()) levels.push_back(v);
  }
  if (levels.size() < 2) levels.push_back(levels.front() + 1.0);
  return levels;
}

inline std::vector<double> quantile_levels(const std::vector<double>& values, std::size_t count = 9) {
  return quantile_levels(std::span<const double>(values), count);
}

/// One constraint field entering a feasibility mask.
struct ConstraintField {
  ConstraintKind kind = ConstraintKind::equality;
  std::span<const double> values;
};

struct FeasibilityMask {
  double tau = 0.0;
  /// Per grid node: 1 where some selected constraint is violated by more
  /// than tau.
  std::vector<std::uint8_t> infeasible;
  /// Region {violation ≥ tau} traced by isobands of the violation field.
  std::vector<Polygon> polygons;
  /// max(|h|, g) over the selected constraints, per node.
  std::vector<double> violation;
};

inline FeasibilityMask feasibility_mask(const GridGeometry& geo, const std::vector<ConstraintField>& fields, double tau) {
  if (!(tau >= 0.0)) throw InvalidArgument("feasibility threshold must be non-negative");
  FeasibilityMask out;
  out.tau = tau;
  out.violation.assign(geo.size(), -std::numeric_limits<double>::infinity());
  out.infeasible.assign(geo.size(), 0);
  for (const auto& f : fields) {
    if (f.values.size() != geo.size()) throw InvalidArgument("constraint field size does not match the grid");
    for (std::size_t i = 0; i < geo.size(); ++i) {
      const double v = f.kind == ConstraintKind::equality ? std::abs(f.values[i]) : f.values[i];
      if (std::isnan(v) || std::isnan(out.violation[i])) {
        out.violation[i] = std::nan("");
      } else {
        out.violation[i] = std::max(out.violation[i], v);
      }
    }
  }
  double vmax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < geo.size(); ++i) {
    if (out.violation[i] > tau) out.infeasible[i] = 1;
    if (std::isfinite(out.violation[i])) vmax = std::max(vmax, out.violation[i]);
  }
  if (!fields.empty() && std::isfinite(tau) && vmax > tau) {
    const std::vector<double> levels{tau, vmax};
    auto set = isobands(geo, std::span<const double>(out.violation), std::span<const double>(levels));
    out.polygons = std::move(set.bands.front().polygons);
  }
  return out;
}

}  // namespace nlpvis
