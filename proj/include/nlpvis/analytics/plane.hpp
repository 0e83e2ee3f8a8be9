#pragma once

#include "nlpvis/analytics/pca.hpp"
#include "nlpvis/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace nlpvis {

struct PlaneWindow {
  double s_min = -1.0;
  double s_max = 1.0;
  double t_min = -1.0;
  double t_max = 1.0;

  friend bool operator==(const PlaneWindow&, const PlaneWindow&) = default;
};

/// Affine 2-plane {origin + s·u + t·v} with a rectangular window in (s, t).
struct PlaneSpec {
  Vector origin;
  Vector u;
  Vector v;
  PlaneWindow window;

  Vector point(double s, double t) const { return origin + s * u + t * v; }
};

struct PlaneCoordinates {
  double s = 0.0;
  double t = 0.0;
  double dist = 0.0;
};

inline PlaneCoordinates project_to_plane(const PlaneSpec& plane, const Vector& x) {
  const Vector r = x - plane.origin;
  PlaneCoordinates c;
  c.s = r.dot(plane.u);
  c.t = r.dot(plane.v);
  c.dist = (r - c.s * plane.u - c.t * plane.v).norm();
  return c;
}

namespace detail {

// Component of `w` orthogonal to unit `u`; the second pass removes the
// residue left by cancellation in the first.
inline Vector orthogonal_part(const Vector& w, const Vector& u) {
  Vector r = w - w.dot(u) * u;
  r -= r.dot(u) * u;
  return r;
}

inline Vector any_orthogonal(const Vector& u) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < u.size(); ++i) {
    if (std::abs(u[i]) < std::abs(u[best])) best = i;
  }
  Vector e = Vector::Zero(u.size());
  e[best] = 1.0;
  return orthogonal_part(e, u).normalized();
}

inline void check_plane_dimension(Eigen::Index n) {
  if (n < 2) throw DegeneratePlane("a plane needs a space of dimension at least 2");
}

}  // namespace detail

/// Window spanning the projections of `points`, widened by `margin` times the
/// extent on every side. Flat extents borrow the other axis (or 1).
inline PlaneWindow fit_window(const PlaneSpec& plane, std::span<const Vector> points, double margin = 0.2) {
  double s0 = std::numeric_limits<double>::infinity(), s1 = -s0, t0 = s0, t1 = -s0;
  for (const auto& x : points) {
    const auto c = project_to_plane(plane, x);
    if (!std::isfinite(c.s) || !std::isfinite(c.t)) continue;
    s0 = std::min(s0, c.s);
    s1 = std::max(s1, c.s);
    t0 = std::min(t0, c.t);
    t1 = std::max(t1, c.t);
  }
  if (!(s0 <= s1)) s0 = s1 = t0 = t1 = 0.0;
  double ds = s1 - s0, dt = t1 - t0;
  const double fallback = std::max({ds, dt, 0.0}) > 0.0 ? std::max(ds, dt) : 1.0;
  if (!(ds > 0.0)) ds = fallback;
  if (!(dt > 0.0)) dt = fallback;
  const double cs = 0.5 * (s0 + s1), ct = 0.5 * (t0 + t1);
  const double hs = 0.5 * ds * (1.0 + 2.0 * margin), ht = 0.5 * dt * (1.0 + 2.0 * margin);
  return {cs - hs, cs + hs, ct - ht, ct + ht};
}

/// Plane through x* = trajectory.back() containing x_sel, with the second
/// direction taken from the principal components of the whole trajectory.
inline PlaneSpec default_plane(std::span<const Vector> trajectory, std::size_t selected_step) {
  if (trajectory.empty()) throw InvalidArgument("empty trajectory");
  if (selected_step >= trajectory.size()) throw InvalidArgument("selected step is out of range");
  const Vector& x_star = trajectory.back();
  const Vector& x_sel = trajectory[selected_step];
  detail::check_plane_dimension(x_star.size());
  const Vector d = x_sel - x_star;
  const double len = d.norm();
  if (!(len > 0.0) || !std::isfinite(len)) throw DegeneratePlane("selected step coincides with the final point");

  PlaneSpec plane;
  plane.origin = x_star;
  plane.u = d / len;

  // x_sel != x* guarantees at least two distinct points.
  const auto pca = pca_basis(trajectory, 2);
  Vector v;
  const Vector pc1 = pca.components.col(0);
  Vector w = detail::orthogonal_part(pc1, plane.u);
  if (w.norm() >= 1e-9 * pc1.norm()) {
    v = w;
  } else if (pca.components.cols() > 1) {
    v = detail::orthogonal_part(pca.components.col(1), plane.u);
  }
  if (v.size() == 0 || !(v.norm() > 0.0)) {
    plane.v = detail::any_orthogonal(plane.u);
  } else {
    plane.v = v.normalized();
    plane.v = detail::orthogonal_part(plane.v, plane.u).normalized();
  }
  plane.window = fit_window(plane, trajectory);
  return plane;
}

inline PlaneSpec default_plane(const std::vector<Vector>& trajectory, std::size_t selected_step) {
  return default_plane(std::span<const Vector>(trajectory), selected_step);
}

/// Plane through xa, xb and xc with origin xc and u pointing at xa. The
/// window covers the three points plus `window_points`.
inline PlaneSpec three_point_plane(const Vector& xa, const Vector& xb, const Vector& xc,
                                   std::span<const Vector> window_points = {}) {
  if (xa.size() != xc.size() || xb.size() != xc.size()) throw InvalidArgument("plane points differ in dimension");
  detail::check_plane_dimension(xc.size());
  const double scale = std::max({(xa - xb).norm(), (xa - xc).norm(), (xb - xc).norm()});
  const Vector a = xa - xc;
  const double la = a.norm();
  if (!(la > 0.0) || !std::isfinite(la)) throw DegeneratePlane("plane points coincide");

  PlaneSpec plane;
  plane.origin = xc;
  plane.u = a / la;
  const Vector w = detail::orthogonal_part(xb - xc, plane.u);
  if (!(w.norm() > 1e-12 * scale)) throw DegeneratePlane("plane points are collinear");
  plane.v = detail::orthogonal_part(w.normalized(), plane.u).normalized();
  std::vector<Vector> pts{xa, xb, xc};
  pts.insert(pts.end(), window_points.begin(), window_points.end());
  plane.window = fit_window(plane, pts);
  return plane;
}

inline constexpr double kThicknessMin = 0.5;
inline constexpr double kThicknessMax = 4.0;

/// Display width for a trajectory point at plane distance `dist`.
inline double thickness(double dist, double sigma, double w_min = kThicknessMin, double w_max = kThicknessMax) {
  if (!(sigma > 0.0)) throw InvalidArgument("thickness scale must be positive");
  return w_min + (w_max - w_min) * std::exp(-dist / sigma);
}

/// Median of the nonzero distances, or 1 when there are none.
inline double default_sigma(std::vector<double> dists) {
  std::erase_if(dists, [](double d) { return !(d > 0.0) || !std::isfinite(d); });
  if (dists.empty()) return 1.0;
  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  return m % 2 == 1 ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
}

}  // namespace nlpvis
