#pragma once

// JSON records exchanged by the query service and written by `nlpvis export`.

#include "nlpvis/analytics.hpp"
#include "nlpvis/trace.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace nlpvis::wire {

using json = nlohmann::json;

inline constexpr int kApiVersion = 1;

inline json number(double v) { return detail::encode_number(v); }
inline json vector(const Vector& v) { return detail::encode_vector(v); }

inline json window_to_json(const PlaneWindow& w) {
  return {{"s_min", number(w.s_min)}, {"s_max", number(w.s_max)}, {"t_min", number(w.t_min)}, {"t_max", number(w.t_max)}};
}

inline PlaneWindow window_from_json(const json& j) {
  return {detail::decode_number(j.at("s_min")), detail::decode_number(j.at("s_max")),
          detail::decode_number(j.at("t_min")), detail::decode_number(j.at("t_max"))};
}

inline json plane_to_json(const PlaneSpec& p) {
  return {{"origin", vector(p.origin)}, {"u", vector(p.u)}, {"v", vector(p.v)}, {"window", window_to_json(p.window)}};
}

inline PlaneSpec plane_from_json(const json& j) {
  PlaneSpec p;
  p.origin = detail::decode_vector(j.at("origin"));
  p.u = detail::decode_vector(j.at("u"));
  p.v = detail::decode_vector(j.at("v"));
  p.window = window_from_json(j.at("window"));
  return p;
}

inline json duals_to_json(const DualState& d) {
  return {{"kappa", vector(d.kappa)}, {"lambda", vector(d.lambda)}, {"mu", number(d.mu)}};
}

inline json series_to_json(const std::vector<SeriesPoint>& series) {
  json arr = json::array();
  for (const auto& p : series) arr.push_back({{"step", p.step}, {"value", number(p.value)}});
  return arr;
}

inline json polygon_to_json(const Polygon& poly) {
  json arr = json::array();
  for (const auto& q : poly) arr.push_back({number(q.s), number(q.t)});
  return arr;
}

inline json polygons_to_json(const std::vector<Polygon>& polys) {
  json arr = json::array();
  for (const auto& p : polys) arr.push_back(polygon_to_json(p));
  return arr;
}

inline json isobands_to_json(const IsobandSet& set) {
  json bands = json::array();
  for (const auto& b : set.bands) {
    bands.push_back({{"lower", number(b.lower)}, {"upper", number(b.upper)}, {"polygons", polygons_to_json(b.polygons)}});
  }
  return {{"bands", bands}, {"excluded_cells", set.excluded_cells}};
}

inline json field_values_to_json(const std::vector<double>& values) {
  json arr = json::array();
  for (double v : values) arr.push_back(number(v));
  return arr;
}

inline json mask_to_json(const FeasibilityMask& m) {
  return {{"tau", number(m.tau)}, {"infeasible", m.infeasible}, {"polygons", polygons_to_json(m.polygons)}};
}

inline json projected_points_to_json(const std::vector<ProjectedPoint>& pts) {
  json arr = json::array();
  for (const auto& p : pts) {
    arr.push_back({{"step", p.step}, {"config", p.config}, {"p", {number(p.p1), number(p.p2)}}});
  }
  return arr;
}

inline json projection_to_json(const ProjectionSet& set) {
  json paths = json::array();
  for (const auto& p : set.paths) paths.push_back({{"step", p.step}, {"points", projected_points_to_json(p.points)}});
  json trajectories = json::array();
  for (const auto& c : set.trajectories) {
    trajectories.push_back({{"config", c.config}, {"points", projected_points_to_json(c.points)}});
  }
  json basis = json::array();
  for (Eigen::Index k = 0; k < set.basis.cols(); ++k) basis.push_back(vector(set.basis.col(k)));
  return {{"subsample", set.subsample},
          {"basis_steps", set.basis_steps},
          {"mean", vector(set.mean)},
          {"basis", basis},
          {"explained_variance", vector(set.explained_variance)},
          {"selected", {{"steps", set.steps}, {"configs", set.configs}}},
          {"paths", paths},
          {"trajectories", trajectories}};
}

/// Everything the landscape view needs for one plane: sampled fields with
/// their isobands, the feasibility mask and the trajectory drawn into the
/// plane with its thickness encoding.
struct LandscapeRequest {
  std::size_t rows = 64;
  std::size_t cols = 64;
  std::vector<std::string> functions{kObjectiveField};
  std::optional<double> tau;
  std::size_t duals_step = 0;
  std::size_t levels = 9;
};

struct TrajectoryOnPlane {
  std::size_t step = 0;
  PlaneCoordinates coords;
  double width = 0.0;
};

struct Landscape {
  GridField grid;
  std::vector<std::vector<double>> levels;
  std::vector<IsobandSet> bands;
  std::optional<FeasibilityMask> mask;
  std::vector<TrajectoryOnPlane> trajectory;
  double sigma = 1.0;
};

inline Landscape compute_landscape(const Problem& problem, const Trace& trace, const PlaneSpec& plane,
                                   const LandscapeRequest& req) {
  Landscape out;
  out.grid = sample_grid(problem, plane, req.rows, req.cols, req.functions, duals_at_step(trace, req.duals_step));
  std::vector<ConstraintField> constraint_fields;
  for (const auto& f : out.grid.fields) {
    out.levels.push_back(quantile_levels(f.values, req.levels));
    out.bands.push_back(isobands(out.grid.geometry, f.values, out.levels.back()));
    if (f.kind == "equality" || f.kind == "inequality") {
      constraint_fields.push_back({f.kind == "equality" ? ConstraintKind::equality : ConstraintKind::inequality,
                                   std::span<const double>(f.values)});
    }
  }
  if (req.tau) out.mask = feasibility_mask(out.grid.geometry, constraint_fields, *req.tau);

  const auto traj = optimization_trajectory(trace);
  std::vector<double> dists;
  for (const auto& p : traj) {
    out.trajectory.push_back({p.index.ordinal, project_to_plane(plane, p.x), 0.0});
    dists.push_back(out.trajectory.back().coords.dist);
  }
  out.sigma = default_sigma(dists);
  for (auto& p : out.trajectory) p.width = thickness(p.coords.dist, out.sigma);
  return out;
}

inline json landscape_to_json(const Landscape& l) {
  const auto& geo = l.grid.geometry;
  json s = json::array(), t = json::array();
  for (std::size_t c = 0; c < geo.cols; ++c) s.push_back(number(geo.s_at(c)));
  for (std::size_t r = 0; r < geo.rows; ++r) t.push_back(number(geo.t_at(r)));
  json fields = json::array();
  for (std::size_t k = 0; k < l.grid.fields.size(); ++k) {
    const auto& f = l.grid.fields[k];
    json levels = json::array();
    for (double v : l.levels[k]) levels.push_back(number(v));
    fields.push_back({{"name", f.name},
                      {"kind", f.kind},
                      {"values", field_values_to_json(f.values)},
                      {"non_finite", f.non_finite},
                      {"levels", levels},
                      {"isobands", isobands_to_json(l.bands[k])}});
  }
  json traj = json::array();
  for (const auto& p : l.trajectory) {
    traj.push_back({{"step", p.step},
                    {"s", number(p.coords.s)},
                    {"t", number(p.coords.t)},
                    {"dist", number(p.coords.dist)},
                    {"width", number(p.width)}});
  }
  json out{{"plane", plane_to_json(l.grid.plane)},
           {"resolution", {{"rows", geo.rows}, {"cols", geo.cols}}},
           {"s", s},
           {"t", t},
           {"duals_used", duals_to_json(l.grid.duals_used)},
           {"fields", fields},
           {"trajectory", traj},
           {"sigma", number(l.sigma)}};
  out["feasibility"] = l.mask ? mask_to_json(*l.mask) : json(nullptr);
  return out;
}

}  // namespace nlpvis::wire
