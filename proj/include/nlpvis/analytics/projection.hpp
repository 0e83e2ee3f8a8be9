#pragma once

#include "nlpvis/analytics/pca.hpp"
#include "nlpvis/trace.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace nlpvis {

/// Configuration c_t of step i projected with the shared basis.
struct ProjectedPoint {
  std::size_t step = 0;
  std::size_t config = 0;
  double p1 = 0.0;
  double p2 = 0.0;
};

/// All configurations of one solution s_i, in robot-time order.
struct PathPolyline {
  std::size_t step = 0;
  std::vector<ProjectedPoint> points;
};

/// One configuration c_t across the optimization steps, in step order.
struct ConfigTrajectory {
  std::size_t config = 0;
  std::vector<ProjectedPoint> points;
};

struct ProjectionSet {
  /// Label of the step subsample the basis was fit on.
  std::string subsample = "accepted-updates";
  /// Trajectory steps whose configurations were pooled for the fit.
  std::vector<std::size_t> basis_steps;
  Vector mean;
  /// d×2 projection basis; a zero column where the pooled data has rank < 2.
  Matrix basis;
  Vector explained_variance;
  std::vector<std::size_t> steps;
  std::vector<std::size_t> configs;
  std::vector<PathPolyline> paths;
  std::vector<ConfigTrajectory> trajectories;
};

/// x_init, every accepted line-search point and x*, as trajectory ordinals.
inline std::vector<std::size_t> accepted_update_steps(const Trace& trace) {
  std::map<std::size_t, std::size_t> ordinal_of_seq;
  std::size_t ordinal = 0;
  for (const auto& e : trace.events) {
    if (const auto* ev = e.as<EvalEvent>(); ev && ev->x) ordinal_of_seq[e.seq] = ordinal++;
  }
  if (ordinal == 0) throw EmptyTrajectory("trace contains no evaluated points");
  std::set<std::size_t> steps{0, ordinal - 1};
  for (const auto& e : trace.events) {
    if (const auto* xu = e.as<XUpdateEvent>()) {
      if (auto it = ordinal_of_seq.find(xu->eval_seq); it != ordinal_of_seq.end()) steps.insert(it->second);
    }
  }
  return {steps.begin(), steps.end()};
}

/// Time-curve views: both curve families share one PCA basis fit on the
/// configurations of the accepted-update subsample. Empty selections mean
/// the subsample (steps) and every configuration (configs).
inline ProjectionSet path_evolution_projection(const Trace& trace, const std::vector<std::size_t>& selected_steps,
                                               const std::vector<std::size_t>& selected_configs) {
  const auto& info = trace.header.problem;
  if (info.dims.empty()) throw UnsupportedProjection("problem has no configurations");
  const std::size_t d = info.dims.front();
  for (auto dt : info.dims) {
    if (dt != d) throw UnsupportedProjection("configurations differ in dimension");
  }
  const std::size_t T = info.dims.size();
  const auto traj = optimization_trajectory(trace);

  for (auto s : selected_steps) {
    if (s >= traj.size()) throw InvalidArgument("step " + std::to_string(s) + " is out of range");
  }
  for (auto t : selected_configs) {
    if (t >= T) throw InvalidArgument("configuration " + std::to_string(t) + " is out of range");
  }

  ProjectionSet out;
  out.basis_steps = accepted_update_steps(trace);
  auto config = [&](std::size_t step, std::size_t t) -> Vector {
    return traj[step].x.segment(static_cast<Eigen::Index>(t * d), static_cast<Eigen::Index>(d));
  };

  std::vector<Vector> pooled;
  pooled.reserve(out.basis_steps.size() * T);
  for (auto i : out.basis_steps) {
    for (std::size_t t = 0; t < T; ++t) pooled.push_back(config(i, t));
  }

  out.basis = Matrix::Zero(static_cast<Eigen::Index>(d), 2);
  out.explained_variance = Vector::Zero(2);
  bool distinct = false;
  for (const auto& p : pooled) distinct |= p != pooled.front();
  if (distinct) {
    const auto pca = pca_basis(pooled, std::min<std::size_t>(2, d));
    out.mean = pca.mean;
    out.basis.leftCols(pca.components.cols()) = pca.components;
    out.explained_variance.head(pca.variances.size()) = pca.variances;
  } else {
    out.mean = pooled.front();
  }

  auto project = [&](std::size_t step, std::size_t t) {
    const Vector p = out.basis.transpose() * (config(step, t) - out.mean);
    return ProjectedPoint{step, t, p[0], p[1]};
  };

  out.steps = selected_steps.empty() ? out.basis_steps : selected_steps;
  if (selected_configs.empty()) {
    for (std::size_t t = 0; t < T; ++t) out.configs.push_back(t);
  } else {
    out.configs = selected_configs;
  }

  for (auto i : out.steps) {
    PathPolyline path{i, {}};
    for (std::size_t t = 0; t < T; ++t) path.points.push_back(project(i, t));
    out.paths.push_back(std::move(path));
  }
  for (auto t : out.configs) {
    ConfigTrajectory curve{t, {}};
    for (auto i : out.steps) curve.points.push_back(project(i, t));
    out.trajectories.push_back(std::move(curve));
  }
  return out;
}

}  // namespace nlpvis
