#pragma once

#include "nlpvis/trace.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace nlpvis {

/// Per-step maximum of |value| over all members of `group`, for either kind.
inline std::vector<SeriesPoint> aggregate_group_series(const Trace& trace, const std::string& group) {
  const auto tree = group_tree(trace);
  const auto& node = find_group(tree, group);
  const auto evals = step_evaluations(trace);

  std::vector<SeriesPoint> out;
  out.reserve(evals.size());
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const EvalEvent& e = *evals[i];
    double m = 0.0;
    bool any_nan = false;
    for (const auto& member : node.members) {
      const Vector& vals = member.location.kind == ConstraintKind::equality ? e.h : e.g;
      const double v = std::abs(vals[static_cast<Eigen::Index>(member.location.slot)]);
      if (std::isnan(v)) any_nan = true;
      m = std::max(m, v);
    }
    out.push_back({i, any_nan ? std::nan("") : m});
  }
  return out;
}

struct Progression {
  std::vector<SeriesPoint> points;
  /// Set when the trajectory has fewer than two points or zero length; the
  /// series is then all zeros.
  bool degenerate = false;
};

/// Remaining normalized arc length r_i after each step of the trajectory.
inline Progression progression_remaining(const std::vector<TrajectoryPoint>& traj) {
  Progression out;
  out.points.reserve(traj.size());
  if (traj.size() < 2) {
    for (const auto& p : traj) out.points.push_back({p.index.ordinal, 0.0});
    out.degenerate = true;
    return out;
  }

  std::vector<double> seg(traj.size() - 1);
  for (std::size_t k = 0; k + 1 < traj.size(); ++k) seg[k] = (traj[k + 1].x - traj[k].x).norm();

  // Suffix sums so that r_last is exactly 0 and r is non-increasing.
  std::vector<double> rest(traj.size(), 0.0);
  for (std::size_t k = seg.size(); k-- > 0;) rest[k] = rest[k + 1] + seg[k];
  const double total = rest.front();
  if (!(total > 0.0) || !std::isfinite(total)) {
    for (const auto& p : traj) out.points.push_back({p.index.ordinal, 0.0});
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < traj.size(); ++i) {
    out.points.push_back({traj[i].index.ordinal, i == 0 ? 1.0 : std::min(1.0, rest[i] / total)});
  }
  return out;
}

inline Progression progression_remaining(const std::vector<Vector>& points) {
  std::vector<TrajectoryPoint> traj;
  traj.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) traj.push_back({StepIndex{i, i}, points[i]});
  return progression_remaining(traj);
}

inline Progression progression_remaining(const Trace& trace) {
  return progression_remaining(optimization_trajectory(trace));
}

}  // namespace nlpvis
