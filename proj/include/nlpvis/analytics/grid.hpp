#pragma once

#include "nlpvis/analytics/plane.hpp"
#include "nlpvis/problem.hpp"
#include "nlpvis/solver.hpp"
#include "nlpvis/trace.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace nlpvis {

/// Node positions of a rows×cols lattice over a plane window. Row r runs
/// along t, column c along s; node (r, c) is stored at r·cols + c.
struct GridGeometry {
  PlaneWindow window;
  std::size_t rows = 2;
  std::size_t cols = 2;

  double s_at(std::size_t c) const {
    return cols < 2 ? window.s_min : window.s_min + (window.s_max - window.s_min) * static_cast<double>(c) / static_cast<double>(cols - 1);
  }
  double t_at(std::size_t r) const {
    return rows < 2 ? window.t_min : window.t_min + (window.t_max - window.t_min) * static_cast<double>(r) / static_cast<double>(rows - 1);
  }
  std::size_t size() const { return rows * cols; }
};

inline constexpr const char* kObjectiveField = "objective";
inline constexpr const char* kLossField = "loss";

/// One sampled scalar field. Non-finite node values stay in `values` and
/// their indices are listed in `non_finite`.
struct FieldSamples {
  std::string name;
  /// "objective", "loss", "equality" or "inequality".
  std::string kind;
  std::vector<double> values;
  std::vector<std::size_t> non_finite;
};

struct GridField {
  PlaneSpec plane;
  GridGeometry geometry;
  std::vector<FieldSamples> fields;
  DualState duals_used;

  const FieldSamples& field(const std::string& name) const {
    for (const auto& f : fields) {
      if (f.name == name) return f;
    }
    throw NotFound("field '" + name + "' was not sampled");
  }
};

namespace detail {

struct FieldPlan {
  enum class Source { objective, loss, equality, inequality } source;
  std::size_t slot = 0;
};

// Accepts "objective", "loss", a constraint instance id, or "group/id".
inline FieldPlan plan_field(const Problem& problem, const std::string& name) {
  if (name == kObjectiveField) return {FieldPlan::Source::objective};
  if (name == kLossField) return {FieldPlan::Source::loss};
  std::string group, id = name;
  if (const auto slash = name.find('/'); slash != std::string::npos) {
    group = name.substr(0, slash);
    id = name.substr(slash + 1);
  }
  const auto loc = locate_constraint(problem.info(), group, id);
  return {loc.kind == ConstraintKind::equality ? FieldPlan::Source::equality : FieldPlan::Source::inequality, loc.slot};
}

inline const char* source_name(FieldPlan::Source s) {
  switch (s) {
    case FieldPlan::Source::objective: return "objective";
    case FieldPlan::Source::loss: return "loss";
    case FieldPlan::Source::equality: return "equality";
    case FieldPlan::Source::inequality: return "inequality";
  }
  return "";
}

}  // namespace detail

/// Evaluates the requested functions at every lattice node of `plane`.
/// Rows are split across up to `threads` workers (0 = hardware concurrency);
/// the result does not depend on the split.
inline GridField sample_grid(const Problem& problem, const PlaneSpec& plane, std::size_t rows, std::size_t cols,
                             const std::vector<std::string>& functions, const DualState& duals,
                             unsigned threads = 0) {
  if (rows < 2 || cols < 2) throw InvalidArgument("grid resolution must be at least 2x2");
  if (functions.empty()) throw InvalidArgument("no functions requested");
  if (static_cast<std::size_t>(plane.origin.size()) != problem.n())
    throw InvalidArgument("plane dimension does not match the problem");
  check_duals(problem, duals);

  std::vector<detail::FieldPlan> plans;
  bool need_loss = false;
  for (const auto& name : functions) {
    plans.push_back(detail::plan_field(problem, name));
    need_loss |= plans.back().source == detail::FieldPlan::Source::loss;
  }

  GridField out;
  out.plane = plane;
  out.geometry = {plane.window, rows, cols};
  out.duals_used = duals;
  for (std::size_t k = 0; k < functions.size(); ++k) {
    out.fields.push_back({functions[k], detail::source_name(plans[k].source), std::vector<double>(rows * cols), {}});
  }

  auto fill_rows = [&](std::size_t r0, std::size_t r1) {
    Vector grad;
    for (std::size_t r = r0; r < r1; ++r) {
      const double t = out.geometry.t_at(r);
      for (std::size_t c = 0; c < cols; ++c) {
        const Vector x = plane.point(out.geometry.s_at(c), t);
        std::optional<LossEvaluation> loss;
        if (need_loss) loss = evaluate_loss(problem, x, duals);
        for (std::size_t k = 0; k < plans.size(); ++k) {
          double v = 0.0;
          const auto& p = plans[k];
          switch (p.source) {
            case detail::FieldPlan::Source::objective:
              v = loss ? loss->f : problem.objective().value_and_gradient(x, grad);
              break;
            case detail::FieldPlan::Source::loss:
              v = loss->value;
              break;
            case detail::FieldPlan::Source::equality:
              v = loss ? loss->h[static_cast<Eigen::Index>(p.slot)]
                       : problem.equalities()[p.slot].fn.value_and_gradient(x, grad);
              break;
            case detail::FieldPlan::Source::inequality:
              v = loss ? loss->g[static_cast<Eigen::Index>(p.slot)]
                       : problem.inequalities()[p.slot].fn.value_and_gradient(x, grad);
              break;
          }
          out.fields[k].values[r * cols + c] = v;
        }
      }
    }
  };

  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, rows));
  if (workers <= 1) {
    fill_rows(0, rows);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      const std::size_t chunk = (rows + workers - 1) / workers;
      for (std::size_t r0 = 0, w = 0; r0 < rows; r0 += chunk, ++w) {
        pool.emplace_back([&, r0, w] {
          try {
            fill_rows(r0, std::min(rows, r0 + chunk));
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (auto& f : out.fields) {
    for (std::size_t i = 0; i < f.values.size(); ++i) {
      if (!std::isfinite(f.values[i])) f.non_finite.push_back(i);
    }
  }
  return out;
}

}  // namespace nlpvis
