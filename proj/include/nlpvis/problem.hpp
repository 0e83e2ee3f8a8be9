#pragma once

#include "nlpvis/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace nlpvis {

/// Differentiable scalar function of the full decision vector.
///
/// `value_and_gradient` returns f(x) and overwrites `grad` with ∇f(x) (the
/// callee resizes it). `add_hessian` is optional; when present it must add
/// `weight * ∇²f(x)` into the n×n matrix `hess`.
struct ScalarFunction {
  std::function<double(const Vector& x, Vector& grad)> value_and_gradient;
  std::function<void(const Vector& x, double weight, Matrix& hess)> add_hessian;

  bool has_hessian() const noexcept { return static_cast<bool>(add_hessian); }
};

enum class ConstraintKind { equality, inequality };

inline const char* to_string(ConstraintKind kind) {
  return kind == ConstraintKind::equality ? "equality" : "inequality";
}

inline ConstraintKind constraint_kind_from_string(const std::string& s) {
  if (s == "equality") return ConstraintKind::equality;
  if (s == "inequality") return ConstraintKind::inequality;
  throw InvalidArgument("unknown constraint kind '" + s + "'");
}

/// One scalar constraint h(x) = 0 or g(x) <= 0. Vector-valued constraints are
/// flattened into one spec per component sharing a group name.
struct ConstraintSpec {
  std::string group;
  std::string instance_id;
  ConstraintKind kind = ConstraintKind::equality;
  std::vector<std::size_t> time_indices;
  ScalarFunction fn;
};

/// Constraint metadata without the function handle; this is what a trace
/// header carries.
struct ConstraintInfo {
  std::string group;
  std::string instance_id;
  ConstraintKind kind = ConstraintKind::equality;
  std::vector<std::size_t> time_indices;

  friend bool operator==(const ConstraintInfo&, const ConstraintInfo&) = default;
};

/// Serializable description of a problem: everything except the callables.
struct ProblemInfo {
  std::string name;
  std::size_t n = 0;
  std::size_t T = 1;
  std::vector<std::size_t> dims;
  std::vector<ConstraintInfo> constraints;  // equalities first, then inequalities
  std::string scene;                        // scene document, empty for registry problems

  friend bool operator==(const ProblemInfo&, const ProblemInfo&) = default;

  /// Offset of configuration t inside x.
  std::size_t config_offset(std::size_t t) const {
    return std::accumulate(dims.begin(), dims.begin() + static_cast<std::ptrdiff_t>(t),
                           std::size_t{0});
  }
};

/// An NLP: minimize f(x) subject to h_i(x) = 0, g_j(x) <= 0, with x split into
/// T time-indexed configurations of dimension dims[t]. Immutable once built.
class Problem {
 public:
  Problem(std::string name, std::vector<std::size_t> dims, ScalarFunction objective,
          std::vector<ConstraintSpec> equalities, std::vector<ConstraintSpec> inequalities)
      : name_(std::move(name)),
        dims_(std::move(dims)),
        objective_(std::move(objective)),
        equalities_(std::move(equalities)),
        inequalities_(std::move(inequalities)) {
    if (dims_.empty()) throw InvalidArgument("problem needs at least one configuration");
    for (auto d : dims_) {
      if (d == 0) throw InvalidArgument("configuration dimension must be positive");
    }
    n_ = std::accumulate(dims_.begin(), dims_.end(), std::size_t{0});
    if (!objective_.value_and_gradient) throw InvalidArgument("objective is not callable");

    std::set<std::pair<std::string, std::string>> seen;
    auto check = [&](const ConstraintSpec& c, ConstraintKind expected) {
      if (c.kind != expected) throw InvalidArgument("constraint '" + c.instance_id + "' has wrong kind");
      if (!c.fn.value_and_gradient) throw InvalidArgument("constraint '" + c.instance_id + "' is not callable");
      if (c.time_indices.empty()) throw InvalidArgument("constraint '" + c.instance_id + "' has no time index");
      if (!std::is_sorted(c.time_indices.begin(), c.time_indices.end()))
        throw InvalidArgument("constraint '" + c.instance_id + "' time indices are not sorted");
      if (c.time_indices.back() >= dims_.size())
        throw InvalidArgument("constraint '" + c.instance_id + "' time index out of range");
      if (!seen.emplace(c.group, c.instance_id).second)
        throw InvalidArgument("duplicate constraint '" + c.group + "/" + c.instance_id + "'");
    };
    for (const auto& c : equalities_) check(c, ConstraintKind::equality);
    for (const auto& c : inequalities_) check(c, ConstraintKind::inequality);
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t T() const noexcept { return dims_.size(); }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  const ScalarFunction& objective() const noexcept { return objective_; }
  const std::vector<ConstraintSpec>& equalities() const noexcept { return equalities_; }
  const std::vector<ConstraintSpec>& inequalities() const noexcept { return inequalities_; }

  /// Scene document the problem was built from, if any.
  const std::string& scene() const noexcept { return scene_; }
  Problem& set_scene(std::string scene) {
    scene_ = std::move(scene);
    return *this;
  }

  /// Starting point used when a caller does not supply one (zeros unless the
  /// problem builder set something else).
  Vector initial_point() const {
    return initial_.size() == static_cast<Eigen::Index>(n_) ? initial_ : Vector::Zero(static_cast<Eigen::Index>(n_));
  }
  Problem& set_initial_point(Vector x0) {
    if (static_cast<std::size_t>(x0.size()) != n_) throw InvalidArgument("initial point has wrong length");
    initial_ = std::move(x0);
    return *this;
  }

  /// True when any second-order information is available for L.
  bool has_second_order() const {
    if (objective_.has_hessian()) return true;
    return !equalities_.empty() || !inequalities_.empty();
  }

  ProblemInfo info() const {
    ProblemInfo out{name_, n_, dims_.size(), dims_, {}, scene_};
    for (const auto* list : {&equalities_, &inequalities_}) {
      for (const auto& c : *list) out.constraints.push_back({c.group, c.instance_id, c.kind, c.time_indices});
    }
    return out;
  }

 private:
  std::string name_;
  std::vector<std::size_t> dims_;
  std::size_t n_ = 0;
  ScalarFunction objective_;
  std::vector<ConstraintSpec> equalities_;
  std::vector<ConstraintSpec> inequalities_;
  std::string scene_;
  Vector initial_;
};

struct ObjectiveValue {
  double value = 0.0;
  Vector gradient;
};

/// Constraint values in declaration order; Jacobian rows follow the same order.
struct ConstraintValues {
  Vector h;
  Vector g;
  Matrix Jh;
  Matrix Jg;
};

namespace detail {

inline void check_point(const Problem& problem, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != problem.n()) {
    throw InvalidArgument("decision vector has length " + std::to_string(x.size()) + ", problem '" +
                          problem.name() + "' expects " + std::to_string(problem.n()));
  }
}

inline void eval_list(const std::vector<ConstraintSpec>& list, const Vector& x, Vector& values,
                      Matrix* jac) {
  const auto m = static_cast<Eigen::Index>(list.size());
  values.resize(m);
  if (jac) jac->resize(m, x.size());
  Vector grad(x.size());
  for (Eigen::Index i = 0; i < m; ++i) {
    values[i] = list[static_cast<std::size_t>(i)].fn.value_and_gradient(x, grad);
    if (jac) jac->row(i) = grad.transpose();
  }
}

}  // namespace detail

inline ObjectiveValue eval_objective(const Problem& problem, const Vector& x) {
  detail::check_point(problem, x);
  ObjectiveValue out;
  out.gradient.resize(x.size());
  out.value = problem.objective().value_and_gradient(x, out.gradient);
  return out;
}

inline ConstraintValues eval_constraints(const Problem& problem, const Vector& x) {
  detail::check_point(problem, x);
  ConstraintValues out;
  detail::eval_list(problem.equalities(), x, out.h, &out.Jh);
  detail::eval_list(problem.inequalities(), x, out.g, &out.Jg);
  return out;
}

/// max(max_i |h_i|, max_j max(0, g_j)); zero exactly when feasible.
inline double max_violation(const Vector& h, const Vector& g) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < h.size(); ++i) v = std::max(v, std::abs(h[i]));
  for (Eigen::Index j = 0; j < g.size(); ++j) v = std::max(v, g[j]);
  // NaN comparisons above are false; surface them instead of reporting 0.
  if (!h.allFinite() || !g.allFinite()) return std::numeric_limits<double>::quiet_NaN();
  return v;
}

inline double max_violation(const Problem& problem, const Vector& x) {
  detail::check_point(problem, x);
  Vector h, g;
  detail::eval_list(problem.equalities(), x, h, nullptr);
  detail::eval_list(problem.inequalities(), x, g, nullptr);
  return max_violation(h, g);
}

/// Max |central difference - analytic| over the gradient entries of each
/// function.
struct GradientReport {
  double objective = 0.0;
  std::vector<double> equalities;
  std::vector<double> inequalities;

  double max() const {
    double m = objective;
    for (double e : equalities) m = std::max(m, e);
    for (double e : inequalities) m = std::max(m, e);
    return m;
  }
};

inline GradientReport check_gradients(const Problem& problem, const Vector& x, double eps) {
  detail::check_point(problem, x);
  if (!(eps > 0.0)) throw InvalidArgument("finite-difference step must be positive");

  auto deviation = [&](const ScalarFunction& fn) {
    Vector analytic(x.size()), scratch(x.size());
    fn.value_and_gradient(x, analytic);
    Vector xp = x;
    double worst = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      xp[k] = x[k] + eps;
      const double fp = fn.value_and_gradient(xp, scratch);
      xp[k] = x[k] - eps;
      const double fm = fn.value_and_gradient(xp, scratch);
      xp[k] = x[k];
      worst = std::max(worst, std::abs((fp - fm) / (2.0 * eps) - analytic[k]));
    }
    return worst;
  };

  GradientReport report;
  report.objective = deviation(problem.objective());
  for (const auto& c : problem.equalities()) report.equalities.push_back(deviation(c.fn));
  for (const auto& c : problem.inequalities()) report.inequalities.push_back(deviation(c.fn));
  return report;
}

}  // namespace nlpvis
