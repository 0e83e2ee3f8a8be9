#pragma once

#include "nlpvis/problem.hpp"
#include "nlpvis/trace.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>

namespace nlpvis {

struct SolverOptions {
  double alpha_init = 1.0;
  double shrink = 0.5;      // backtracking factor, in (0, 1)
  double grow = 1.2;        // step-size carry-over factor after an accepted step, >= 1
  double wolfe_c1 = 1e-4;   // sufficient-decrease coefficient
  double inner_tol = 1e-8;  // ‖∇L‖ stop
  double outer_tol = 1e-6;  // max_violation stop
  double step_tol = 1e-10;  // ‖Δx‖ stop
  std::size_t max_inner = 500;
  std::size_t max_outer = 200;
  double mu_init = 1.0;
  double mu_growth = 1.0;  // unconditional per-update penalty factor
  /// Extra penalty factor applied at a dual update when max_violation fell by
  /// less than `stall_ratio` since the previous update (1 disables).
  double stall_growth = 2.0;
  double stall_ratio = 0.9;
  /// Store x on every stride-th probe only (accepted probes, x_init and x*
  /// are always stored).
  std::size_t trace_stride = 1;

  void validate() const {
    if (!(alpha_init > 0.0)) throw InvalidArgument("alpha_init must be positive");
    if (!(shrink > 0.0 && shrink < 1.0)) throw InvalidArgument("shrink must lie in (0, 1)");
    if (!(grow >= 1.0)) throw InvalidArgument("grow must be >= 1");
    if (!(wolfe_c1 > 0.0 && wolfe_c1 < 1.0)) throw InvalidArgument("wolfe_c1 must lie in (0, 1)");
    if (!(inner_tol > 0.0 && outer_tol > 0.0 && step_tol > 0.0)) throw InvalidArgument("tolerances must be positive");
    if (!(mu_init > 0.0)) throw InvalidArgument("mu_init must be positive");
    if (!(mu_growth >= 1.0)) throw InvalidArgument("mu_growth must be >= 1");
    if (!(stall_growth >= 1.0)) throw InvalidArgument("stall_growth must be >= 1");
    if (!(stall_ratio > 0.0 && stall_ratio <= 1.0)) throw InvalidArgument("stall_ratio must lie in (0, 1]");
    if (trace_stride == 0) throw InvalidArgument("trace_stride must be >= 1");
  }

  std::map<std::string, double> to_map() const {
    return {{"alpha_init", alpha_init},
            {"shrink", shrink},
            {"grow", grow},
            {"wolfe_c1", wolfe_c1},
            {"inner_tol", inner_tol},
            {"outer_tol", outer_tol},
            {"step_tol", step_tol},
            {"max_inner", static_cast<double>(max_inner)},
            {"max_outer", static_cast<double>(max_outer)},
            {"mu_init", mu_init},
            {"mu_growth", mu_growth},
            {"stall_growth", stall_growth},
            {"stall_ratio", stall_ratio},
            {"trace_stride", static_cast<double>(trace_stride)}};
  }

  /// Sets one field by name; used for `--opt key=value`.
  void set(const std::string& key, double value) {
    auto count = [&](std::size_t& field) {
      if (!(value >= 0.0) || value != std::floor(value)) throw InvalidArgument(key + " must be a nonnegative integer");
      field = static_cast<std::size_t>(value);
    };
    if (key == "alpha_init") alpha_init = value;
    else if (key == "shrink") shrink = value;
    else if (key == "grow") grow = value;
    else if (key == "wolfe_c1") wolfe_c1 = value;
    else if (key == "inner_tol") inner_tol = value;
    else if (key == "outer_tol") outer_tol = value;
    else if (key == "step_tol") step_tol = value;
    else if (key == "max_inner") count(max_inner);
    else if (key == "max_outer") count(max_outer);
    else if (key == "mu_init") mu_init = value;
    else if (key == "mu_growth") mu_growth = value;
    else if (key == "stall_growth") stall_growth = value;
    else if (key == "stall_ratio") stall_ratio = value;
    else if (key == "trace_stride") count(trace_stride);
    else throw InvalidArgument("unknown solver option '" + key + "'");
  }

  static SolverOptions from_map(const std::map<std::string, double>& values) {
    SolverOptions o;
    for (const auto& [k, v] : values) o.set(k, v);
    return o;
  }
};

/// Raised when backtracking shrinks the step below 1e-16 of its start value.
class LineSearchFailure : public Error {
 public:
  LineSearchFailure(const std::string& what, Vector best) : Error(what), best_(std::move(best)) {}
  const Vector& best_point() const noexcept { return best_; }

 private:
  Vector best_;
};

/// Raised when a non-finite value shows up; carries the trace up to that point.
class Diverged : public Error {
 public:
  Diverged(const std::string& what, Trace partial) : Error(what), trace_(std::move(partial)) {}
  const Trace& trace() const noexcept { return trace_; }

 private:
  Trace trace_;
};

// ---------------------------------------------------------------------------
// Augmented Lagrangian
//
//   L(x) = f + κᵀh + mu ‖h‖² + Σ_j ψ(g_j, λ_j)
//   ψ(g, λ) = λ g + mu g²        if λ + 2 mu g > 0
//           = −λ² / (4 mu)       otherwise
//   ∇L   = ∇f + Jhᵀ(κ + 2 mu h) + Jgᵀ max(0, λ + 2 mu g)
//
// For λ_j = 0 the inequality term is [g_j > 0] g_j² (times mu), and wherever
// λ_j + 2 mu g_j > 0 it equals λ_j g_j + mu g_j². The constant branch keeps L
// bounded below when g_j is unbounded below.

/// Per-inequality multiplier estimate max(0, λ + 2 mu g); nonzero entries mark
/// the active penalty terms.
inline Vector shifted_multipliers(const Vector& g, const DualState& duals) {
  return (duals.lambda + 2.0 * duals.mu * g).cwiseMax(0.0);
}

/// Everything computed at one point: f, h, g with derivatives, and L with ∇L.
struct LossEvaluation {
  double f = 0.0;
  Vector grad_f;
  Vector h;
  Vector g;
  Matrix Jh;
  Matrix Jg;
  double value = 0.0;
  Vector gradient;
};

inline void check_duals(const Problem& problem, const DualState& duals) {
  if (static_cast<std::size_t>(duals.kappa.size()) != problem.equalities().size() ||
      static_cast<std::size_t>(duals.lambda.size()) != problem.inequalities().size())
    throw InvalidArgument("dual state is not sized to the problem");
}

inline LossEvaluation evaluate_loss(const Problem& problem, const Vector& x, const DualState& duals) {
  check_duals(problem, duals);
  auto obj = eval_objective(problem, x);
  auto cons = eval_constraints(problem, x);
  LossEvaluation out;
  out.f = obj.value;
  out.grad_f = std::move(obj.gradient);
  out.h = std::move(cons.h);
  out.g = std::move(cons.g);
  out.Jh = std::move(cons.Jh);
  out.Jg = std::move(cons.Jg);

  const Vector shifted = shifted_multipliers(out.g, duals);
  out.value = out.f + duals.kappa.dot(out.h) + duals.mu * out.h.squaredNorm();
  for (Eigen::Index j = 0; j < out.g.size(); ++j) {
    const double lam = duals.lambda[j];
    out.value += shifted[j] > 0.0 ? lam * out.g[j] + duals.mu * out.g[j] * out.g[j]
                                  : -lam * lam / (4.0 * duals.mu);
  }
  out.gradient = out.grad_f;
  if (out.h.size() > 0) out.gradient += out.Jh.transpose() * (duals.kappa + 2.0 * duals.mu * out.h);
  if (out.g.size() > 0) out.gradient += out.Jg.transpose() * shifted;
  return out;
}

struct LossValue {
  double value = 0.0;
  Vector gradient;
};

inline LossValue augmented_loss(const Problem& problem, const Vector& x, const DualState& duals) {
  auto e = evaluate_loss(problem, x, duals);
  return {e.value, std::move(e.gradient)};
}

/// Second-order model of L: exact Hessian terms the problem supplies plus the
/// Gauss-Newton part 2 mu (Jhᵀ Jh + Σ_{λ_j + 2 mu g_j > 0} ∇g_j ∇g_jᵀ).
inline Matrix loss_hessian(const Problem& problem, const Vector& x, const DualState& duals,
                           const LossEvaluation& at) {
  const auto n = x.size();
  Matrix H = Matrix::Zero(n, n);
  if (problem.objective().has_hessian()) problem.objective().add_hessian(x, 1.0, H);
  const auto& eq = problem.equalities();
  for (std::size_t i = 0; i < eq.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (eq[i].fn.has_hessian()) eq[i].fn.add_hessian(x, duals.kappa[k] + 2.0 * duals.mu * at.h[k], H);
  }
  const Vector shifted = shifted_multipliers(at.g, duals);
  const auto& in = problem.inequalities();
  for (std::size_t j = 0; j < in.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    if (shifted[k] > 0.0 && in[j].fn.has_hessian()) in[j].fn.add_hessian(x, shifted[k], H);
  }
  if (at.h.size() > 0) H.noalias() += 2.0 * duals.mu * at.Jh.transpose() * at.Jh;
  for (Eigen::Index k = 0; k < at.g.size(); ++k) {
    if (shifted[k] > 0.0) H.noalias() += 2.0 * duals.mu * at.Jg.row(k).transpose() * at.Jg.row(k);
  }
  return H;
}

/// Damped Newton direction: solve (H + νI)δ = −∇L, ν = 1e-10, 1e-9, … until
/// the factorization succeeds and δ descends. Falls back to −∇L.
inline Vector search_direction(const Problem& problem, const Vector& x, const DualState& duals,
                               const LossEvaluation& at) {
  const Vector steepest = -at.gradient;
  if (!problem.has_second_order()) return steepest;
  const Matrix H = loss_hessian(problem, x, duals, at);
  if (!H.allFinite()) return steepest;
  const double cap = 1e12 * std::max(1.0, H.cwiseAbs().maxCoeff());
  const auto n = x.size();
  for (double nu = 1e-10; nu <= cap; nu *= 10.0) {
    Eigen::LLT<Matrix> llt(H + nu * Matrix::Identity(n, n));
    if (llt.info() != Eigen::Success) continue;
    Vector delta = llt.solve(steepest);
    if (delta.allFinite() && at.gradient.dot(delta) < 0.0) return delta;
  }
  return steepest;
}

// ---------------------------------------------------------------------------
// Line search

struct NullLineSearchSink {
  template <class Eval>
  std::size_t on_probe(const Vector&, const Eval&, double) {
    return 0;
  }
  void on_shrink(double, double) {}
};

template <class Eval>
struct LineSearchResult {
  double alpha = 0.0;
  Vector x;
  Eval at;
  double slope = 0.0;  // ∇L(x)·δ
  std::size_t probe_id = 0;
};

/// Backtracking along `delta` from `alpha`: probe x + aδ for a = alpha,
/// alpha·shrink, … and accept the first probe with
///   L(x + aδ) ≤ L(x) + c1·a·∇L(x)·δ   and   L(x + aδ) < L(x).
/// Every probe goes to `sink.on_probe`, every rejection to `sink.on_shrink`.
///
/// `loss(x)` must return an object with `.value` and `.gradient`.
template <class Loss, class Eval, class Sink>
auto line_search(Loss&& loss, const Vector& x, const Eval& at_x, const Vector& delta, double alpha,
                 const SolverOptions& opts, Sink&& sink) -> LineSearchResult<std::decay_t<decltype(loss(x))>> {
  const double slope = at_x.gradient.dot(delta);
  if (!(slope < 0.0)) throw InvalidArgument("line search direction is not a descent direction");
  if (!(alpha > 0.0)) throw InvalidArgument("line search needs a positive initial step");

  const double floor = 1e-16 * alpha;
  double a = alpha;
  while (a >= floor) {
    Vector probe = x + a * delta;
    auto at = loss(probe);
    const std::size_t id = sink.on_probe(probe, at, a);
    if (at.value <= at_x.value + opts.wolfe_c1 * a * slope && at.value < at_x.value) {
      return {a, std::move(probe), std::move(at), slope, id};
    }
    const double next = a * opts.shrink;
    sink.on_shrink(a, next);
    a = next;
  }
  throw LineSearchFailure("line search step fell below 1e-16 of its initial value", x);
}

// ---------------------------------------------------------------------------
// Solver

/// Writes solver events into a trace. Handles eval payloads and the stride
/// thinning of stored probe points.
class SolverLog {
 public:
  SolverLog(Trace& trace, std::size_t stride) : rec_(trace), stride_(stride) {}

  std::size_t eval(const Vector& x, const LossEvaluation& at, double alpha, bool force_x) {
    EvalEvent e;
    if (force_x || probes_ % stride_ == 0) e.x = x;
    ++probes_;
    e.f = at.f;
    e.h = at.h;
    e.g = at.g;
    e.loss = at.value;
    e.grad_norm = at.gradient.norm();
    e.alpha = alpha;
    last_eval_ = rec_.record(std::move(e));
    return last_eval_;
  }

  /// Stores x on a previously thinned probe that turned out to be accepted.
  void keep_point(std::size_t seq, const Vector& x) {
    auto& ev = std::get<EvalEvent>(rec_.trace().events[seq].payload);
    if (!ev.x) ev.x = x;
  }

  std::size_t record(EventPayload p) { return rec_.record(std::move(p)); }
  std::size_t last_eval() const noexcept { return last_eval_; }
  Trace& trace() { return rec_.trace(); }

 private:
  TraceRecorder rec_;
  std::size_t stride_;
  std::size_t probes_ = 0;
  std::size_t last_eval_ = 0;
};

struct InnerResult {
  Vector x;
  LossEvaluation at;
  std::size_t iterations = 0;
  bool line_search_failed = false;
};

/// Approximately minimizes L for fixed duals, starting from x.
inline InnerResult inner_minimize(const Problem& problem, const Vector& x0, const DualState& duals,
                                  const SolverOptions& opts, SolverLog* log) {
  InnerResult r{x0, {}, 0, false};
  if (opts.max_inner == 0) return r;
  r.at = evaluate_loss(problem, x0, duals);
  double alpha = opts.alpha_init;

  struct Sink {
    SolverLog* log;
    std::size_t on_probe(const Vector& x, const LossEvaluation& at, double a) {
      return log ? log->eval(x, at, a, false) : 0;
    }
    void on_shrink(double a_old, double a_new) {
      if (log) log->record(ShrinkEvent{a_old, a_new});
    }
  } sink{log};
  auto loss = [&](const Vector& x) { return evaluate_loss(problem, x, duals); };

  while (r.iterations < opts.max_inner) {
    if (!(r.at.gradient.norm() > opts.inner_tol)) break;
    const Vector delta = search_direction(problem, r.x, duals, r.at);
    LineSearchResult<LossEvaluation> ls;
    try {
      ls = line_search(loss, r.x, r.at, delta, alpha, opts, sink);
    } catch (const LineSearchFailure&) {
      if (log) log->record(AbortedEvent{"line-search-failure", "inner"});
      r.line_search_failed = true;
      break;
    }
    ++r.iterations;
    if (log) {
      log->keep_point(ls.probe_id, ls.x);
      log->record(XUpdateEvent{ls.x, ls.probe_id, ls.alpha, r.at.value, ls.at.value, ls.slope});
    }
    const double step = (ls.x - r.x).norm();
    r.x = std::move(ls.x);
    r.at = std::move(ls.at);
    alpha = std::min(ls.alpha * opts.grow, opts.alpha_init);
    if (step <= opts.step_tol) break;
  }
  return r;
}

/// κ ← κ + 2 mu h,  λ ← max(0, λ + 2 mu g),  mu ← mu · mu_growth.
inline DualState update_duals(const DualState& duals, const Vector& h, const Vector& g, double mu_growth = 1.0) {
  if (h.size() != duals.kappa.size() || g.size() != duals.lambda.size())
    throw InvalidArgument("constraint values are not sized to the dual state");
  DualState next;
  next.kappa = duals.kappa + 2.0 * duals.mu * h;
  next.lambda = (duals.lambda + 2.0 * duals.mu * g).cwiseMax(0.0);
  next.mu = duals.mu * mu_growth;
  return next;
}

/// First-order optimality error: max of stationarity ‖∇f + Jhᵀκ + Jgᵀλ‖∞,
/// primal infeasibility, complementarity max|λ_j g_j| and dual infeasibility.
inline double kkt_residual(const Problem& problem, const Vector& x, const DualState& duals) {
  check_duals(problem, duals);
  const auto obj = eval_objective(problem, x);
  const auto c = eval_constraints(problem, x);
  Vector stat = obj.gradient;
  if (c.h.size() > 0) stat += c.Jh.transpose() * duals.kappa;
  if (c.g.size() > 0) stat += c.Jg.transpose() * duals.lambda;
  double r = stat.size() > 0 ? stat.cwiseAbs().maxCoeff() : 0.0;
  r = std::max(r, max_violation(c.h, c.g));
  if (c.g.size() > 0) {
    r = std::max(r, duals.lambda.cwiseProduct(c.g).cwiseAbs().maxCoeff());
    r = std::max(r, std::max(0.0, -duals.lambda.minCoeff()));
  }
  return r;
}

struct SolveResult {
  Vector x_star;
  DualState duals;
  bool converged = false;
  bool feasible = false;
  std::size_t outer_iterations = 0;
  Trace trace;
};

/// Augmented Lagrangian outer loop: minimize L, stop when max_violation ≤
/// outer_tol and ‖∇L‖ ≤ inner_tol, otherwise update the duals and repeat.
/// mu stays at mu_init (times mu_growth per update) unless the violation
/// stalls, in which case it is also multiplied by stall_growth.
/// x_init is logged as the eval event with seq 0.
inline SolveResult solve(const Problem& problem, const Vector& x_init, const SolverOptions& opts = {}) {
  opts.validate();
  detail::check_point(problem, x_init);
  if (!x_init.allFinite()) throw InvalidArgument("initial point is not finite");

  SolveResult result;
  result.trace.header = {problem.info(), opts.to_map()};
  SolverLog log(result.trace, opts.trace_stride);

  DualState duals = DualState::zeros(problem.equalities().size(), problem.inequalities().size(), opts.mu_init);
  Vector x = x_init;
  double previous_violation = std::numeric_limits<double>::infinity();
  LossEvaluation at = evaluate_loss(problem, x, duals);
  log.eval(x, at, 0.0, true);
  auto diverged = [&](const std::string& where) {
    log.record(AbortedEvent{"non-finite value " + where, "solve"});
    result.trace.final_index = log.last_eval();
    throw Diverged("non-finite value " + where, std::move(result.trace));
  };
  if (!std::isfinite(at.value) || !at.gradient.allFinite()) diverged("at the initial point");

  for (std::size_t outer = 0; outer < opts.max_outer; ++outer) {
    log.record(OuterIterEvent{outer});
    auto inner = inner_minimize(problem, x, duals, opts, &log);
    result.outer_iterations = outer + 1;
    if (opts.max_inner > 0) {
      x = std::move(inner.x);
      at = std::move(inner.at);
    }
    if (!std::isfinite(at.value) || !at.gradient.allFinite()) diverged("after inner minimization");
    const double violation = max_violation(at.h, at.g);
    if (violation <= opts.outer_tol && at.gradient.norm() <= opts.inner_tol) {
      // Report the multiplier estimates that make ∇L the Lagrangian gradient.
      duals = update_duals(duals, at.h, at.g);
      log.record(DualUpdateEvent{duals});
      result.converged = true;
      break;
    }
    const bool stalled = violation > opts.stall_ratio * previous_violation;
    previous_violation = violation;
    duals = update_duals(duals, at.h, at.g, opts.mu_growth * (stalled ? opts.stall_growth : 1.0));
    log.record(DualUpdateEvent{duals});
    at = evaluate_loss(problem, x, duals);
  }

  // The trajectory must end at x*; add a closing evaluation when the last
  // probe was a rejected one.
  const auto& last = std::get<EvalEvent>(result.trace.events[log.last_eval()].payload);
  if (!last.x || !detail::same_bits(*last.x, x)) log.eval(x, evaluate_loss(problem, x, duals), 0.0, true);
  result.trace.final_index = log.last_eval();

  const auto final_at = evaluate_loss(problem, x, duals);
  const double violation = max_violation(final_at.h, final_at.g);
  result.feasible = violation <= opts.outer_tol;
  if (result.converged) {
    log.record(ConvergedEvent{result.feasible, violation, final_at.gradient.norm()});
  } else {
    log.record(AbortedEvent{"iteration-limit", "solve"});
  }
  result.x_star = std::move(x);
  result.duals = std::move(duals);
  return result;
}

inline SolveResult solve(const Problem& problem, const SolverOptions& opts = {}) {
  return solve(problem, problem.initial_point(), opts);
}

}  // namespace nlpvis
