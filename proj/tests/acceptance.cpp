// Acceptance gate: prints one PASS/FAIL line per criterion and exits nonzero
// if any fails. Reference values come from oracles.hpp, not from the library.

#include "nlpvis/analytics.hpp"
#include "nlpvis/problem_suite.hpp"
#include "nlpvis/service.hpp"
#include "nlpvis/solver.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace nlpvis;
using json = nlohmann::json;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

class Check {
 public:
  void require(bool cond, const std::string& what) {
    if (!cond && out_.ok) {
      out_.ok = false;
      out_.detail = what;
    }
  }
  void note(const std::string& s) {
    if (out_.ok) out_.detail += (out_.detail.empty() ? "" : ", ") + s;
  }
  Outcome result() const { return out_; }

 private:
  Outcome out_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

template <class F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::vector<Vector> points_of(const Trace& t) {
  std::vector<Vector> out;
  for (const auto& p : optimization_trajectory(t)) out.push_back(p.x);
  return out;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// --- solver anchors ---------------------------------------------------------

Outcome toy_equality() {
  Check c;
  const auto p = make_toy_equality();
  SolveResult r;
  const double dt = seconds([&] { r = solve(p, vec({0, 0})); });
  const double err = (r.x_star - vec({0.5, 0.5})).norm();
  const double h = std::abs(eval_constraints(p, r.x_star).h[0]);
  const double kkt = kkt_residual(p, r.x_star, r.duals);
  c.require(r.converged, "did not converge");
  c.require(err <= 1e-6, "|x*-(0.5,0.5)| = " + fmt(err));
  c.require(h <= 1e-6, "|h| = " + fmt(h));
  c.require(kkt <= 1e-5, "kkt = " + fmt(kkt));
  c.require(dt < 0.1, "runtime " + fmt(dt) + " s");
  c.note("err " + fmt(err) + ", kkt " + fmt(kkt) + ", " + fmt(dt) + " s");
  return c.result();
}

Outcome toy_inequality() {
  Check c;
  const auto r = solve(make_toy_inequality(), vec({0}));
  const double ex = std::abs(r.x_star[0] - 1.0), el = std::abs(r.duals.lambda[0] - 2.0);
  c.require(ex <= 1e-6, "|x*-1| = " + fmt(ex));
  c.require(el <= 1e-3, "|lambda-2| = " + fmt(el));
  c.note("x* err " + fmt(ex) + ", lambda err " + fmt(el));
  return c.result();
}

Outcome disk_rosenbrock() {
  Check c;
  const auto p = make_disk_rosenbrock();
  SolveResult r;
  const double dt = seconds([&] { r = solve(p, vec({0, 0})); });
  const auto [ox, oy] = oracle::disk_rosenbrock_optimum();
  const double err = (r.x_star - vec({ox, oy})).norm();
  c.require(r.feasible, "infeasible");
  c.require(err <= 1e-4, "distance to oracle " + fmt(err));
  c.require(dt < 1.0, "runtime " + fmt(dt) + " s");
  c.note("distance to oracle " + fmt(err) + ", " + fmt(dt) + " s");
  return c.result();
}

Outcome waypoint() {
  Check c;
  const auto p = get_problem("waypoint_T20");
  SolveResult r;
  const double dt = seconds([&] { r = solve(p); });
  const double viol = max_violation(p, r.x_star);
  const double f_star = eval_objective(p, r.x_star).value;
  c.require(viol <= 1e-4, "max_violation " + fmt(viol));
  c.require(dt < 10.0, "runtime " + fmt(dt) + " s");

  // Perturb interior waypoints only; the endpoints are pinned.
  std::mt19937 rng(4242);
  std::normal_distribution<double> n(0.0, 0.02);
  int accepted = 0, tries = 0;
  double best = std::numeric_limits<double>::infinity();
  while (accepted < 50 && tries < 100000) {
    ++tries;
    Vector x = r.x_star;
    for (Eigen::Index i = 2; i < x.size() - 2; ++i) x[i] += n(rng);
    if (max_violation(p, x) > viol) continue;
    ++accepted;
    best = std::min(best, eval_objective(p, x).value);
  }
  c.require(accepted == 50, "only " + std::to_string(accepted) + " feasible perturbations");
  c.require(f_star <= best, "perturbation improves objective: " + fmt(best) + " < " + fmt(f_star));
  c.note("violation " + fmt(viol) + ", f* " + fmt(f_star) + " <= " + fmt(best) + ", " + fmt(dt) + " s");
  return c.result();
}

Outcome step_growth() {
  Check c;
  const auto p = get_problem("waypoint_T20");
  SolverOptions slow, fast;
  slow.grow = 1.0;
  fast.grow = 2.0;
  const auto a = solve(p, slow), b = solve(p, fast);
  const auto na = optimization_trajectory(a.trace).size(), nb = optimization_trajectory(b.trace).size();
  c.require(a.feasible && b.feasible, "a run is infeasible");
  c.require(nb < na, "|S| grow=2.0 " + std::to_string(nb) + " vs grow=1.0 " + std::to_string(na));
  c.note("|S| " + std::to_string(nb) + " (grow 2.0) < " + std::to_string(na) + " (grow 1.0)");
  return c.result();
}

// --- trace audit --------------------------------------------------------------

Outcome trace_audit() {
  Check c;
  std::size_t steps = 0;
  for (const auto& entry : list_problems()) {
    const auto p = get_problem(entry.name);
    SolverOptions o;
    const auto r = solve(p, o);
    DualState duals = DualState::zeros(p.equalities().size(), p.inequalities().size(), o.mu_init);
    std::optional<Vector> x;
    std::optional<double> inner_prev;
    for (const auto& e : r.trace.events) {
      if (const auto* ev = e.as<EvalEvent>()) {
        if (!x && ev->x) x = *ev->x;
        if (ev->x) {
          const auto obj = eval_objective(p, *ev->x);
          const auto cons = eval_constraints(p, *ev->x);
          bool same = rel(obj.value, ev->f) <= 1e-12;
          for (Eigen::Index k = 0; k < cons.h.size(); ++k) same &= rel(cons.h[k], ev->h[k]) <= 1e-12;
          for (Eigen::Index k = 0; k < cons.g.size(); ++k) same &= rel(cons.g[k], ev->g[k]) <= 1e-12;
          c.require(same, entry.name + ": replay mismatch at seq " + std::to_string(e.seq));
        }
      } else if (const auto* xu = e.as<XUpdateEvent>()) {
        ++steps;
        const double prev = evaluate_loss(p, *x, duals).value;
        const double next = evaluate_loss(p, xu->x, duals).value;
        c.require(prev == xu->loss_prev && next == xu->loss_new,
                  entry.name + ": logged loss differs from replay at seq " + std::to_string(e.seq));
        c.require(xu->loss_new <= xu->loss_prev + o.wolfe_c1 * xu->alpha * xu->slope,
                  entry.name + ": Armijo violated at seq " + std::to_string(e.seq));
        c.require(xu->loss_new < xu->loss_prev && (!inner_prev || xu->loss_new < *inner_prev),
                  entry.name + ": L not strictly decreasing at seq " + std::to_string(e.seq));
        inner_prev = xu->loss_new;
        x = xu->x;
      } else if (const auto* du = e.as<DualUpdateEvent>()) {
        c.require(du->duals.lambda.size() == 0 || du->duals.lambda.minCoeff() >= 0.0,
                  entry.name + ": negative lambda at seq " + std::to_string(e.seq));
        duals = du->duals;
        inner_prev.reset();
      } else if (e.kind() == EventKind::outer_iter) {
        inner_prev.reset();
      }
    }
  }
  c.note(std::to_string(steps) + " accepted steps audited across " + std::to_string(list_problems().size()) +
         " problems");
  return c.result();
}

// --- analytics ----------------------------------------------------------------

double projector_gap(const Matrix& a, const Matrix& b) {
  const Matrix d = a * a.transpose() - b * b.transpose();
  return Eigen::JacobiSVD<Matrix>(d).singularValues()(0);
}

Outcome analytics_oracles() {
  Check c;
  std::mt19937 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);

  double pca_gap = 0.0;
  for (int dim : {5, 20, 50}) {
    std::vector<Vector> pts;
    for (int i = 0; i < 2 * dim + 10; ++i) {
      Vector p(dim);
      for (int j = 0; j < dim; ++j) p[j] = (1.0 + 0.3 * j) * n(rng);
      pts.push_back(p);
    }
    const auto [vals, vecs] = oracle::jacobi_eigen(oracle::covariance(pts));
    for (Eigen::Index k = 1; k <= 3; ++k)
      pca_gap = std::max(pca_gap, projector_gap(pca_basis(pts, static_cast<std::size_t>(k)).components, vecs.leftCols(k)));
  }
  c.require(pca_gap <= 1e-9, "PCA projector gap " + fmt(pca_gap));

  const auto run = solve(get_problem("waypoint_attach_T20"));
  const auto pts = points_of(run.trace);
  const std::size_t last = pts.size() - 1;
  const std::size_t a = std::min<std::size_t>(100, last / 4), b = std::min<std::size_t>(600, last / 2);
  const auto plane = three_point_plane(pts[a], pts[b], pts[last]);
  const double scale = std::max({(pts[a] - pts[b]).norm(), (pts[a] - pts[last]).norm(), (pts[b] - pts[last]).norm()});
  double plane_dist = 0.0;
  for (auto i : {a, b, last}) plane_dist = std::max(plane_dist, project_to_plane(plane, pts[i]).dist / scale);
  c.require(plane_dist <= 1e-9, "three-point plane distance " + fmt(plane_dist) + " x scale");

  for (const auto& entry : list_problems()) {
    const auto prog = progression_remaining(solve(get_problem(entry.name)).trace).points;
    bool mono = prog.front().value == 1.0 && std::abs(prog.back().value) <= 1e-12;
    for (std::size_t i = 1; i < prog.size(); ++i) mono &= prog[i].value <= prog[i - 1].value;
    c.require(mono, entry.name + ": progression not monotone from 1 to 0");
  }

  const GridGeometry geo{{-1, 1, -1, 1}, 256, 256};
  std::vector<double> radial(geo.size());
  for (std::size_t r = 0; r < geo.rows; ++r)
    for (std::size_t col = 0; col < geo.cols; ++col) radial[r * geo.cols + col] = std::hypot(geo.s_at(col), geo.t_at(r));
  const std::vector<double> levels{0.1, 0.3, 0.5, 0.7, 0.9};
  const auto bands = isobands(geo, radial, levels);
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < levels.size(); ++k) {
    const double expected = oracle::disk_area(levels[k + 1]) - oracle::disk_area(levels[k]);
    worst = std::max(worst, std::abs(bands.bands[k].area() - expected) / expected);
  }
  c.require(worst <= 0.02, "annulus area error " + fmt(worst));

  // f = ‖x‖² on a plane through the origin of a 6-d space.
  Vector u(6), w(6);
  for (int i = 0; i < 6; ++i) u[i] = n(rng), w[i] = n(rng);
  const auto iso_plane = three_point_plane(u, w, Vector::Zero(6));
  ScalarFunction sq{[](const Vector& x, Vector& g) {
    g = 2.0 * x;
    return x.squaredNorm();
  }};
  const Problem radial_problem("radial", {6}, sq, {}, {});
  const auto rg = sample_grid(radial_problem, iso_plane, 64, 64, {"objective"}, DualState::zeros(0, 0));
  double iso = 0.0;
  for (std::size_t r = 0; r < 64; ++r) {
    for (std::size_t col = 0; col < 64; ++col) {
      const double s = rg.geometry.s_at(col), t = rg.geometry.t_at(r);
      iso = std::max(iso, rel(rg.field("objective").values[r * 64 + col], s * s + t * t));
    }
  }
  c.require(iso <= 1e-12, "sampling isometry error " + fmt(iso));

  c.note("PCA gap " + fmt(pca_gap) + ", plane dist " + fmt(plane_dist) + ", annulus err " + fmt(worst) +
         ", isometry err " + fmt(iso));
  return c.result();
}

// --- trace round trip ----------------------------------------------------------

Outcome trace_round_trip() {
  Check c;
  for (const auto& entry : list_problems()) {
    const auto r = solve(get_problem(entry.name));
    const auto text = write_trace(r.trace);
    std::istringstream in(text);
    const auto back = read_trace(in);
    c.require(back == r.trace, entry.name + ": structural mismatch");
    c.require(write_trace(back) == text, entry.name + ": re-serialization differs");
  }

  const auto text = write_trace(solve(make_toy_equality()).trace);
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  for (std::size_t bad : {std::size_t{1}, std::size_t{2}, lines.size() / 2, lines.size()}) {
    std::string corrupt;
    for (std::size_t i = 0; i < lines.size(); ++i)
      corrupt += (i + 1 == bad ? lines[i].substr(0, lines[i].size() / 2) : lines[i]) + "\n";
    std::istringstream cin(corrupt);
    std::size_t reported = 0;
    try {
      read_trace(cin);
    } catch (const ParseError& e) {
      reported = e.line();
    }
    c.require(reported == bad, "corrupt line " + std::to_string(bad) + " reported as " + std::to_string(reported));
  }
  c.note(std::to_string(list_problems().size()) + " traces bit-exact, malformed lines located");
  return c.result();
}

// --- service parity ------------------------------------------------------------

Outcome service_parity() {
  Check c;
  const auto run = solve(get_problem("waypoint_attach_T20"));
  const auto& trace = run.trace;
  const auto problem = get_problem("waypoint_attach_T20");
  const auto pts = points_of(trace);
  const auto tree = group_tree(trace);
  service::Service svc;
  svc.load(trace);
  std::mt19937 rng(7);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  std::size_t requests = 0;

  // Issues the request twice and compares both bodies with `expected`.
  auto check = [&](const std::string& label, const std::function<service::Response()>& call, const json& expected) {
    ++requests;
    const auto first = call(), second = call();
    c.require(first.status == 200, label + ": status " + std::to_string(first.status) + " " + first.body);
    c.require(first.body == second.body, label + ": repeat differs");
    c.require(first.status != 200 || json::parse(first.body) == expected, label + ": differs from direct call");
  };
  auto envelope = [] { return json{{"api_version", wire::kApiVersion}}; };

  for (int k = 0; k < 20; ++k) {
    // meta: compared field by field against the trace.
    ++requests;
    const auto m = json::parse(svc.get("/trace/meta").body);
    bool ok = m["steps"] == pts.size() && m["events"] == trace.events.size() && m["groups"].size() == tree.size();
    for (std::size_t g = 0; ok && g < tree.size(); ++g)
      ok = m["groups"][g]["name"] == tree[g].name && m["groups"][g]["size"] == tree[g].members.size();
    c.require(ok, "meta differs from trace");

    // events
    const std::size_t offset = pick(trace.events.size() + 10), limit = pick(60);
    const bool filter = k % 2 == 1;
    const EventKind kind = k % 4 == 1 ? EventKind::stepsize_shrink : EventKind::x_update;
    json ev = envelope(), page = json::array();
    std::size_t total = 0;
    for (const auto& e : trace.events) {
      if (filter && e.kind() != kind) continue;
      if (total >= offset && total - offset < limit) {
        json j = event_to_json(e);
        if (e.kind() == EventKind::stepsize_shrink) j["highlight"] = true;
        page.push_back(j);
      }
      ++total;
    }
    ev["offset"] = offset;
    ev["limit"] = limit;
    ev["kinds"] = filter ? json::array({to_string(kind)}) : json::array();
    ev["total"] = total;
    ev["events"] = page;
    std::map<std::string, std::string> q{{"offset", std::to_string(offset)}, {"limit", std::to_string(limit)}};
    if (filter) q["kinds"] = to_string(kind);
    check("events", [&] { return svc.get("/trace/events", q); }, ev);

    // progression
    json pr = envelope();
    const auto prog = progression_remaining(trace);
    pr["degenerate"] = prog.degenerate;
    pr["points"] = wire::series_to_json(prog.points);
    check("progression", [&] { return svc.get("/series/progression"); }, pr);

    // group series
    const auto& node = tree[pick(tree.size())];
    const bool expanded = k % 3 == 0;
    json gs = envelope();
    gs["group"] = node.name;
    gs["kind"] = to_string(node.kind);
    gs["expanded"] = expanded;
    if (expanded) {
      json series = json::array();
      for (const auto& mem : node.members)
        series.push_back({{"id", mem.info.instance_id},
                          {"kind", to_string(mem.info.kind)},
                          {"time_indices", mem.info.time_indices},
                          {"points", wire::series_to_json(constraint_series(trace, node.name, mem.info.instance_id))}});
      gs["series"] = series;
    } else {
      gs["points"] = wire::series_to_json(aggregate_group_series(trace, node.name));
    }
    check("group", [&] { return svc.get("/series/group/" + node.name, {{"expanded", expanded ? "true" : "false"}}); },
          gs);

    // default plane
    const std::size_t step = pick(pts.size() - 1);
    const auto dplane = default_plane(pts, step);
    const auto dresp = svc.post("/plane/default", json{{"step", step}});
    ++requests;
    c.require(dresp.status == 200 && json::parse(dresp.body)["plane"] == wire::plane_to_json(dplane),
              "default plane differs from direct call");
    c.require(svc.post("/plane/default", json{{"step", step}}).body == dresp.body, "default plane repeat differs");
    const auto plane_id = json::parse(dresp.body)["plane_id"];

    // three-point plane
    const std::size_t sa = pick(pts.size()), sb = pick(pts.size()), sc = pick(pts.size());
    ++requests;
    const auto tresp = svc.post("/plane/threepoint", json{{"step_a", sa}, {"step_b", sb}, {"step_c", sc}});
    try {
      const auto tplane = three_point_plane(pts[sa], pts[sb], pts[sc], pts);
      c.require(tresp.status == 200 && json::parse(tresp.body)["plane"] == wire::plane_to_json(tplane),
                "three-point plane differs from direct call");
    } catch (const DegeneratePlane&) {
      c.require(tresp.status == 422, "degenerate three-point plane not rejected");
    }

    // sample
    wire::LandscapeRequest lr;
    lr.rows = 2 + pick(12);
    lr.cols = 2 + pick(12);
    lr.functions = {"objective"};
    if (k % 2 == 0) lr.functions.push_back("loss");
    const auto& member = tree[pick(tree.size())].members.front().info;
    if (k % 3 != 2) lr.functions.push_back(member.group + "/" + member.instance_id);
    if (k % 2 == 1) lr.tau = 0.25 * static_cast<double>(pick(8));
    lr.duals_step = pick(pts.size());
    json req{{"plane_id", plane_id}, {"resolution", {lr.rows, lr.cols}}, {"functions", lr.functions},
             {"duals_step", lr.duals_step}};
    if (lr.tau) req["tau"] = *lr.tau;
    json sm = envelope();
    sm["plane_id"] = plane_id;
    sm["duals_step"] = lr.duals_step;
    sm.update(wire::landscape_to_json(wire::compute_landscape(problem, trace, dplane, lr)));
    check("sample", [&] { return svc.post("/sample", req); }, sm);

    // projection
    std::vector<std::size_t> steps, configs;
    std::string steps_q, configs_q;
    for (std::size_t i = 0, count = pick(4); i < count; ++i) {
      steps.push_back(pick(pts.size()));
      steps_q += (steps_q.empty() ? "" : ",") + std::to_string(steps.back());
    }
    for (std::size_t i = 0, count = pick(3); i < count; ++i) {
      configs.push_back(pick(20));
      configs_q += (configs_q.empty() ? "" : ",") + std::to_string(configs.back());
    }
    json pj = envelope();
    pj.update(wire::projection_to_json(path_evolution_projection(trace, steps, configs)));
    check("projection", [&] { return svc.get("/projection/paths", {{"steps", steps_q}, {"configs", configs_q}}); },
          pj);
  }
  c.note(std::to_string(requests) + " randomized requests over 8 endpoints");
  return c.result();
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"toy-equality", toy_equality},
      {"toy-inequality", toy_inequality},
      {"disk-rosenbrock", disk_rosenbrock},
      {"waypoint-blocking-obstacle", waypoint},
      {"step-growth", step_growth},
      {"trace-audit", trace_audit},
      {"analytics-oracles", analytics_oracles},
      {"trace-round-trip", trace_round_trip},
      {"service-parity", service_parity},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.ok ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.ok ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
