#pragma once

#include "nlpvis/problem.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace nlpvis {

// ---------------------------------------------------------------------------
// Analytic toys

/// min ‖x‖² s.t. x₁ + x₂ − 1 = 0. Optimum (0.5, 0.5), κ* = −1.
inline Problem make_toy_equality() {
  ScalarFunction f{[](const Vector& x, Vector& grad) {
                     grad = 2.0 * x;
                     return x.squaredNorm();
                   },
                   [](const Vector& x, double w, Matrix& H) {
                     H.diagonal().array() += 2.0 * w;
                     (void)x;
                   }};
  ConstraintSpec h{"sum", "sum", ConstraintKind::equality, {0},
                   {[](const Vector& x, Vector& grad) {
                      grad = Vector::Ones(2);
                      return x[0] + x[1] - 1.0;
                    },
                    [](const Vector&, double, Matrix&) {}}};
  return Problem("toy_equality", {2}, std::move(f), {std::move(h)}, {});
}

/// min (x − 2)² s.t. x − 1 ≤ 0. Optimum x* = 1 with λ* = 2.
inline Problem make_toy_inequality() {
  ScalarFunction f{[](const Vector& x, Vector& grad) {
                     grad.resize(1);
                     grad[0] = 2.0 * (x[0] - 2.0);
                     return (x[0] - 2.0) * (x[0] - 2.0);
                   },
                   [](const Vector&, double w, Matrix& H) { H(0, 0) += 2.0 * w; }};
  ConstraintSpec g{"bound", "bound", ConstraintKind::inequality, {0},
                   {[](const Vector& x, Vector& grad) {
                      grad = Vector::Ones(1);
                      return x[0] - 1.0;
                    },
                    [](const Vector&, double, Matrix&) {}}};
  return Problem("toy_inequality", {1}, std::move(f), {}, {std::move(g)});
}

/// Rosenbrock restricted to the unit disk: min 100(x₂−x₁²)² + (1−x₁)² s.t.
/// x₁² + x₂² − 1 ≤ 0. The unconstrained minimum (1, 1) is infeasible.
inline Problem make_disk_rosenbrock() {
  ScalarFunction f{[](const Vector& x, Vector& grad) {
                     const double a = x[1] - x[0] * x[0];
                     const double b = 1.0 - x[0];
                     grad.resize(2);
                     grad[0] = -400.0 * a * x[0] - 2.0 * b;
                     grad[1] = 200.0 * a;
                     return 100.0 * a * a + b * b;
                   },
                   [](const Vector& x, double w, Matrix& H) {
                     H(0, 0) += w * (1200.0 * x[0] * x[0] - 400.0 * x[1] + 2.0);
                     H(0, 1) += w * (-400.0 * x[0]);
                     H(1, 0) += w * (-400.0 * x[0]);
                     H(1, 1) += w * 200.0;
                   }};
  ConstraintSpec g{"disk", "disk", ConstraintKind::inequality, {0},
                   {[](const Vector& x, Vector& grad) {
                      grad = 2.0 * x;
                      return x.squaredNorm() - 1.0;
                    },
                    [](const Vector&, double w, Matrix& H) { H.diagonal().array() += 2.0 * w; }}};
  return Problem("disk_rosenbrock", {2}, std::move(f), {}, {std::move(g)});
}

// ---------------------------------------------------------------------------
// Synthetic time-discretized motion problems

struct Obstacle {
  Vector center;
  double radius = 0.0;
};

/// A path of T waypoints in d dimensions from `start` to `goal` around
/// spherical obstacles. Waypoints are indexed 0..T−1.
struct WaypointSceneSpec {
  std::string name = "scene";
  std::size_t T = 0;
  std::size_t d = 2;
  Vector start;
  Vector goal;
  std::vector<Obstacle> obstacles;
  /// When set, waypoints event_index and event_index+1 are tied to a target
  /// moving with velocity (goal − start)/(T − 1).
  std::optional<std::size_t> event_index;
  int smoothness_order = 1;
  /// Amplitude of the deterministic noise added to the straight-line
  /// initialization, relative to ‖goal − start‖.
  double init_noise = 0.25;
  unsigned init_seed = 7;
};

inline void validate(const WaypointSceneSpec& spec) {
  if (spec.T < 3) throw InvalidArgument("scene needs T >= 3");
  if (spec.d < 1) throw InvalidArgument("scene needs d >= 1");
  const auto d = static_cast<Eigen::Index>(spec.d);
  if (spec.start.size() != d || spec.goal.size() != d)
    throw InvalidArgument("start/goal must have d components");
  for (const auto& o : spec.obstacles) {
    if (o.center.size() != d) throw InvalidArgument("obstacle center must have d components");
    if (!(o.radius > 0.0)) throw InvalidArgument("obstacle radius must be positive");
  }
  if (spec.event_index && !(*spec.event_index > 0 && *spec.event_index < spec.T - 1))
    throw InvalidArgument("event_index must lie in (0, T-1)");
  if (spec.smoothness_order != 1 && spec.smoothness_order != 2)
    throw InvalidArgument("smoothness_order must be 1 or 2");
  if (!(spec.init_noise >= 0.0)) throw InvalidArgument("init_noise must be nonnegative");
}

namespace detail {

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Finite-difference stencil matrix (rows × T) whose squared row products
/// sum to the smoothness cost.
inline Matrix difference_operator(std::size_t T, int order) {
  const auto t = static_cast<Eigen::Index>(T);
  if (order == 1) {
    Matrix D = Matrix::Zero(t - 1, t);
    for (Eigen::Index r = 0; r + 1 < t; ++r) {
      D(r, r) = -1.0;
      D(r, r + 1) = 1.0;
    }
    return D;
  }
  Matrix D = Matrix::Zero(t - 2, t);
  for (Eigen::Index r = 0; r + 2 < t; ++r) {
    D(r, r) = 1.0;
    D(r, r + 1) = -2.0;
    D(r, r + 2) = 1.0;
  }
  return D;
}

}  // namespace detail

/// Serializes a scene as the flat `key: value` document read by
/// parse_scene(). Vectors are space separated; each obstacle is one
/// `obstacle:` line holding the center components followed by the radius.
inline std::string format_scene(const WaypointSceneSpec& spec) {
  std::ostringstream os;
  auto vec = [&](const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << detail::format_number(v[i]);
  };
  os << "format_version: 1\n";
  os << "name: " << spec.name << "\n";
  os << "T: " << spec.T << "\n";
  os << "d: " << spec.d << "\n";
  os << "start: ";
  vec(spec.start);
  os << "\ngoal: ";
  vec(spec.goal);
  os << "\n";
  for (const auto& o : spec.obstacles) {
    os << "obstacle: ";
    vec(o.center);
    os << " " << detail::format_number(o.radius) << "\n";
  }
  if (spec.event_index) os << "event_index: " << *spec.event_index << "\n";
  os << "smoothness_order: " << spec.smoothness_order << "\n";
  os << "init_noise: " << detail::format_number(spec.init_noise) << "\n";
  os << "init_seed: " << spec.init_seed << "\n";
  return os.str();
}

inline WaypointSceneSpec parse_scene(const std::string& text) {
  WaypointSceneSpec spec;
  std::optional<int> version;
  std::vector<std::vector<double>> raw_obstacles;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;

  auto numbers = [&](const std::string& value) {
    std::istringstream vs(value);
    std::vector<double> out;
    std::string tok;
    while (vs >> tok) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(lineno, "not a number: '" + tok + "'");
      }
    }
    return out;
  };
  auto integer = [&](const std::string& value) -> long long {
    auto v = numbers(value);
    if (v.size() != 1 || v[0] != static_cast<double>(static_cast<long long>(v[0])) || v[0] < 0)
      throw ParseError(lineno, "expected a nonnegative integer");
    return static_cast<long long>(v[0]);
  };
  auto to_vector = [](const std::vector<double>& v) {
    return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError(lineno, "expected 'key: value'");
    std::string key = line.substr(first, colon - first);
    key.erase(key.find_last_not_of(" \t") + 1);
    std::string value = line.substr(colon + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    value.erase(value.find_last_not_of(" \t\r") + 1);

    if (key == "format_version") {
      version = static_cast<int>(integer(value));
    } else if (key == "name") {
      spec.name = value;
    } else if (key == "T") {
      spec.T = static_cast<std::size_t>(integer(value));
    } else if (key == "d") {
      spec.d = static_cast<std::size_t>(integer(value));
    } else if (key == "start") {
      spec.start = to_vector(numbers(value));
    } else if (key == "goal") {
      spec.goal = to_vector(numbers(value));
    } else if (key == "obstacle") {
      raw_obstacles.push_back(numbers(value));
    } else if (key == "event_index") {
      spec.event_index = static_cast<std::size_t>(integer(value));
    } else if (key == "smoothness_order") {
      spec.smoothness_order = static_cast<int>(integer(value));
    } else if (key == "init_noise") {
      auto v = numbers(value);
      if (v.size() != 1) throw ParseError(lineno, "init_noise takes one number");
      spec.init_noise = v[0];
    } else if (key == "init_seed") {
      spec.init_seed = static_cast<unsigned>(integer(value));
    } else {
      throw ParseError(lineno, "unknown key '" + key + "'");
    }
  }
  if (!version) throw ParseError(lineno, "missing format_version");
  if (*version != 1) throw UnsupportedVersion("scene format_version " + std::to_string(*version) + " is not supported");
  for (const auto& o : raw_obstacles) {
    if (o.size() != spec.d + 1) throw InvalidArgument("obstacle needs d center components and a radius");
    Obstacle ob;
    ob.center = Eigen::Map<const Vector>(o.data(), static_cast<Eigen::Index>(spec.d));
    ob.radius = o.back();
    spec.obstacles.push_back(std::move(ob));
  }
  validate(spec);
  return spec;
}

/// Builds the waypoint NLP:
///   f = Σ ‖Δ^k c‖² (k = smoothness order),
///   group "endpoint": c_0 = start, c_{T−1} = goal (one equality per component),
///   group "obstacle_k": r² − ‖c_t − p‖² ≤ 0 for every waypoint t,
///   group "attach": c_{e+1} − c_e = (goal − start)/(T − 1) when an event is set.
inline Problem make_waypoint_path(const WaypointSceneSpec& spec) {
  validate(spec);
  const std::size_t T = spec.T;
  const auto d = static_cast<Eigen::Index>(spec.d);
  const auto n = static_cast<Eigen::Index>(T) * d;

  const Matrix D = detail::difference_operator(T, spec.smoothness_order);
  const Matrix A = D.transpose() * D;  // T × T

  ScalarFunction f{[A, d, T](const Vector& x, Vector& grad) {
                     Eigen::Map<const Matrix> X(x.data(), d, static_cast<Eigen::Index>(T));
                     const Matrix XA = X * A;
                     grad = Eigen::Map<const Vector>(XA.data(), XA.size()) * 2.0;
                     return XA.cwiseProduct(X).sum();
                   },
                   [A, d, T](const Vector&, double w, Matrix& H) {
                     const auto t = static_cast<Eigen::Index>(T);
                     for (Eigen::Index a = 0; a < t; ++a)
                       for (Eigen::Index b = 0; b < t; ++b)
                         if (A(a, b) != 0.0)
                           H.block(a * d, b * d, d, d).diagonal().array() += 2.0 * w * A(a, b);
                   }};

  auto no_curvature = [](const Vector&, double, Matrix&) {};

  std::vector<ConstraintSpec> eq;
  auto pin = [&](std::size_t t, const Vector& target, const char* label) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const Eigen::Index idx = static_cast<Eigen::Index>(t) * d + k;
      const double value = target[k];
      eq.push_back({"endpoint", std::string(label) + "[" + std::to_string(k) + "]", ConstraintKind::equality,
                    {t},
                    {[idx, value, n](const Vector& x, Vector& grad) {
                       grad = Vector::Zero(n);
                       grad[idx] = 1.0;
                       return x[idx] - value;
                     },
                     no_curvature}});
    }
  };
  pin(0, spec.start, "start");
  pin(T - 1, spec.goal, "goal");

  if (spec.event_index) {
    const std::size_t e = *spec.event_index;
    const Vector velocity = (spec.goal - spec.start) / static_cast<double>(T - 1);
    for (Eigen::Index k = 0; k < d; ++k) {
      const Eigen::Index i0 = static_cast<Eigen::Index>(e) * d + k;
      const Eigen::Index i1 = i0 + d;
      const double v = velocity[k];
      eq.push_back({"attach", "attach[" + std::to_string(k) + "]", ConstraintKind::equality,
                    {e, e + 1},
                    {[i0, i1, v, n](const Vector& x, Vector& grad) {
                       grad = Vector::Zero(n);
                       grad[i1] = 1.0;
                       grad[i0] = -1.0;
                       return x[i1] - x[i0] - v;
                     },
                     no_curvature}});
    }
  }

  std::vector<ConstraintSpec> ineq;
  for (std::size_t k = 0; k < spec.obstacles.size(); ++k) {
    const Vector p = spec.obstacles[k].center;
    const double r2 = spec.obstacles[k].radius * spec.obstacles[k].radius;
    const std::string group = "obstacle_" + std::to_string(k);
    for (std::size_t t = 0; t < T; ++t) {
      const Eigen::Index off = static_cast<Eigen::Index>(t) * d;
      ineq.push_back({group, group + "@" + std::to_string(t), ConstraintKind::inequality,
                      {t},
                      {[p, r2, off, d, n](const Vector& x, Vector& grad) {
                         const Vector diff = x.segment(off, d) - p;
                         grad = Vector::Zero(n);
                         grad.segment(off, d) = -2.0 * diff;
                         return r2 - diff.squaredNorm();
                       },
                       [off, d](const Vector&, double w, Matrix& H) {
                         H.block(off, off, d, d).diagonal().array() -= 2.0 * w;
                       }}});
    }
  }

  Problem problem(spec.name, std::vector<std::size_t>(T, spec.d), std::move(f), std::move(eq), std::move(ineq));

  // Straight line plus deterministic noise on the interior waypoints.
  Vector x0(n);
  std::mt19937 rng(spec.init_seed);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  const double amp = spec.init_noise * (spec.goal - spec.start).norm();
  for (std::size_t t = 0; t < T; ++t) {
    const double s = static_cast<double>(t) / static_cast<double>(T - 1);
    Vector c = (1.0 - s) * spec.start + s * spec.goal;
    if (t > 0 && t + 1 < T) {
      for (Eigen::Index k = 0; k < d; ++k) c[k] += amp * noise(rng);
    }
    x0.segment(static_cast<Eigen::Index>(t) * d, d) = c;
  }
  problem.set_initial_point(std::move(x0));
  problem.set_scene(format_scene(spec));
  return problem;
}

// ---------------------------------------------------------------------------
// Registry

/// Scene used by the named waypoint problems: a straight corridor from the
/// origin to (4, 0, …) with a sphere slightly off the line blocking it.
inline WaypointSceneSpec blocking_scene(std::string name, std::size_t T, std::size_t d) {
  WaypointSceneSpec spec;
  spec.name = std::move(name);
  spec.T = T;
  spec.d = d;
  spec.start = Vector::Zero(static_cast<Eigen::Index>(d));
  spec.goal = Vector::Zero(static_cast<Eigen::Index>(d));
  spec.goal[0] = 4.0;
  Obstacle ob;
  ob.center = Vector::Zero(static_cast<Eigen::Index>(d));
  ob.center[0] = 2.0;
  if (d > 1) ob.center[1] = 0.1;
  ob.radius = 0.6;
  spec.obstacles.push_back(std::move(ob));
  return spec;
}

struct ProblemSummary {
  std::string name;
  std::size_t n = 0;
  std::size_t T = 0;
  std::size_t equalities = 0;
  std::size_t inequalities = 0;
};

namespace detail {

inline const std::vector<std::pair<std::string, Problem (*)()>>& registry() {
  static const std::vector<std::pair<std::string, Problem (*)()>> entries = {
      {"toy_equality", &make_toy_equality},
      {"toy_inequality", &make_toy_inequality},
      {"disk_rosenbrock", &make_disk_rosenbrock},
      {"waypoint_free_T10",
       [] {
         WaypointSceneSpec s;
         s.name = "waypoint_free_T10";
         s.T = 10;
         s.d = 2;
         s.start = Vector::Zero(2);
         s.goal = Vector::Zero(2);
         s.goal[0] = 3.0;
         s.goal[1] = 1.0;
         return make_waypoint_path(s);
       }},
      {"waypoint_T20", [] { return make_waypoint_path(blocking_scene("waypoint_T20", 20, 2)); }},
      {"waypoint_attach_T20",
       [] {
         auto s = blocking_scene("waypoint_attach_T20", 20, 2);
         s.event_index = 14;
         return make_waypoint_path(s);
       }},
      {"waypoint_accel_T20",
       [] {
         auto s = blocking_scene("waypoint_accel_T20", 20, 2);
         s.smoothness_order = 2;
         return make_waypoint_path(s);
       }},
      {"waypoint_d12_T20", [] { return make_waypoint_path(blocking_scene("waypoint_d12_T20", 20, 12)); }},
  };
  return entries;
}

}  // namespace detail

inline std::vector<ProblemSummary> list_problems() {
  std::vector<ProblemSummary> out;
  for (const auto& [name, make] : detail::registry()) {
    const Problem p = make();
    out.push_back({name, p.n(), p.T(), p.equalities().size(), p.inequalities().size()});
  }
  return out;
}

inline Problem get_problem(const std::string& name) {
  for (const auto& [entry, make] : detail::registry()) {
    if (entry == name) return make();
  }
  throw NotFound("unknown problem '" + name + "'");
}

/// Registry name, or a path to a scene document.
inline Problem resolve_problem(const std::string& name_or_path) {
  for (const auto& [entry, make] : detail::registry()) {
    if (entry == name_or_path) return make();
  }
  std::error_code ec;
  if (std::filesystem::is_regular_file(name_or_path, ec)) {
    std::ifstream in(name_or_path);
    std::stringstream buf;
    buf << in.rdbuf();
    return make_waypoint_path(parse_scene(buf.str()));
  }
  throw NotFound("unknown problem '" + name_or_path + "' (not a registry name or scene file)");
}

/// Rebuilds the problem a trace was recorded on: from its embedded scene when
/// present, otherwise from the registry.
inline Problem problem_from_info(const ProblemInfo& info) {
  Problem p = info.scene.empty() ? get_problem(info.name) : make_waypoint_path(parse_scene(info.scene));
  if (p.info() != info) throw InvalidArgument("problem '" + info.name + "' does not match the recorded metadata");
  return p;
}

}  // namespace nlpvis
