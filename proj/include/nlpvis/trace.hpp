#pragma once

#include "nlpvis/problem.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace nlpvis {

/// Multipliers of the augmented Lagrangian: κ for equalities, λ ≥ 0 for
/// inequalities, and the penalty weight mu > 0.
struct DualState {
  Vector kappa;
  Vector lambda;
  double mu = 1.0;

  static DualState zeros(std::size_t equalities, std::size_t inequalities, double mu = 1.0) {
    return {Vector::Zero(static_cast<Eigen::Index>(equalities)),
            Vector::Zero(static_cast<Eigen::Index>(inequalities)), mu};
  }
};

namespace detail {

/// Bitwise vector comparison; NaNs with equal payloads compare equal.
inline bool same_bits(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
}

inline bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace detail

inline bool operator==(const DualState& a, const DualState& b) {
  return detail::same_bits(a.kappa, b.kappa) && detail::same_bits(a.lambda, b.lambda) &&
         detail::same_bits(a.mu, b.mu);
}

// ---------------------------------------------------------------------------
// Events

enum class EventKind { eval, stepsize_shrink, x_update, dual_update, outer_iter, converged, aborted };

inline const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::eval: return "eval";
    case EventKind::stepsize_shrink: return "stepsize-shrink";
    case EventKind::x_update: return "x-update";
    case EventKind::dual_update: return "dual-update";
    case EventKind::outer_iter: return "outer-iter";
    case EventKind::converged: return "converged";
    case EventKind::aborted: return "aborted";
  }
  return "?";
}

inline EventKind event_kind_from_string(const std::string& s) {
  for (auto k : {EventKind::eval, EventKind::stepsize_shrink, EventKind::x_update, EventKind::dual_update,
                 EventKind::outer_iter, EventKind::converged, EventKind::aborted}) {
    if (s == to_string(k)) return k;
  }
  throw InvalidArgument("unknown event kind '" + s + "'");
}

/// A loss evaluation at a probed point. `x` is absent only on probes thinned
/// out by the solver's trace stride.
struct EvalEvent {
  std::optional<Vector> x;
  double f = 0.0;
  Vector h;
  Vector g;
  double loss = 0.0;
  double grad_norm = 0.0;
  double alpha = 0.0;  // step size of the probe; 0 for points that are not probes
};

struct ShrinkEvent {
  double alpha_old = 0.0;
  double alpha_new = 0.0;
};

/// Acceptance of a line-search probe. `slope` is ∇L(x_prev)·(x − x_prev)/alpha
/// as used in the sufficient-decrease test.
struct XUpdateEvent {
  Vector x;
  std::size_t eval_seq = 0;
  double alpha = 0.0;
  double loss_prev = 0.0;
  double loss_new = 0.0;
  double slope = 0.0;
};

struct DualUpdateEvent {
  DualState duals;
};

struct OuterIterEvent {
  std::size_t counter = 0;
};

struct ConvergedEvent {
  bool feasible = false;
  double max_violation = 0.0;
  double grad_norm = 0.0;
};

struct AbortedEvent {
  std::string reason;
  std::string scope;  // "inner" (line search gave up) or "solve"
};

using EventPayload = std::variant<EvalEvent, ShrinkEvent, XUpdateEvent, DualUpdateEvent, OuterIterEvent,
                                  ConvergedEvent, AbortedEvent>;

struct LogEvent {
  std::size_t seq = 0;
  EventPayload payload;

  EventKind kind() const { return static_cast<EventKind>(payload.index()); }

  template <class T>
  const T* as() const {
    return std::get_if<T>(&payload);
  }
};

inline bool operator==(const EvalEvent& a, const EvalEvent& b) {
  const bool xs = a.x.has_value() == b.x.has_value() && (!a.x || detail::same_bits(*a.x, *b.x));
  return xs && detail::same_bits(a.f, b.f) && detail::same_bits(a.h, b.h) && detail::same_bits(a.g, b.g) &&
         detail::same_bits(a.loss, b.loss) && detail::same_bits(a.grad_norm, b.grad_norm) &&
         detail::same_bits(a.alpha, b.alpha);
}
inline bool operator==(const ShrinkEvent& a, const ShrinkEvent& b) {
  return detail::same_bits(a.alpha_old, b.alpha_old) && detail::same_bits(a.alpha_new, b.alpha_new);
}
inline bool operator==(const XUpdateEvent& a, const XUpdateEvent& b) {
  return detail::same_bits(a.x, b.x) && a.eval_seq == b.eval_seq && detail::same_bits(a.alpha, b.alpha) &&
         detail::same_bits(a.loss_prev, b.loss_prev) && detail::same_bits(a.loss_new, b.loss_new) &&
         detail::same_bits(a.slope, b.slope);
}
inline bool operator==(const DualUpdateEvent& a, const DualUpdateEvent& b) { return a.duals == b.duals; }
inline bool operator==(const OuterIterEvent& a, const OuterIterEvent& b) { return a.counter == b.counter; }
inline bool operator==(const ConvergedEvent& a, const ConvergedEvent& b) {
  return a.feasible == b.feasible && detail::same_bits(a.max_violation, b.max_violation) &&
         detail::same_bits(a.grad_norm, b.grad_norm);
}
inline bool operator==(const AbortedEvent& a, const AbortedEvent& b) {
  return a.reason == b.reason && a.scope == b.scope;
}
inline bool operator==(const LogEvent& a, const LogEvent& b) { return a.seq == b.seq && a.payload == b.payload; }

// ---------------------------------------------------------------------------
// Trace

struct TraceHeader {
  ProblemInfo problem;
  std::map<std::string, double> options;

  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

/// Ordered event log of one optimization run.
struct Trace {
  TraceHeader header;
  std::vector<LogEvent> events;
  /// Index of the eval event holding x*.
  std::optional<std::size_t> final_index;

  friend bool operator==(const Trace&, const Trace&) = default;
};

/// Appends `event`, which must carry the next sequence number.
inline void append_event(Trace& trace, LogEvent event) {
  if (event.seq != trace.events.size()) {
    throw ContractError("event seq " + std::to_string(event.seq) + " out of order, expected " +
                        std::to_string(trace.events.size()));
  }
  trace.events.push_back(std::move(event));
}

/// Event sink used by the solver: assigns sequence numbers and appends.
class TraceRecorder {
 public:
  explicit TraceRecorder(Trace& trace) : trace_(&trace) {}

  std::size_t record(EventPayload payload) {
    const std::size_t seq = trace_->events.size();
    append_event(*trace_, LogEvent{seq, std::move(payload)});
    return seq;
  }

  const Trace& trace() const { return *trace_; }
  Trace& trace() { return *trace_; }

 private:
  Trace* trace_;
};

// ---------------------------------------------------------------------------
// Serialization: one JSON record per line, header first.

inline constexpr int kTraceFormatVersion = 1;

namespace detail {

using json = nlohmann::json;

inline json encode_number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "NaN";
  return v > 0 ? "Infinity" : "-Infinity";
}

inline double decode_number(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    if (s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-Infinity") return -std::numeric_limits<double>::infinity();
  }
  throw InvalidArgument("expected a number");
}

inline json encode_vector(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(encode_number(v[i]));
  return arr;
}

inline Vector decode_vector(const json& j) {
  if (!j.is_array()) throw InvalidArgument("expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = decode_number(j[i]);
  return v;
}

}  // namespace detail

inline nlohmann::json problem_info_to_json(const ProblemInfo& info) {
  nlohmann::json cons = nlohmann::json::array();
  for (const auto& c : info.constraints) {
    cons.push_back({{"group", c.group}, {"id", c.instance_id}, {"kind", to_string(c.kind)},
                    {"time_indices", c.time_indices}});
  }
  nlohmann::json j{{"name", info.name}, {"n", info.n}, {"T", info.T}, {"dims", info.dims}, {"constraints", cons}};
  if (!info.scene.empty()) j["scene"] = info.scene;
  return j;
}

inline ProblemInfo problem_info_from_json(const nlohmann::json& j) {
  ProblemInfo info;
  info.name = j.at("name").get<std::string>();
  info.n = j.at("n").get<std::size_t>();
  info.T = j.at("T").get<std::size_t>();
  info.dims = j.at("dims").get<std::vector<std::size_t>>();
  for (const auto& c : j.at("constraints")) {
    info.constraints.push_back({c.at("group").get<std::string>(), c.at("id").get<std::string>(),
                                constraint_kind_from_string(c.at("kind").get<std::string>()),
                                c.at("time_indices").get<std::vector<std::size_t>>()});
  }
  if (j.contains("scene")) info.scene = j.at("scene").get<std::string>();
  return info;
}

inline nlohmann::json event_to_json(const LogEvent& e) {
  using detail::encode_number;
  using detail::encode_vector;
  nlohmann::json j{{"seq", e.seq}, {"kind", to_string(e.kind())}};
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, EvalEvent>) {
          if (p.x) j["x"] = encode_vector(*p.x);
          j["f"] = encode_number(p.f);
          j["h"] = encode_vector(p.h);
          j["g"] = encode_vector(p.g);
          j["L"] = encode_number(p.loss);
          j["grad_norm"] = encode_number(p.grad_norm);
          j["alpha"] = encode_number(p.alpha);
        } else if constexpr (std::is_same_v<T, ShrinkEvent>) {
          j["alpha_old"] = encode_number(p.alpha_old);
          j["alpha_new"] = encode_number(p.alpha_new);
        } else if constexpr (std::is_same_v<T, XUpdateEvent>) {
          j["x"] = encode_vector(p.x);
          j["eval_seq"] = p.eval_seq;
          j["alpha"] = encode_number(p.alpha);
          j["L_prev"] = encode_number(p.loss_prev);
          j["L_new"] = encode_number(p.loss_new);
          j["slope"] = encode_number(p.slope);
        } else if constexpr (std::is_same_v<T, DualUpdateEvent>) {
          j["kappa"] = encode_vector(p.duals.kappa);
          j["lambda"] = encode_vector(p.duals.lambda);
          j["mu"] = encode_number(p.duals.mu);
        } else if constexpr (std::is_same_v<T, OuterIterEvent>) {
          j["counter"] = p.counter;
        } else if constexpr (std::is_same_v<T, ConvergedEvent>) {
          j["feasible"] = p.feasible;
          j["max_violation"] = encode_number(p.max_violation);
          j["grad_norm"] = encode_number(p.grad_norm);
        } else if constexpr (std::is_same_v<T, AbortedEvent>) {
          j["reason"] = p.reason;
          j["scope"] = p.scope;
        }
      },
      e.payload);
  return j;
}

inline LogEvent event_from_json(const nlohmann::json& j) {
  using detail::decode_number;
  using detail::decode_vector;
  LogEvent e;
  e.seq = j.at("seq").get<std::size_t>();
  switch (event_kind_from_string(j.at("kind").get<std::string>())) {
    case EventKind::eval: {
      EvalEvent p;
      if (j.contains("x")) p.x = decode_vector(j.at("x"));
      p.f = decode_number(j.at("f"));
      p.h = decode_vector(j.at("h"));
      p.g = decode_vector(j.at("g"));
      p.loss = decode_number(j.at("L"));
      p.grad_norm = decode_number(j.at("grad_norm"));
      p.alpha = decode_number(j.at("alpha"));
      e.payload = std::move(p);
      break;
    }
    case EventKind::stepsize_shrink:
      e.payload = ShrinkEvent{decode_number(j.at("alpha_old")), decode_number(j.at("alpha_new"))};
      break;
    case EventKind::x_update:
      e.payload = XUpdateEvent{decode_vector(j.at("x")),           j.at("eval_seq").get<std::size_t>(),
                               decode_number(j.at("alpha")),       decode_number(j.at("L_prev")),
                               decode_number(j.at("L_new")),       decode_number(j.at("slope"))};
      break;
    case EventKind::dual_update:
      e.payload = DualUpdateEvent{
          {decode_vector(j.at("kappa")), decode_vector(j.at("lambda")), decode_number(j.at("mu"))}};
      break;
    case EventKind::outer_iter:
      e.payload = OuterIterEvent{j.at("counter").get<std::size_t>()};
      break;
    case EventKind::converged:
      e.payload = ConvergedEvent{j.at("feasible").get<bool>(), decode_number(j.at("max_violation")),
                                 decode_number(j.at("grad_norm"))};
      break;
    case EventKind::aborted:
      e.payload = AbortedEvent{j.at("reason").get<std::string>(), j.at("scope").get<std::string>()};
      break;
  }
  return e;
}

inline nlohmann::json header_to_json(const Trace& trace) {
  nlohmann::json options = nlohmann::json::object();
  for (const auto& [k, v] : trace.header.options) options[k] = detail::encode_number(v);
  nlohmann::json j{{"format_version", kTraceFormatVersion},
                   {"problem", problem_info_to_json(trace.header.problem)},
                   {"options", options}};
  j["final_index"] = trace.final_index ? nlohmann::json(*trace.final_index) : nlohmann::json(nullptr);
  return j;
}

inline void write_trace(const Trace& trace, std::ostream& out) {
  out << header_to_json(trace).dump() << '\n';
  for (const auto& e : trace.events) out << event_to_json(e).dump() << '\n';
}

inline std::string write_trace(const Trace& trace) {
  std::ostringstream os;
  write_trace(trace, os);
  return os.str();
}

/// Parses a trace written by write_trace(). Errors carry the 1-based line
/// number of the offending record.
inline Trace read_trace(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(lineno, std::string("malformed record: ") + ex.what());
    }
    try {
      if (!have_header) {
        const int version = j.at("format_version").get<int>();
        if (version != kTraceFormatVersion)
          throw UnsupportedVersion("trace format_version " + std::to_string(version) + " is not supported");
        trace.header.problem = problem_info_from_json(j.at("problem"));
        for (const auto& [k, v] : j.at("options").items()) trace.header.options[k] = detail::decode_number(v);
        if (j.contains("final_index") && !j.at("final_index").is_null())
          trace.final_index = j.at("final_index").get<std::size_t>();
        have_header = true;
      } else {
        append_event(trace, event_from_json(j));
      }
    } catch (const UnsupportedVersion&) {
      throw;
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(lineno, std::string("bad field: ") + ex.what());
    } catch (const Error& ex) {
      throw ParseError(lineno, ex.what());
    }
  }
  if (!have_header) throw ParseError(lineno == 0 ? 1 : lineno, "missing header record");
  if (trace.final_index) {
    const auto fi = *trace.final_index;
    if (fi >= trace.events.size() || trace.events[fi].kind() != EventKind::eval)
      throw ParseError(1, "final_index does not name an eval event");
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Derived views

struct TrajectoryPoint {
  StepIndex index;
  Vector x;
};

/// The sequence S of all probed arguments, x_init first, x* last.
inline std::vector<TrajectoryPoint> optimization_trajectory(const Trace& trace) {
  std::vector<TrajectoryPoint> out;
  for (const auto& e : trace.events) {
    if (const auto* ev = e.as<EvalEvent>(); ev && ev->x) {
      out.push_back({StepIndex{out.size(), e.seq}, *ev->x});
    }
  }
  if (out.empty()) throw EmptyTrajectory("trace contains no evaluated points");
  return out;
}

/// Eval events backing each trajectory step, in step order.
inline std::vector<const EvalEvent*> step_evaluations(const Trace& trace) {
  std::vector<const EvalEvent*> out;
  for (const auto& e : trace.events) {
    if (const auto* ev = e.as<EvalEvent>(); ev && ev->x) out.push_back(ev);
  }
  return out;
}

/// Position of a constraint in the header list (equalities first) and the
/// slot inside the h or g vector.
struct ConstraintLocation {
  std::size_t header_index = 0;
  ConstraintKind kind = ConstraintKind::equality;
  std::size_t slot = 0;
};

inline ConstraintLocation locate_constraint(const ProblemInfo& info, const std::string& group,
                                            const std::string& instance_id) {
  std::size_t eq = 0, ineq = 0;
  for (std::size_t i = 0; i < info.constraints.size(); ++i) {
    const auto& c = info.constraints[i];
    const std::size_t slot = c.kind == ConstraintKind::equality ? eq++ : ineq++;
    if (c.instance_id == instance_id && (group.empty() || c.group == group)) return {i, c.kind, slot};
  }
  throw NotFound("unknown constraint '" + (group.empty() ? "" : group + "/") + instance_id + "'");
}

/// Logged value of one constraint at every trajectory step.
inline std::vector<SeriesPoint> constraint_series(const Trace& trace, const std::string& group,
                                                  const std::string& instance_id) {
  const auto loc = locate_constraint(trace.header.problem, group, instance_id);
  std::vector<SeriesPoint> out;
  const auto evals = step_evaluations(trace);
  out.reserve(evals.size());
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const Vector& values = loc.kind == ConstraintKind::equality ? evals[i]->h : evals[i]->g;
    out.push_back({i, values[static_cast<Eigen::Index>(loc.slot)]});
  }
  return out;
}

struct GroupMember {
  ConstraintInfo info;
  ConstraintLocation location;
};

struct GroupNode {
  std::string name;
  ConstraintKind kind = ConstraintKind::equality;  // kind of the first member
  std::vector<GroupMember> members;
};

/// Groups in lexicographic order; members ordered by time indices, then id.
inline std::vector<GroupNode> group_tree(const ProblemInfo& info) {
  std::map<std::string, GroupNode> groups;
  std::size_t eq = 0, ineq = 0;
  for (std::size_t i = 0; i < info.constraints.size(); ++i) {
    const auto& c = info.constraints[i];
    const std::size_t slot = c.kind == ConstraintKind::equality ? eq++ : ineq++;
    auto [it, inserted] = groups.try_emplace(c.group);
    if (inserted) {
      it->second.name = c.group;
      it->second.kind = c.kind;
    }
    it->second.members.push_back({c, {i, c.kind, slot}});
  }
  std::vector<GroupNode> out;
  for (auto& [name, node] : groups) {
    std::stable_sort(node.members.begin(), node.members.end(), [](const GroupMember& a, const GroupMember& b) {
      if (a.info.time_indices != b.info.time_indices) return a.info.time_indices < b.info.time_indices;
      return a.info.instance_id < b.info.instance_id;
    });
    out.push_back(std::move(node));
  }
  return out;
}

inline std::vector<GroupNode> group_tree(const Trace& trace) { return group_tree(trace.header.problem); }

inline const GroupNode& find_group(const std::vector<GroupNode>& tree, const std::string& name) {
  for (const auto& g : tree) {
    if (g.name == name) return g;
  }
  throw NotFound("unknown constraint group '" + name + "'");
}

/// Duals in effect when trajectory step `step` was evaluated: the most recent
/// dual update before its eval event, or the initial multipliers.
inline DualState duals_at_step(const Trace& trace, std::size_t step) {
  const auto traj_evals = step_evaluations(trace);
  if (step >= traj_evals.size()) throw InvalidArgument("step " + std::to_string(step) + " is out of range");
  std::size_t eq = 0, ineq = 0;
  for (const auto& c : trace.header.problem.constraints) (c.kind == ConstraintKind::equality ? eq : ineq)++;
  const auto mu_it = trace.header.options.find("mu_init");
  DualState duals = DualState::zeros(eq, ineq, mu_it == trace.header.options.end() ? 1.0 : mu_it->second);
  std::size_t seen = 0;
  for (const auto& e : trace.events) {
    if (const auto* ev = e.as<EvalEvent>(); ev && ev->x) {
      if (seen == step) break;
      ++seen;
    } else if (const auto* du = e.as<DualUpdateEvent>()) {
      duals = du->duals;
    }
  }
  return duals;
}

}  // namespace nlpvis
