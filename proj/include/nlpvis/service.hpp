#pragma once

// Read-only query service over one loaded trace. `Service::handle` is a pure
// request -> response function; http.hpp puts it behind an HTTP listener.

#include "nlpvis/analytics.hpp"
#include "nlpvis/problem_suite.hpp"
#include "nlpvis/trace.hpp"
#include "nlpvis/wire.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace nlpvis::service {

using json = nlohmann::json;

struct Config {
  std::string listen = "127.0.0.1:8080";
  /// Largest rows·cols accepted by /sample.
  std::size_t resolution_cap = 512 * 512;
  /// Memoized responses kept (least recently used are dropped).
  std::size_t cache_size = 64;
  std::string ui_dir;

  /// Reads a JSON object with any of the keys above.
  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFound("cannot open config file '" + path + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw InvalidArgument("config file '" + path + "': " + e.what());
    }
    Config c;
    if (j.contains("listen")) c.listen = j.at("listen").get<std::string>();
    if (j.contains("resolution_cap")) c.resolution_cap = j.at("resolution_cap").get<std::size_t>();
    if (j.contains("cache_size")) c.cache_size = j.at("cache_size").get<std::size_t>();
    if (j.contains("ui_dir")) c.ui_dir = j.at("ui_dir").get<std::string>();
    return c;
  }

  /// NLPVIS_LISTEN, NLPVIS_RESOLUTION_CAP, NLPVIS_CACHE_SIZE, NLPVIS_UI_DIR.
  void apply_env() {
    auto count = [](const char* name, std::size_t& dst) {
      if (const char* v = std::getenv(name)) {
        std::size_t out = 0;
        const auto* end = v + std::char_traits<char>::length(v);
        if (auto [p, ec] = std::from_chars(v, end, out); ec != std::errc{} || p != end)
          throw InvalidArgument(std::string(name) + " must be a non-negative integer");
        dst = out;
      }
    };
    if (const char* v = std::getenv("NLPVIS_LISTEN")) listen = v;
    if (const char* v = std::getenv("NLPVIS_UI_DIR")) ui_dir = v;
    count("NLPVIS_RESOLUTION_CAP", resolution_cap);
    count("NLPVIS_CACHE_SIZE", cache_size);
  }
};

struct Request {
  std::string method = "GET";
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  std::string body;
};

class NoSession : public Error {
 public:
  NoSession() : Error("no trace loaded") {}
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return out;
}

inline std::size_t parse_index(const std::string& text, const std::string& what) {
  std::size_t v = 0;
  const auto* end = text.data() + text.size();
  if (auto [p, ec] = std::from_chars(text.data(), end, v); text.empty() || ec != std::errc{} || p != end)
    throw InvalidArgument(what + " must be a non-negative integer, got '" + text + "'");
  return v;
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::vector<std::size_t> parse_index_list(const std::string& text, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(text)) out.push_back(parse_index(s, what));
  return out;
}

inline bool parse_bool(const std::string& text, const std::string& what) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0" || text.empty()) return false;
  throw InvalidArgument(what + " must be true or false");
}

inline std::size_t json_index(const json& body, const char* key) {
  if (!body.contains(key)) throw InvalidArgument(std::string("missing field '") + key + "'");
  const auto& v = body.at(key);
  if (!v.is_number_unsigned()) throw InvalidArgument(std::string("field '") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

inline json error_body(const std::string& code, const std::string& message) {
  return {{"api_version", wire::kApiVersion}, {"error", {{"code", code}, {"message", message}}}};
}

}  // namespace detail

/// Least-recently-used map from request key to response.
class ResponseCache {
 public:
  explicit ResponseCache(std::size_t capacity) : capacity_(capacity) {}

  std::optional<Response> get(const std::string& key) {
    std::lock_guard lock(mutex_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    order_.splice(order_.begin(), order_, it->second);
    return it->second->second;
  }

  void put(const std::string& key, Response r) {
    if (capacity_ == 0) return;
    std::lock_guard lock(mutex_);
    if (auto it = index_.find(key); it != index_.end()) {
      order_.erase(it->second);
      index_.erase(it);
    }
    order_.emplace_front(key, std::move(r));
    index_[key] = order_.begin();
    while (order_.size() > capacity_) {
      index_.erase(order_.back().first);
      order_.pop_back();
    }
  }

  void clear() {
    std::lock_guard lock(mutex_);
    order_.clear();
    index_.clear();
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return order_.size();
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::list<std::pair<std::string, Response>> order_;
  std::unordered_map<std::string, std::list<std::pair<std::string, Response>>::iterator> index_;
};

class Service {
 public:
  explicit Service(Config config = {}) : config_(std::move(config)), cache_(config_.cache_size) {}

  const Config& config() const { return config_; }

  /// Loads `trace`, rebuilding its problem from the header.
  void load(Trace trace) {
    auto problem = problem_from_info(trace.header.problem);
    load(std::move(trace), std::move(problem));
  }

  void load(Trace trace, Problem problem) {
    auto s = std::make_shared<Session>(std::move(trace), std::move(problem));
    for (const auto& p : optimization_trajectory(s->trace)) s->points.push_back(p.x);
    std::unique_lock lock(session_mutex_);
    session_ = std::move(s);
    {
      std::lock_guard plock(planes_mutex_);
      planes_.clear();
    }
    cache_.clear();
  }

  bool loaded() const {
    std::shared_lock lock(session_mutex_);
    return static_cast<bool>(session_);
  }

  std::size_t cached_responses() const { return cache_.size(); }

  Response handle(const Request& req) {
    try {
      // Held for the whole request so a concurrent load() waits for readers.
      std::shared_lock lock(session_mutex_);
      const auto session = session_;
      if (!session) throw NoSession();
      const std::string key = cache_key(req);
      if (auto hit = cache_.get(key)) return *hit;
      Response r{200, dispatch(*session, req).dump()};
      cache_.put(key, r);
      return r;
    } catch (const NoSession& e) {
      return {409, detail::error_body("no-session", e.what()).dump()};
    } catch (const NotFound& e) {
      return {404, detail::error_body("not-found", e.what()).dump()};
    } catch (const DegeneratePlane& e) {
      return {422, detail::error_body("degenerate-plane", e.what()).dump()};
    } catch (const UnsupportedProjection& e) {
      return {422, detail::error_body("unsupported-projection", e.what()).dump()};
    } catch (const InvalidArgument& e) {
      return {400, detail::error_body("invalid-argument", e.what()).dump()};
    } catch (const json::exception& e) {
      return {400, detail::error_body("invalid-argument", e.what()).dump()};
    } catch (const std::exception& e) {
      return {500, detail::error_body("internal", e.what()).dump()};
    }
  }

  Response get(const std::string& path, std::map<std::string, std::string> query = {}) {
    return handle({"GET", path, std::move(query), {}});
  }

  Response post(const std::string& path, const json& body) { return handle({"POST", path, {}, body.dump()}); }

 private:
  struct Session {
    Session(Trace t, Problem p) : trace(std::move(t)), problem(std::move(p)) {}
    Trace trace;
    Problem problem;
    std::vector<Vector> points;
  };

  struct PlaneRecord {
    PlaneSpec plane;
    std::size_t anchor_step = 0;
  };

  static std::string cache_key(const Request& req) {
    std::string key = req.method + ' ' + req.path + '?';
    for (const auto& [k, v] : req.query) key += k + '=' + v + '&';
    key += '\n';
    key += req.body.empty() ? std::string() : json::parse(req.body).dump();
    return key;
  }

  static json parse_body(const Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body);
    if (!j.is_object()) throw InvalidArgument("request body must be a JSON object");
    return j;
  }

  static std::string query_or(const Request& req, const std::string& key, const std::string& fallback = {}) {
    auto it = req.query.find(key);
    return it == req.query.end() ? fallback : it->second;
  }

  json dispatch(const Session& s, const Request& req) {
    const auto& p = req.path;
    if (req.method == "GET") {
      if (p == "/trace/meta") return meta(s);
      if (p == "/trace/events") return events(s, req);
      if (p == "/series/progression") return progression(s);
      if (p.rfind("/series/group/", 0) == 0) return group_series(s, req, p.substr(std::string("/series/group/").size()));
      if (p == "/projection/paths") return projection(s, req);
    } else if (req.method == "POST") {
      if (p == "/plane/default") return plane_default(s, parse_body(req));
      if (p == "/plane/threepoint") return plane_threepoint(s, parse_body(req));
      if (p == "/sample") return sample(s, parse_body(req));
    }
    throw NotFound("no endpoint " + req.method + " " + p);
  }

  static json envelope() { return {{"api_version", wire::kApiVersion}}; }

  json meta(const Session& s) const {
    const auto& info = s.trace.header.problem;
    json groups = json::array();
    for (const auto& g : group_tree(info)) {
      json members = json::array();
      for (const auto& m : g.members) {
        members.push_back({{"id", m.info.instance_id}, {"kind", to_string(m.info.kind)}, {"time_indices", m.info.time_indices}});
      }
      groups.push_back({{"name", g.name}, {"kind", to_string(g.kind)}, {"size", g.members.size()}, {"members", members}});
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& e : s.trace.events) ++counts[to_string(e.kind())];
    json options = json::object();
    for (const auto& [k, v] : s.trace.header.options) options[k] = wire::number(v);
    json out = envelope();
    out["problem"] = {{"name", info.name}, {"n", info.n}, {"T", info.T}, {"dims", info.dims}};
    out["steps"] = s.points.size();
    out["events"] = s.trace.events.size();
    out["final_index"] = s.trace.final_index ? json(*s.trace.final_index) : json(nullptr);
    out["groups"] = groups;
    out["event_counts"] = counts;
    out["options"] = options;
    return out;
  }

  json events(const Session& s, const Request& req) const {
    const std::size_t offset = detail::parse_index(query_or(req, "offset", "0"), "offset");
    const std::size_t limit = detail::parse_index(query_or(req, "limit", "100"), "limit");
    const auto kinds = detail::split_list(query_or(req, "kinds"));
    std::vector<EventKind> filter;
    for (const auto& k : kinds) filter.push_back(event_kind_from_string(k));

    json page = json::array();
    std::size_t total = 0;
    for (const auto& e : s.trace.events) {
      if (!filter.empty() && std::find(filter.begin(), filter.end(), e.kind()) == filter.end()) continue;
      if (total >= offset && total - offset < limit) {
        json j = event_to_json(e);
        if (e.kind() == EventKind::stepsize_shrink) j["highlight"] = true;
        page.push_back(std::move(j));
      }
      ++total;
    }
    json out = envelope();
    out["offset"] = offset;
    out["limit"] = limit;
    out["kinds"] = kinds;
    out["total"] = total;
    out["events"] = page;
    return out;
  }

  json progression(const Session& s) const {
    const auto r = progression_remaining(s.trace);
    json out = envelope();
    out["degenerate"] = r.degenerate;
    out["points"] = wire::series_to_json(r.points);
    return out;
  }

  json group_series(const Session& s, const Request& req, const std::string& name) const {
    const bool expanded = detail::parse_bool(query_or(req, "expanded"), "expanded");
    const auto tree = group_tree(s.trace);
    const auto& node = find_group(tree, name);
    json out = envelope();
    out["group"] = node.name;
    out["kind"] = to_string(node.kind);
    out["expanded"] = expanded;
    if (expanded) {
      json series = json::array();
      for (const auto& m : node.members) {
        series.push_back({{"id", m.info.instance_id},
                          {"kind", to_string(m.info.kind)},
                          {"time_indices", m.info.time_indices},
                          {"points", wire::series_to_json(constraint_series(s.trace, node.name, m.info.instance_id))}});
      }
      out["series"] = series;
    } else {
      out["points"] = wire::series_to_json(aggregate_group_series(s.trace, node.name));
    }
    return out;
  }

  json register_plane(const PlaneSpec& plane, std::size_t anchor, json steps) {
    json pj = wire::plane_to_json(plane);
    const std::string id = detail::hex64(detail::fnv1a(pj.dump() + '#' + std::to_string(anchor)));
    {
      std::lock_guard lock(planes_mutex_);
      planes_[id] = {plane, anchor};
    }
    json out = envelope();
    out["plane_id"] = id;
    out["steps"] = std::move(steps);
    out["plane"] = std::move(pj);
    return out;
  }

  void check_step(const Session& s, std::size_t step) const {
    if (step >= s.points.size()) throw InvalidArgument("step " + std::to_string(step) + " is out of range");
  }

  json plane_default(const Session& s, const json& body) {
    const std::size_t step = detail::json_index(body, "step");
    check_step(s, step);
    const auto plane = default_plane(s.points, step);
    return register_plane(plane, step, json{{"step", step}});
  }

  json plane_threepoint(const Session& s, const json& body) {
    const std::size_t a = detail::json_index(body, "step_a");
    const std::size_t b = detail::json_index(body, "step_b");
    const std::size_t c = detail::json_index(body, "step_c");
    for (auto st : {a, b, c}) check_step(s, st);
    const auto plane = three_point_plane(s.points[a], s.points[b], s.points[c], s.points);
    return register_plane(plane, a, json{{"step_a", a}, {"step_b", b}, {"step_c", c}});
  }

  json sample(const Session& s, const json& body) {
    if (!body.contains("plane_id") || !body.at("plane_id").is_string()) throw InvalidArgument("missing field 'plane_id'");
    const auto id = body.at("plane_id").get<std::string>();
    PlaneRecord rec;
    {
      std::lock_guard lock(planes_mutex_);
      auto it = planes_.find(id);
      if (it == planes_.end()) throw NotFound("unknown plane_id '" + id + "'");
      rec = it->second;
    }

    wire::LandscapeRequest lr;
    if (body.contains("resolution")) {
      const auto& r = body.at("resolution");
      if (r.is_number_unsigned()) {
        lr.rows = lr.cols = r.get<std::size_t>();
      } else if (r.is_array() && r.size() == 2 && r[0].is_number_unsigned() && r[1].is_number_unsigned()) {
        lr.rows = r[0].get<std::size_t>();
        lr.cols = r[1].get<std::size_t>();
      } else if (r.is_object()) {
        lr.rows = detail::json_index(r, "rows");
        lr.cols = detail::json_index(r, "cols");
      } else {
        throw InvalidArgument("resolution must be n, [rows, cols] or {rows, cols}");
      }
    }
    if (lr.rows < 2 || lr.cols < 2) throw InvalidArgument("resolution must be at least 2x2");
    if (lr.rows > config_.resolution_cap / lr.cols)
      throw InvalidArgument("resolution exceeds the cap of " + std::to_string(config_.resolution_cap) + " samples");
    if (body.contains("functions")) {
      lr.functions = body.at("functions").get<std::vector<std::string>>();
    }
    if (body.contains("tau") && !body.at("tau").is_null()) {
      const double tau = nlpvis::detail::decode_number(body.at("tau"));
      if (!(tau >= 0.0)) throw InvalidArgument("tau must be non-negative");
      lr.tau = tau;
    }
    lr.duals_step = body.contains("duals_step") ? detail::json_index(body, "duals_step") : rec.anchor_step;
    check_step(s, lr.duals_step);
    if (body.contains("levels")) {
      lr.levels = detail::json_index(body, "levels");
      if (lr.levels < 2) throw InvalidArgument("levels must be at least 2");
    }

    const auto land = wire::compute_landscape(s.problem, s.trace, rec.plane, lr);
    json out = envelope();
    out["plane_id"] = id;
    out["duals_step"] = lr.duals_step;
    out.update(wire::landscape_to_json(land));
    return out;
  }

  json projection(const Session& s, const Request& req) const {
    const auto steps = detail::parse_index_list(query_or(req, "steps"), "steps");
    const auto configs = detail::parse_index_list(query_or(req, "configs"), "configs");
    json out = envelope();
    out.update(wire::projection_to_json(path_evolution_projection(s.trace, steps, configs)));
    return out;
  }

  Config config_;
  mutable std::shared_mutex session_mutex_;
  std::shared_ptr<const Session> session_;
  std::mutex planes_mutex_;
  std::map<std::string, PlaneRecord> planes_;
  ResponseCache cache_;
};

}  // namespace nlpvis::service
