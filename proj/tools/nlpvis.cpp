// nlpvis: solve problems into traces, export analytics, serve the query API.

#include "nlpvis/http.hpp"
#include "nlpvis/problem_suite.hpp"
#include "nlpvis/service.hpp"
#include "nlpvis/solver.hpp"
#include "nlpvis/trace.hpp"
#include "svg.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

namespace {

using nlohmann::json;

enum Exit { kOk = 0, kRuntime = 1, kUsage = 2, kEnvironment = 3 };

class UsageError : public nlpvis::Error {
 public:
  using Error::Error;
};

std::pair<std::string, std::string> split_kv(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("value of " + key + " is not a number: '" + text + "'");
}

nlpvis::Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw nlpvis::NotFound("cannot open trace '" + path + "'");
  return nlpvis::read_trace(in);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw nlpvis::Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw nlpvis::Error("failed writing '" + path + "'");
}

void write_trace_file(const std::string& path, const nlpvis::Trace& trace) {
  write_text(path, nlpvis::write_trace(trace));
}

// ---------------------------------------------------------------------------

struct SolveArgs {
  std::string problem;
  std::string out;
  std::vector<std::string> opts;
};

int run_solve(const SolveArgs& a) {
  nlpvis::SolverOptions opts;
  for (const auto& kv : a.opts) {
    const auto [k, v] = split_kv(kv);
    try {
      opts.set(k, parse_double(k, v));
    } catch (const nlpvis::InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }
  try {
    opts.validate();
  } catch (const nlpvis::InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const auto problem = nlpvis::resolve_problem(a.problem);

  nlpvis::SolveResult result;
  try {
    result = nlpvis::solve(problem, opts);
  } catch (const nlpvis::Diverged& e) {
    write_trace_file(a.out, e.trace());
    std::cerr << "error: solver diverged: " << e.what() << " (partial trace written to " << a.out << ")\n";
    return kRuntime;
  }
  write_trace_file(a.out, result.trace);

  const auto steps = nlpvis::optimization_trajectory(result.trace).size();
  const double kkt = nlpvis::kkt_residual(problem, result.x_star, result.duals);
  const double viol = nlpvis::max_violation(problem, result.x_star);
  Eigen::VectorXd grad;
  const double f = problem.objective().value_and_gradient(result.x_star, grad);
  std::printf("problem: %s\n", problem.name().c_str());
  std::printf("converged: %s\n", result.converged ? "true" : "false");
  std::printf("feasible: %s\n", result.feasible ? "true" : "false");
  std::printf("steps: %zu\n", steps);
  std::printf("outer_iterations: %zu\n", result.outer_iterations);
  std::printf("objective: %.17g\n", f);
  std::printf("max_violation: %.17g\n", viol);
  std::printf("kkt_residual: %.17g\n", kkt);
  std::printf("trace: %s\n", a.out.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  std::string trace;
  std::string what;
  std::vector<std::string> args;
  std::string out;
  std::string svg;
};

json checked(const nlpvis::service::Response& r) {
  auto j = json::parse(r.body);
  if (r.status == 200) return j;
  const auto msg = j.at("error").at("message").get<std::string>();
  const auto code = j.at("error").at("code").get<std::string>();
  if (code == "not-found") throw nlpvis::NotFound(msg);
  if (code == "invalid-argument") throw UsageError(msg);
  throw nlpvis::Error(msg);
}

int run_export(const ExportArgs& a) {
  std::map<std::string, std::string> args;
  for (const auto& kv : a.args) {
    const auto [k, v] = split_kv(kv);
    args[k] = v;
  }
  auto take = [&](const std::string& key, const std::string& fallback = {}) {
    auto it = args.find(key);
    if (it == args.end()) return fallback;
    auto v = it->second;
    args.erase(it);
    return v;
  };

  nlpvis::service::Service svc;
  svc.load(load_trace(a.trace));
  json doc;
  std::string drawing;

  if (a.what == "progression") {
    doc = checked(svc.get("/series/progression"));
    drawing = svg::progression(doc);
  } else if (a.what == "groups") {
    const auto meta = checked(svc.get("/trace/meta"));
    const std::string only = take("group");
    const std::string expanded = take("expanded", "false");
    doc = {{"api_version", nlpvis::wire::kApiVersion}, {"groups", json::array()}};
    for (const auto& g : meta.at("groups")) {
      const auto name = g.at("name").get<std::string>();
      if (!only.empty() && name != only) continue;
      auto series = checked(svc.get("/series/group/" + name, {{"expanded", expanded}}));
      json entry = g;
      if (series.contains("points")) entry["points"] = series.at("points");
      if (series.contains("series")) entry["series"] = series.at("series");
      doc["groups"].push_back(entry);
    }
    if (!only.empty() && doc["groups"].empty()) throw nlpvis::NotFound("unknown constraint group '" + only + "'");
    if (expanded == "false" || expanded == "0") drawing = svg::groups(doc);
  } else if (a.what == "paths") {
    std::map<std::string, std::string> q;
    if (auto s = take("steps"); !s.empty()) q["steps"] = s;
    if (auto c = take("configs"); !c.empty()) q["configs"] = c;
    doc = checked(svc.get("/projection/paths", q));
    drawing = svg::paths(doc);
  } else if (a.what == "landscape") {
    json plane;
    const auto sa = take("step_a"), sb = take("step_b"), sc = take("step_c");
    auto index = [](const std::string& key, const std::string& v) {
      const double d = parse_double(key, v);
      if (d < 0 || d != std::floor(d)) throw UsageError(key + " must be a non-negative integer");
      return static_cast<std::size_t>(d);
    };
    if (!sa.empty() || !sb.empty() || !sc.empty()) {
      if (sa.empty() || sb.empty() || sc.empty()) throw UsageError("three-point plane needs step_a, step_b and step_c");
      plane = checked(svc.post("/plane/threepoint", {{"step_a", index("step_a", sa)},
                                                      {"step_b", index("step_b", sb)},
                                                      {"step_c", index("step_c", sc)}}));
    } else {
      plane = checked(svc.post("/plane/default", {{"step", index("step", take("step", "0"))}}));
    }
    json body{{"plane_id", plane.at("plane_id")}};
    if (auto r = take("resolution"); !r.empty()) {
      const auto x = r.find('x');
      if (x == std::string::npos) {
        body["resolution"] = index("resolution", r);
      } else {
        body["resolution"] = {index("resolution", r.substr(0, x)), index("resolution", r.substr(x + 1))};
      }
    }
    if (auto f = take("functions"); !f.empty()) body["functions"] = nlpvis::service::detail::split_list(f);
    if (auto t = take("tau"); !t.empty()) body["tau"] = parse_double("tau", t);
    if (auto d = take("duals_step"); !d.empty()) body["duals_step"] = index("duals_step", d);
    if (auto l = take("levels"); !l.empty()) body["levels"] = index("levels", l);
    doc = checked(svc.post("/sample", body));
    drawing = svg::landscape(doc);
  }
  if (!args.empty()) throw UsageError("unknown --args key '" + args.begin()->first + "' for --what " + a.what);

  write_text(a.out, doc.dump() + "\n");
  if (!a.svg.empty()) {
    if (drawing.empty()) throw UsageError("no drawing available for this export");
    write_text(a.svg, drawing);
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string trace;
  std::string listen;
  std::string config;
  bool ui = false;
  std::string ui_dir;
  bool probe = false;
};

nlpvis::service::HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int run_serve(const ServeArgs& a) {
  nlpvis::service::Config cfg;
  if (!a.config.empty()) cfg = nlpvis::service::Config::from_file(a.config);
  cfg.apply_env();
  if (!a.listen.empty()) cfg.listen = a.listen;
  if (!a.ui_dir.empty()) cfg.ui_dir = a.ui_dir;
  const auto addr = nlpvis::service::parse_listen(cfg.listen);

  nlpvis::service::Service svc(cfg);
  svc.load(load_trace(a.trace));
  nlpvis::service::HttpServer server(svc, a.ui, cfg.ui_dir);
  const int port = server.bind(addr);
  if (port < 0) {
    std::cerr << "error: cannot listen on " << cfg.listen << " (address in use or unavailable)\n";
    return kEnvironment;
  }

  if (a.probe) {
    // Serve in the background, fetch a few documents, then shut down.
    std::thread worker([&] { server.serve(); });
    server.wait_until_ready();
    httplib::Client client(addr.host == "0.0.0.0" ? "127.0.0.1" : addr.host, port);
    int rc = kOk;
    std::vector<std::string> paths{"/trace/meta"};
    if (a.ui) paths.push_back("/");
    for (const auto& p : paths) {
      auto res = client.Get(p);
      const int status = res ? res->status : -1;
      std::printf("GET %s -> %d %zu bytes\n", p.c_str(), status, res ? res->body.size() : 0);
      if (status != 200) rc = kRuntime;
    }
    server.stop();
    worker.join();
    return rc;
  }

  std::printf("serving %s on http://%s:%d/\n", a.trace.c_str(), addr.host.c_str(), port);
  std::fflush(stdout);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.serve();
  g_server = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Augmented Lagrangian solver with trace analytics"};
  app.require_subcommand(1);

  SolveArgs solve_args;
  auto* solve = app.add_subcommand("solve", "Solve a problem and write its trace");
  solve->add_option("--problem", solve_args.problem, "Registry name or scene file")->required();
  solve->add_option("--out", solve_args.out, "Trace output path")->required();
  solve->add_option("--opt", solve_args.opts, "Solver option key=value (repeatable)");

  ExportArgs export_args;
  auto* exp = app.add_subcommand("export", "Export an analytics view of a trace");
  exp->add_option("--trace", export_args.trace, "Trace file")->required();
  exp->add_option("--what", export_args.what, "View to export")
      ->required()
      ->check(CLI::IsMember({"progression", "groups", "paths", "landscape"}));
  exp->add_option("--args", export_args.args, "View arguments key=value (repeatable)");
  exp->add_option("--out", export_args.out, "JSON output path")->required();
  exp->add_option("--svg", export_args.svg, "Also write an SVG rendering");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Serve the query API for a trace");
  serve->add_option("--trace", serve_args.trace, "Trace file")->required();
  serve->add_option("--listen", serve_args.listen, "host:port (default 127.0.0.1:8080)");
  serve->add_option("--config", serve_args.config, "JSON config file");
  serve->add_flag("--ui", serve_args.ui, "Also serve the browser UI");
  serve->add_option("--ui-dir", serve_args.ui_dir, "Directory holding the UI bundle");
  serve->add_flag("--probe", serve_args.probe, "Answer one round of requests in-process and exit")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*solve) return run_solve(solve_args);
    if (*exp) return run_export(export_args);
    if (*serve) return run_serve(serve_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const nlpvis::NotFound& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
