#include "nlpvis/http.hpp"
#include "nlpvis/service.hpp"
#include "nlpvis/solver.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <random>
#include <thread>

using namespace nlpvis;
using nlpvis::service::Service;
using json = nlohmann::json;

namespace {

const SolveResult& waypoint_run() {
  static const SolveResult r = solve(get_problem("waypoint_attach_T20"));
  return r;
}

Service& loaded_service() {
  static Service s;
  static const bool once = (s.load(waypoint_run().trace), true);
  (void)once;
  return s;
}

json body(const service::Response& r) { return json::parse(r.body); }

std::vector<Vector> points(const Trace& t) {
  std::vector<Vector> out;
  for (const auto& p : optimization_trajectory(t)) out.push_back(p.x);
  return out;
}

}  // namespace

TEST(Service, NoSession) {
  Service s;
  EXPECT_FALSE(s.loaded());
  const auto r = s.get("/trace/meta");
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(body(r)["error"]["code"], "no-session");
  EXPECT_EQ(body(r)["api_version"], 1);
}

TEST(Service, ErrorMapping) {
  auto& s = loaded_service();
  EXPECT_EQ(s.get("/nope").status, 404);
  EXPECT_EQ(s.get("/series/group/nosuch").status, 404);
  EXPECT_EQ(s.get("/trace/events", {{"offset", "-1"}}).status, 400);
  EXPECT_EQ(s.get("/trace/events", {{"kinds", "bogus"}}).status, 400);
  EXPECT_EQ(s.handle({"POST", "/plane/default", {}, "{not json"}).status, 400);
  EXPECT_EQ(s.post("/plane/default", json{{"step", 100000}}).status, 400);
  EXPECT_EQ(s.post("/sample", json{{"plane_id", "0000"}}).status, 404);
  EXPECT_EQ(s.get("/projection/paths", {{"configs", "99"}}).status, 400);
}

TEST(Service, Meta) {
  auto& s = loaded_service();
  const auto& run = waypoint_run();
  const auto m = body(s.get("/trace/meta"));
  EXPECT_EQ(m["problem"]["n"], 40);
  EXPECT_EQ(m["problem"]["T"], 20);
  EXPECT_EQ(m["steps"], optimization_trajectory(run.trace).size());
  EXPECT_EQ(m["events"], run.trace.events.size());
  const auto tree = group_tree(run.trace);
  ASSERT_EQ(m["groups"].size(), tree.size());
  for (std::size_t i = 0; i < tree.size(); ++i) {
    EXPECT_EQ(m["groups"][i]["name"], tree[i].name);
    EXPECT_EQ(m["groups"][i]["size"], tree[i].members.size());
  }

  Service toy;
  toy.load(solve(make_toy_equality()).trace);
  const auto t = body(toy.get("/trace/meta"));
  EXPECT_EQ(t["problem"]["n"], 2);
  EXPECT_EQ(t["groups"].size(), 1u);
}

TEST(Service, EventsPaging) {
  auto& s = loaded_service();
  const auto& run = waypoint_run();
  auto e = body(s.get("/trace/events", {{"limit", "0"}}));
  EXPECT_TRUE(e["events"].empty());
  EXPECT_EQ(e["total"], run.trace.events.size());

  e = body(s.get("/trace/events", {{"offset", std::to_string(run.trace.events.size() + 5)}}));
  EXPECT_TRUE(e["events"].empty());

  e = body(s.get("/trace/events", {{"offset", "3"}, {"limit", "7"}}));
  ASSERT_EQ(e["events"].size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(e["events"][i]["seq"], 3 + i);

  e = body(s.get("/trace/events", {{"kinds", "dual-update"}, {"limit", "100000"}}));
  std::size_t duals = 0;
  for (const auto& ev : run.trace.events) duals += ev.kind() == EventKind::dual_update;
  EXPECT_EQ(e["total"], duals);
  for (const auto& ev : e["events"]) EXPECT_EQ(ev["kind"], "dual-update");

  e = body(s.get("/trace/events", {{"kinds", "stepsize-shrink"}, {"limit", "5"}}));
  ASSERT_FALSE(e["events"].empty());
  for (const auto& ev : e["events"]) EXPECT_EQ(ev["highlight"], true);
}

TEST(Service, Series) {
  auto& s = loaded_service();
  const auto& run = waypoint_run();
  const auto p = body(s.get("/series/progression"));
  EXPECT_EQ(p["points"][0]["value"], 1.0);
  EXPECT_EQ(p["points"], wire::series_to_json(progression_remaining(run.trace).points));

  const auto ex = body(s.get("/series/group/obstacle_0", {{"expanded", "true"}}));
  ASSERT_EQ(ex["series"].size(), 20u);
  const auto agg = body(s.get("/series/group/obstacle_0"));
  const auto& a = agg["points"];
  for (const auto& member : ex["series"]) {
    for (std::size_t i = 0; i < a.size(); ++i)
      EXPECT_GE(detail::decode_number(a[i]["value"]), std::abs(detail::decode_number(member["points"][i]["value"])));
  }
}

TEST(Service, Planes) {
  auto& s = loaded_service();
  const auto pts = points(waypoint_run().trace);
  const auto a = s.post("/plane/default", json{{"step", 3}});
  const auto b = s.post("/plane/default", json{{"step", 3}});
  ASSERT_EQ(a.status, 200);
  EXPECT_EQ(body(a)["plane_id"], body(b)["plane_id"]);
  EXPECT_EQ(body(a)["plane"], wire::plane_to_json(default_plane(pts, 3)));

  EXPECT_EQ(s.post("/plane/default", json{{"step", pts.size() - 1}}).status, 422);
  EXPECT_EQ(s.post("/plane/threepoint", json{{"step_a", 0}, {"step_b", 0}, {"step_c", 5}}).status, 422);

  const std::size_t mid = pts.size() / 2, last = pts.size() - 1;
  const auto tp = body(s.post("/plane/threepoint", json{{"step_a", 0}, {"step_b", mid}, {"step_c", last}}));
  const auto plane = wire::plane_from_json(tp["plane"]);
  const double scale = std::max({(pts[0] - pts[mid]).norm(), (pts[0] - pts[last]).norm(), (pts[mid] - pts[last]).norm()});
  for (auto i : {std::size_t{0}, mid, last}) EXPECT_LE(project_to_plane(plane, pts[i]).dist, 1e-9 * scale);
}

TEST(Service, Sample) {
  auto& s = loaded_service();
  const auto id = body(s.post("/plane/default", json{{"step", 0}}))["plane_id"];
  auto r = body(s.post("/sample", json{{"plane_id", id}, {"resolution", 2}}));
  ASSERT_EQ(r["fields"].size(), 1u);
  EXPECT_EQ(r["fields"][0]["name"], "objective");
  EXPECT_EQ(r["fields"][0]["values"].size(), 4u);
  EXPECT_TRUE(r["feasibility"].is_null());

  r = body(s.post("/sample", json{{"plane_id", id}, {"resolution", {3, 5}}, {"functions", {"objective", "loss", "attach/attach[0]"}}, {"tau", 1.0}}));
  EXPECT_EQ(r["fields"].size(), 3u);
  EXPECT_EQ(r["fields"][1]["values"].size(), 15u);
  EXPECT_FALSE(r["feasibility"].is_null());

  EXPECT_EQ(s.post("/sample", json{{"plane_id", id}, {"resolution", 513}}).status, 400);
  EXPECT_EQ(s.post("/sample", json{{"plane_id", id}, {"resolution", 1}}).status, 400);
  EXPECT_EQ(s.post("/sample", json{{"plane_id", id}, {"tau", -1}}).status, 400);
}

TEST(Service, SampleMatchesDirectCall) {
  auto& s = loaded_service();
  const auto& run = waypoint_run();
  const auto pts = points(run.trace);
  const auto resp = body(s.post("/plane/default", json{{"step", 5}}));
  const auto r = s.post("/sample", json{{"plane_id", resp["plane_id"]}, {"resolution", {6, 9}}, {"functions", {"objective", "loss", "obstacle_0/obstacle_0@7"}}, {"tau", 0.5}});
  ASSERT_EQ(r.status, 200) << r.body;

  wire::LandscapeRequest lr;
  lr.rows = 6;
  lr.cols = 9;
  lr.functions = {"objective", "loss", "obstacle_0/obstacle_0@7"};
  lr.tau = 0.5;
  lr.duals_step = 5;
  json expected{{"api_version", 1}, {"plane_id", resp["plane_id"]}, {"duals_step", 5}};
  expected.update(wire::landscape_to_json(
      wire::compute_landscape(get_problem("waypoint_attach_T20"), run.trace, default_plane(pts, 5), lr)));
  EXPECT_EQ(r.body, expected.dump());
}

TEST(Service, Projection) {
  auto& s = loaded_service();
  const auto& run = waypoint_run();
  const auto last = optimization_trajectory(run.trace).size() - 1;
  auto p = body(s.get("/projection/paths", {{"configs", "4"}}));
  EXPECT_EQ(p["trajectories"].size(), 1u);
  p = body(s.get("/projection/paths", {{"steps", "0," + std::to_string(last)}}));
  EXPECT_EQ(p["paths"].size(), 2u);
  p = body(s.get("/projection/paths"));
  EXPECT_EQ(p["subsample"], "accepted-updates");
  json expected{{"api_version", 1}};
  expected.update(wire::projection_to_json(path_evolution_projection(run.trace, {}, {})));
  EXPECT_EQ(p, expected);
}

TEST(Service, RepeatsAreByteIdentical) {
  Service cached, uncached({"127.0.0.1:0", 512 * 512, 0, ""});
  cached.load(waypoint_run().trace);
  uncached.load(waypoint_run().trace);
  const auto id = body(cached.post("/plane/default", json{{"step", 2}}))["plane_id"];
  uncached.post("/plane/default", json{{"step", 2}});
  const json req{{"plane_id", id}, {"resolution", 16}, {"functions", {"objective", "loss"}}};
  const auto a = cached.post("/sample", req), b = cached.post("/sample", req), c = uncached.post("/sample", req);
  EXPECT_EQ(a.body, b.body);
  EXPECT_EQ(a.body, c.body);
  EXPECT_GT(cached.cached_responses(), 0u);
  EXPECT_EQ(uncached.cached_responses(), 0u);
  EXPECT_EQ(cached.get("/trace/events").body, uncached.get("/trace/events").body);
}

TEST(Service, ReloadDropsPlanes) {
  Service s;
  s.load(waypoint_run().trace);
  const auto id = body(s.post("/plane/default", json{{"step", 1}}))["plane_id"];
  s.load(solve(make_toy_equality()).trace);
  EXPECT_EQ(s.post("/sample", json{{"plane_id", id}}).status, 404);
  EXPECT_EQ(body(s.get("/trace/meta"))["problem"]["n"], 2);
}

TEST(Service, ConcurrentReaders) {
  auto& s = loaded_service();
  const auto expected = s.get("/series/progression").body;
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int k = 0; k < 4; ++k) {
    threads.emplace_back([&] {
      for (int i = 0; i < 20; ++i)
        if (s.get("/series/progression").body != expected) ++mismatches;
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
}

TEST(Config, EnvironmentOverrides) {
  ::setenv("NLPVIS_LISTEN", "0.0.0.0:9001", 1);
  ::setenv("NLPVIS_RESOLUTION_CAP", "100", 1);
  service::Config c;
  c.apply_env();
  EXPECT_EQ(c.listen, "0.0.0.0:9001");
  EXPECT_EQ(c.resolution_cap, 100u);
  ::setenv("NLPVIS_CACHE_SIZE", "many", 1);
  EXPECT_THROW(c.apply_env(), InvalidArgument);
  ::unsetenv("NLPVIS_LISTEN");
  ::unsetenv("NLPVIS_RESOLUTION_CAP");
  ::unsetenv("NLPVIS_CACHE_SIZE");
  EXPECT_THROW(service::Config::from_file("/nonexistent/config.json"), NotFound);

  Service capped(c);
  capped.load(waypoint_run().trace);
  const auto id = body(capped.post("/plane/default", json{{"step", 0}}))["plane_id"];
  EXPECT_EQ(capped.post("/sample", json{{"plane_id", id}, {"resolution", 10}}).status, 200);
  EXPECT_EQ(capped.post("/sample", json{{"plane_id", id}, {"resolution", 11}}).status, 400);
}

TEST(Http, ServesAndReportsBusyPort) {
  auto& s = loaded_service();
  service::HttpServer server(s, true);
  const int port = server.bind(service::parse_listen("127.0.0.1:0"));
  ASSERT_GT(port, 0);
  std::thread t([&] { server.serve(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto meta = client.Get("/trace/meta");
  ASSERT_TRUE(meta);
  EXPECT_EQ(meta->status, 200);
  EXPECT_EQ(meta->body, s.get("/trace/meta").body);
  auto index = client.Get("/");
  ASSERT_TRUE(index);
  EXPECT_EQ(index->status, 200);
  EXPECT_NE(index->body.find("<html"), std::string::npos);
  auto plane = client.Post("/plane/default", R"({"step":1})", "application/json");
  ASSERT_TRUE(plane);
  EXPECT_EQ(plane->status, 200);

  service::HttpServer other(s, false);
  EXPECT_EQ(other.bind(service::parse_listen("127.0.0.1:" + std::to_string(port))), -1);

  server.stop();
  t.join();
  EXPECT_EQ(service::parse_listen("localhost").host, "localhost");
  EXPECT_EQ(service::parse_listen(":9000").port, 9000);
  EXPECT_THROW(service::parse_listen("localhost:http"), InvalidArgument);
  EXPECT_THROW(service::parse_listen("localhost:70000"), InvalidArgument);
}
