#pragma once

#include "nlpvis/service.hpp"

#include <httplib.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace nlpvis::service {

/// Fallback page for `serve --ui` when no UI bundle directory is given.
inline constexpr const char* kBuiltinIndex = R"(<!doctype html>
<html lang="en">
<head><meta charset="utf-8"><title>nlpvis</title>
<style>body{font-family:sans-serif;margin:2em;max-width:60em}pre{background:#f4f4f4;padding:1em;overflow:auto}</style>
</head>
<body>
<h1>nlpvis</h1>
<p>Query service for one optimization trace. Endpoints:</p>
<ul>
<li>GET /trace/meta</li>
<li>GET /trace/events?offset&amp;limit&amp;kinds</li>
<li>GET /series/progression</li>
<li>GET /series/group/{name}?expanded=true</li>
<li>POST /plane/default {"step"}</li>
<li>POST /plane/threepoint {"step_a","step_b","step_c"}</li>
<li>POST /sample {"plane_id","resolution","functions","tau","duals_step"}</li>
<li>GET /projection/paths?steps&amp;configs</li>
</ul>
<pre id="meta">loading /trace/meta ...</pre>
<script>
fetch('trace/meta').then(r => r.json()).then(j => {
  document.getElementById('meta').textContent = JSON.stringify(j, null, 2);
});
</script>
</body>
</html>
)";

struct ListenAddress {
  std::string host = "127.0.0.1";
  int port = 8080;
};

inline ListenAddress parse_listen(const std::string& text) {
  const auto colon = text.rfind(':');
  ListenAddress a;
  if (colon == std::string::npos) {
    a.host = text.empty() ? a.host : text;
    return a;
  }
  if (colon > 0) a.host = text.substr(0, colon);
  const auto port = text.substr(colon + 1);
  int p = 0;
  const auto* end = port.data() + port.size();
  if (auto [ptr, ec] = std::from_chars(port.data(), end, p); port.empty() || ec != std::errc{} || ptr != end || p < 0 || p > 65535)
    throw InvalidArgument("bad listen address '" + text + "'");
  a.port = p;
  return a;
}

class HttpServer {
 public:
  HttpServer(Service& service, bool ui, std::string ui_dir = {}) : service_(service) {
    // The library default adds SO_REUSEPORT, which lets a second server share the port.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    if (ui) {
      std::string index = kBuiltinIndex;
      if (!ui_dir.empty()) {
        if (std::ifstream in(std::filesystem::path(ui_dir) / "index.html"); in) {
          std::ostringstream os;
          os << in.rdbuf();
          index = os.str();
        }
        server_.set_mount_point("/ui", ui_dir);
      }
      server_.Get("/", [index](const httplib::Request&, httplib::Response& res) {
        res.set_content(index, "text/html; charset=utf-8");
      });
    }
    auto route = [this](const httplib::Request& hreq, httplib::Response& hres) {
      Request req;
      req.method = hreq.method;
      req.path = hreq.path;
      for (const auto& [k, v] : hreq.params) req.query[k] = v;
      req.body = hreq.body;
      const auto r = service_.handle(req);
      hres.status = r.status;
      hres.set_content(r.body, "application/json");
    };
    server_.Get(R"(/.*)", route);
    server_.Post(R"(/.*)", route);
  }

  /// Binds without serving; returns the bound port, or -1 if the address is
  /// unavailable. Port 0 picks a free port.
  int bind(const ListenAddress& addr) {
    if (addr.port == 0) return server_.bind_to_any_port(addr.host);
    return server_.bind_to_port(addr.host, addr.port) ? addr.port : -1;
  }

  /// Serves until stop() is called.
  bool serve() { return server_.listen_after_bind(); }

  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  Service& service_;
  httplib::Server server_;
};

}  // namespace nlpvis::service
