#include "verify/server.hpp"

#include <httplib.h>

#include <iostream>

namespace verify {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownProblem:
      return 404;
    case ErrorCode::NotAwaitingDecision:
    case ErrorCode::SessionFinished:
    case ErrorCode::StaleSequence:
      return 409;
    case ErrorCode::IllegalDecision:
      return 422;
    case ErrorCode::IoError:
    case ErrorCode::BackendUnavailable:
      return 500;
    default:
      return 400;
  }
}

struct ApiServer::Impl {
  SessionManager& mgr;
  ServerOptions opts;
  httplib::Server http;
  int port = -1;

  Impl(SessionManager& m, ServerOptions o) : mgr(m), opts(std::move(o)) { routes(); }

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(canonical_dump(body), "application/json");
  }

  static void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, status, {{"code", code}, {"message", message}});
  }

  // Runs a handler, mapping library errors to their HTTP status.
  template <class Fn>
  static void guarded(httplib::Response& res, Fn fn) {
    try {
      fn();
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "InvalidArgument", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "Internal", e.what());
    }
  }

  static json body_json(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    return json::parse(req.body);
  }

  static int64_t cursor(const httplib::Request& req) {
    int64_t since = 0;
    if (req.has_param("since")) since = std::stoll(req.get_param_value("since"));
    // A reconnecting event-stream client reports the last id it saw.
    if (req.has_header("Last-Event-ID")) {
      try {
        since = std::max(since, static_cast<int64_t>(std::stoll(req.get_header_value("Last-Event-ID"))));
      } catch (...) {
      }
    }
    return since;
  }

  static std::string frame(const SessionEvent& e) {
    return "id: " + std::to_string(e.seq) + "\nevent: " + std::string(to_string(e.kind)) +
           "\ndata: " + to_json(e).dump() + "\n\n";
  }

  void routes() {
    using httplib::Request;
    using httplib::Response;

    http.Get("/healthz", [](const Request&, Response& res) { send_json(res, 200, {{"status", "ok"}}); });

    http.Post("/api/problems", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        std::string id = mgr.add_problem(problem_from_json(body_json(req)));
        send_json(res, 201, {{"id", id}});
      });
    });

    http.Get(R"(/api/problems/([^/]+))", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        auto p = mgr.problem(req.matches[1]);
        if (!p) throw Error(ErrorCode::UnknownProblem, "unknown problem " + std::string(req.matches[1]));
        send_json(res, 200, to_json(*p));
      });
    });

    http.Post("/api/sessions", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        json b = body_json(req);
        if (!b.contains("problem_id") || !b["problem_id"].is_string())
          throw Error(ErrorCode::InvalidArgument, "body needs a string 'problem_id'");
        Mode mode = mode_from(b.value("mode", "auto"));
        send_json(res, 201, mgr.start_session(b["problem_id"], mode, b.value("options", json::object())));
      });
    });

    http.Get("/api/sessions", [this](const Request&, Response& res) {
      guarded(res, [&] { send_json(res, 200, mgr.list()); });
    });

    http.Get(R"(/api/sessions/([^/]+))", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, 200, mgr.summary(req.matches[1])); });
    });

    http.Get(R"(/api/sessions/([^/]+)/events)", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        std::string id = req.matches[1];
        int64_t since = cursor(req);
        auto initial = mgr.events_since(id, since);  // 404 before streaming starts
        if (req.get_param_value("format") == "json") {
          json arr = json::array();
          for (auto& e : initial) arr.push_back(to_json(e));
          send_json(res, 200, arr);
          return;
        }
        bool follow = req.get_param_value("follow") != "0";
        auto pos = std::make_shared<int64_t>(since);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [this, id, pos, follow](size_t, httplib::DataSink& sink) {
              try {
                for (auto& e : mgr.events_since(id, *pos)) {
                  std::string f = frame(e);
                  if (!sink.write(f.data(), f.size())) return false;
                  *pos = e.seq;
                }
                bool done = mgr.finished(id) || !follow;
                if (done && mgr.events_since(id, *pos).empty()) {
                  std::string end = "event: end\ndata: {}\n\n";
                  sink.write(end.data(), end.size());
                  sink.done();
                  return true;
                }
                if (!mgr.wait_events(id, *pos, opts.keepalive_seconds) && !mgr.finished(id)) {
                  std::string ka = ": keepalive\n\n";
                  if (!sink.write(ka.data(), ka.size())) return false;
                }
                return sink.is_writable();
              } catch (const std::exception&) {
                return false;
              }
            });
      });
    });

    http.Post(R"(/api/sessions/([^/]+)/decision)", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        json b = body_json(req);
        std::optional<int64_t> expected;
        if (b.contains("expected_seq") && !b["expected_seq"].is_null()) expected = b["expected_seq"].get<int64_t>();
        std::string id = req.matches[1];
        mgr.summary(id);  // unknown sessions are 404 before the body is judged
        Decision d = decision_from_json(b);
        send_json(res, 200, to_json(mgr.decide(id, d, expected)));
      });
    });

    http.Get(R"(/api/reports/([^/]+))", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, 200, mgr.report(req.matches[1])); });
    });

    http.Get(R"(/api/reports/([^/]+)/rendered)", [this](const Request& req, Response& res) {
      guarded(res, [&] {
        res.status = 200;
        res.set_content(render_report(mgr.report(req.matches[1])), "text/plain; charset=utf-8");
      });
    });

    http.Post("/api/batch", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, 202, {{"id", mgr.start_batch(body_json(req))}}); });
    });

    http.Get(R"(/api/batch/([^/]+))", [this](const Request& req, Response& res) {
      guarded(res, [&] { send_json(res, 200, mgr.batch_status(req.matches[1])); });
    });

    if (!opts.ui_dir.empty() && !http.set_mount_point("/ui", opts.ui_dir))
      std::cerr << "ui directory " << opts.ui_dir << " not found; /ui disabled\n";
  }
};

ApiServer::ApiServer(SessionManager& manager, ServerOptions opts)
    : impl_(std::make_unique<Impl>(manager, std::move(opts))) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind() {
  auto& o = impl_->opts;
  int port = o.port == 0 ? impl_->http.bind_to_any_port(o.bind) : (impl_->http.bind_to_port(o.bind, o.port) ? o.port : -1);
  if (port < 0) throw Error(ErrorCode::IoError, "cannot bind " + o.bind + ":" + std::to_string(o.port));
  impl_->port = port;
  return port;
}

void ApiServer::serve() {
  if (impl_->port < 0) throw Error(ErrorCode::InvalidArgument, "serve() before bind()");
  impl_->http.listen_after_bind();
}

void ApiServer::stop() {
  if (impl_) impl_->http.stop();
}

}  // namespace verify
