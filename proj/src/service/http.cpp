#include "orca/service/http.h"

#include <atomic>

#include <httplib.h>

#include "orca/common/error.h"

namespace orca::service {

using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownArtifact:
    case ErrorCode::UnknownDatabaseId: return 404;
    case ErrorCode::SessionBusy:
    case ErrorCode::NothingToRefine: return 409;
    case ErrorCode::EmptyQuery:
    case ErrorCode::Precondition:
    case ErrorCode::InvalidConfig: return 400;
    default: return 500;
  }
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  send_json(res, http_status(e.code()), {{"error", e.detail()}, {"code", std::string(to_string(e.code()))}});
}

json events_json(const std::vector<Event>& events) {
  json arr = json::array();
  for (const auto& e : events) arr.push_back(to_json(e));
  return arr;
}

json body_of(const httplib::Request& req) {
  try {
    auto j = json::parse(req.body.empty() ? "{}" : req.body);
    if (!j.is_object()) fail(ErrorCode::Precondition, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Precondition, std::string("request body is not JSON: ") + e.what());
  }
}

bool flag(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return false;
  auto v = req.get_param_value(name);
  return v.empty() || v == "true" || v == "1";
}

std::int64_t after_of(const httplib::Request& req) {
  std::string v = req.has_param("after") ? req.get_param_value("after") : req.get_header_value("Last-Event-ID");
  if (v.empty()) return 0;
  try {
    return std::stoll(v);
  } catch (const std::exception&) {
    fail(ErrorCode::Precondition, "after must be an integer, got '" + v + "'");
  }
}

std::string sse_frame(const Event& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: " + e.stage + "\ndata: " + to_json(e).dump() + "\n\n";
}

}  // namespace

struct HttpServer::Impl {
  Service& service;
  httplib::Server server;
  std::atomic<bool> stopping{false};

  explicit Impl(Service& s) : service(s) { routes(); }

  template <class F>
  auto guarded(F f) {
    return [this, f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}, {"code", "Internal"}});
      }
    };
  }

  void submit(const httplib::Request& req, httplib::Response& res, bool feedback) {
    const auto id = req.matches[1].str();
    auto text = body_of(req).value("text", std::string());
    bool wait = flag(req, "wait");
    auto before = service.state(id).last_seq();
    auto request = feedback ? service.submit_feedback(id, text, wait) : service.submit_query(id, text, wait);
    json out = {{"request_id", request}, {"events_url", "/sessions/" + id + "/events?after=" + std::to_string(before)}};
    if (wait) {
      out["events"] = events_json(service.events(id, before));
      send_json(res, 200, out);
    } else {
      send_json(res, 202, out);
    }
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, Last-Event-ID");
      res.status = 204;
    });

    server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}, {"sessions", service.session_ids().size()}});
    }));

    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto db = body_of(req).value("database_id", std::string());
      if (db.empty()) fail(ErrorCode::Precondition, "database_id is required");
      send_json(res, 201, to_json(service.create_session(db)));
    }));

    server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto s = service.state(req.matches[1].str());
      auto j = to_json(s);
      j["running"] = service.running(s.session_id);
      send_json(res, 200, j);
    }));

    server.Post(R"(/sessions/([^/]+)/query)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      submit(req, res, false);
    }));
    server.Post(R"(/sessions/([^/]+)/feedback)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      submit(req, res, true);
    }));

    server.Get(R"(/sessions/([^/]+)/events)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto id = req.matches[1].str();
      auto after = after_of(req);
      service.state(id);  // 404 before a stream is opened
      bool stream = flag(req, "stream") || req.get_header_value("Accept").find("text/event-stream") != std::string::npos;
      if (!stream) {
        send_json(res, 200, events_json(service.events(id, after)));
        return;
      }
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, id, after](std::size_t, httplib::DataSink& sink) mutable {
        if (stopping || !sink.is_writable()) return false;
        std::vector<Event> events;
        try {
          events = service.wait_events(id, after, std::chrono::milliseconds(1000));
        } catch (const Error&) {
          return false;
        }
        if (events.empty()) {
          static const std::string ping = ": keep-alive\n\n";
          return sink.write(ping.data(), ping.size());
        }
        for (const auto& e : events) {
          auto frame = sse_frame(e);
          if (!sink.write(frame.data(), frame.size())) return false;
          after = e.seq;
        }
        return true;
      });
    }));

    server.Get(R"(/sessions/([^/]+)/artifacts/([^/]+))",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto a = service.artifact(req.matches[1].str(), req.matches[2].str());
                 res.set_header("X-Artifact-Kind", a.kind);
                 res.status = 200;
                 res.set_content(a.body, a.content_type);
               }));
  }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) fail(ErrorCode::IoError, "cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  impl_->stopping = true;
  if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace orca::service
