#pragma once

#include <memory>
#include <string>

#include "orca/common/error.h"
#include "orca/service/service.h"

namespace orca::service {

/// HTTP front end of a Service:
///
///     POST /sessions                        {"database_id": "..."}      -> 201 session
///     GET  /sessions/{id}                                               -> session summary
///     POST /sessions/{id}/query[?wait=true] {"text": "..."}             -> 202 (200 with wait)
///     POST /sessions/{id}/feedback[?wait=true] {"text": "..."}
///     GET  /sessions/{id}/events?after=N    JSON array, or server-sent events when the
///                                           client accepts text/event-stream (or ?stream=true);
///                                           Last-Event-ID is honoured as `after`
///     GET  /sessions/{id}/artifacts/{aid}   body with its content type, kind in X-Artifact-Kind
///     GET  /health
///
/// Errors come back as {"error": ..., "code": ...} with 404 for unknown ids,
/// 409 for SessionBusy and NothingToRefine, 400 for bad input.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws IoError.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

int http_status(orca::ErrorCode code);

}  // namespace orca::service
