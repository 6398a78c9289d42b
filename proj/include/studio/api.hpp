#pragma once

// HTTP facade over the engine.
//
//   GET    /health
//   POST   /sessions                          Concept            -> 201 session
//   GET    /sessions?offset=&limit=                              -> page
//   GET    /sessions/{id}                                        -> session
//   POST   /sessions/{id}/validate                               -> 202 job
//   POST   /sessions/{id}/analogies                              -> 202 job
//   POST   /sessions/{id}/choose              {analogy_id}       -> session
//   POST   /sessions/{id}/storyboard                             -> 202 job
//   PATCH  /sessions/{id}/scenes/{index}      {description?, image_prompt?} -> session
//   POST   /sessions/{id}/scenes/{index}/regenerate              -> 202 job
//   POST   /sessions/{id}/video                                  -> 202 job
//   GET    /blobs/{hash}                                         -> bytes
//   GET    /jobs/{id}                                            -> job
//   GET    /jobs/{id}/events                                     -> text/event-stream
//
// Errors: {"error": {"kind", "message", "state"?}} with 404 / 409 / 422 / 502.

#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "studio/engine.hpp"

namespace httplib {
class Server;
}

namespace studio {

/// HTTP status for an error kind.
int http_status(ErrorKind kind);

struct ApiOptions {
  bool cors = false;
  std::chrono::milliseconds sse_keepalive{15000};
  std::function<json()> health;  // backend report for /health
};

class ApiServer {
 public:
  ApiServer(Engine& engine, ApiOptions options);
  ~ApiServer();

  /// Binds host:port (port 0 picks a free one); throws kIo on failure.
  int bind(const std::string& host, int port);

  /// Serves until stop(). bind() first.
  void run();
  void start_background();
  void stop();

  int port() const { return port_; }

 private:
  void routes();

  Engine& engine_;
  ApiOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

/// /health payload for a configuration: backend kinds and, for live
/// backends, whether the endpoint answered at all.
json health_report(const ServiceConfig& config);

}  // namespace studio
