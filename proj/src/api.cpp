#include "studio/api.hpp"

#include "httplib.h"

namespace studio {

namespace {

json error_body(ErrorKind kind, const std::string& message,
                const std::optional<std::string>& state = std::nullopt) {
  json e{{"kind", to_string(kind)}, {"message", message}};
  if (state) e["state"] = *state;
  return {{"error", e}};
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req, bool allow_empty) {
  if (req.body.empty()) {
    if (allow_empty) return json::object();
    throw Error(ErrorKind::kValidation, "request body is required");
  }
  auto doc = json::parse(req.body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorKind::kValidation, "request body must be a JSON object");
  }
  return doc;
}

std::optional<std::string> optional_string(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorKind::kValidation, std::string(key) + " must be a string");
  return it->get<std::string>();
}

int scene_index(const httplib::Request& req) {
  const auto& raw = req.matches[2].str();
  try {
    return std::stoi(raw);
  } catch (const std::exception&) {
    throw Error(ErrorKind::kValidation, "scene index must be an integer");
  }
}

std::size_t query_size(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  try {
    auto v = std::stoll(req.get_param_value(key));
    if (v < 0) throw std::out_of_range(key);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorKind::kValidation, std::string(key) + " must be a non-negative integer");
  }
}

// Wraps a handler so every failure becomes a sanitized JSON error.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const WrongStateError& e) {
      send_json(res, http_status(e.kind()), error_body(e.kind(), e.what(), e.state()));
    } catch (const Error& e) {
      send_json(res, http_status(e.kind()), error_body(e.kind(), e.what()));
    } catch (const json::exception&) {
      send_json(res, 422, error_body(ErrorKind::kValidation, "request body has the wrong shape"));
    } catch (const std::exception&) {
      send_json(res, 500, error_body(ErrorKind::kIo, "internal error"));
    }
  };
}

std::string sse_frame(const ProgressEvent& e) {
  return "event: " + std::string(e.terminal ? "terminal" : "progress") + "\ndata: " +
         json(e).dump() + "\n\n";
}

}  // namespace

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation:
    case ErrorKind::kPrecondition:
    case ErrorKind::kConfig:
      return 422;
    case ErrorKind::kNotFound:
      return 404;
    case ErrorKind::kWrongState:
    case ErrorKind::kBusy:
      return 409;
    case ErrorKind::kParse:
    case ErrorKind::kStage:
    case ErrorKind::kBackend:
    case ErrorKind::kTimeout:
    case ErrorKind::kAuth:
    case ErrorKind::kExhausted:
      return 502;
    case ErrorKind::kIntegrity:
    case ErrorKind::kIo:
    case ErrorKind::kEncoder:
      return 500;
  }
  return 500;
}

ApiServer::ApiServer(Engine& engine, ApiOptions options)
    : engine_(engine), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  // httplib's default also sets SO_REUSEPORT, which lets a second server
  // share a port that is already taken.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
    if (port_ < 0) throw Error(ErrorKind::kIo, "cannot bind " + host);
  } else {
    if (!server_->bind_to_port(host, port)) {
      throw Error(ErrorKind::kIo, "cannot bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
  }
  return port_;
}

void ApiServer::run() { server_->listen_after_bind(); }

void ApiServer::start_background() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void ApiServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void ApiServer::routes() {
  auto& srv = *server_;
  auto& engine = engine_;

  if (options_.cors) {
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  }

  srv.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
    json body{{"status", "ok"}, {"backends", engine_.gateway().is_mock() ? "mock" : "live"}};
    if (options_.health) body["detail"] = options_.health();
    send_json(res, 200, body);
  }));

  srv.Post("/sessions", guarded([&engine](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, false);
    auto c = body.contains("concept") ? body.at("concept").get<Concept>() : body.get<Concept>();
    send_json(res, 201, engine.create_session(c));
  }));

  srv.Get("/sessions", guarded([&engine](const httplib::Request& req, httplib::Response& res) {
    auto page = engine.list_sessions(query_size(req, "offset", 0), query_size(req, "limit", 50));
    send_json(res, 200, {{"sessions", page.sessions}, {"offset", page.offset}, {"total", page.total}});
  }));

  srv.Get(R"(/sessions/([0-9a-f]+))",
          guarded([&engine](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, engine.get_session(req.matches[1]));
          }));

  auto stage = [&engine](JobKind kind) {
    return guarded([&engine, kind](const httplib::Request& req, httplib::Response& res) {
      std::optional<int> index;
      if (kind == JobKind::kSceneImage) index = scene_index(req);
      auto job = engine.submit(req.matches[1], kind, index);
      res.set_header("Location", "/jobs/" + job.id);
      send_json(res, 202, job);
    });
  };
  srv.Post(R"(/sessions/([0-9a-f]+)/validate)", stage(JobKind::kValidate));
  srv.Post(R"(/sessions/([0-9a-f]+)/analogies)", stage(JobKind::kAnalogies));
  srv.Post(R"(/sessions/([0-9a-f]+)/storyboard)", stage(JobKind::kStoryboard));
  srv.Post(R"(/sessions/([0-9a-f]+)/video)", stage(JobKind::kVideo));
  srv.Post(R"(/sessions/([0-9a-f]+)/scenes/(-?\d+)/regenerate)", stage(JobKind::kSceneImage));

  srv.Post(R"(/sessions/([0-9a-f]+)/choose)",
           guarded([&engine](const httplib::Request& req, httplib::Response& res) {
             auto body = parse_body(req, false);
             auto analogy_id = optional_string(body, "analogy_id");
             if (!analogy_id) throw Error(ErrorKind::kValidation, "analogy_id is required");
             send_json(res, 200, engine.choose_analogy(req.matches[1], *analogy_id));
           }));

  srv.Patch(R"(/sessions/([0-9a-f]+)/scenes/(-?\d+))",
            guarded([&engine](const httplib::Request& req, httplib::Response& res) {
              auto body = parse_body(req, false);
              send_json(res, 200,
                        engine.edit_scene(req.matches[1], scene_index(req),
                                          optional_string(body, "description"),
                                          optional_string(body, "image_prompt")));
            }));

  srv.Get(R"(/blobs/([0-9a-f]+))",
          guarded([&engine](const httplib::Request& req, httplib::Response& res) {
            std::string hash = req.matches[1];
            if (!is_hex_digest(hash)) throw Error(ErrorKind::kNotFound, "unknown blob " + hash);
            auto bytes = engine.store().get_blob(hash);
            res.status = 200;
            res.set_header("Cache-Control", "public, max-age=31536000, immutable");
            res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(),
                            sniff_media_type(bytes));
          }));

  srv.Get(R"(/jobs/([0-9a-f]+))",
          guarded([&engine](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, engine.jobs().get(req.matches[1]));
          }));

  srv.Get(R"(/jobs/([0-9a-f]+)/events)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::string job_id = req.matches[1];
            engine_.jobs().get(job_id);  // 404 before the stream starts
            auto keepalive = options_.sse_keepalive;
            auto& jobs = engine_.jobs();
            auto cursor = std::make_shared<std::size_t>(0);
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream",
                [&jobs, job_id, keepalive, cursor](std::size_t, httplib::DataSink& sink) {
                  auto events = jobs.events_since(job_id, *cursor, keepalive);
                  if (events.empty()) {
                    static constexpr char kPing[] = ": keep-alive\n\n";
                    return sink.write(kPing, sizeof kPing - 1);
                  }
                  for (const auto& e : events) {
                    auto frame = sse_frame(e);
                    if (!sink.write(frame.data(), frame.size())) return false;
                    ++*cursor;
                    if (e.terminal) {
                      sink.done();
                      return true;
                    }
                  }
                  return true;
                });
          }));
}

json health_report(const ServiceConfig& config) {
  auto probe = [](const BackendConfig& b) -> json {
    json out{{"kind", to_string(b.kind)}};
    if (b.is_mock()) {
      out["reachable"] = true;
      return out;
    }
    auto url = *b.endpoint;
    auto scheme_end = url.find("://");
    auto path_start = scheme_end == std::string::npos ? std::string::npos : url.find('/', scheme_end + 3);
    httplib::Client client(path_start == std::string::npos ? url : url.substr(0, path_start));
    client.set_connection_timeout(std::chrono::seconds(2));
    client.set_read_timeout(std::chrono::seconds(2));
    auto res = client.Get("/");
    out["reachable"] = static_cast<bool>(res);
    return out;
  };
  return {{"text", probe(config.text)}, {"image", probe(config.image)}, {"caption", probe(config.caption)}};
}

}  // namespace studio
