// `run --api URL`: the same pipeline, driven over HTTP.

#include <iostream>
#include <thread>

#include "cli.hpp"
#include "httplib.h"
#include "studio/domain.hpp"

namespace studio::cli {

namespace {

class Remote {
 public:
  explicit Remote(const std::string& base) : client_(base) {
    client_.set_read_timeout(std::chrono::seconds(300));
  }

  json call(const std::string& method, const std::string& path, const json& body = nullptr) {
    httplib::Result res = method == "GET"     ? client_.Get(path)
                          : method == "PATCH" ? client_.Patch(path, body.dump(), "application/json")
                                              : client_.Post(path, body.is_null() ? "" : body.dump(),
                                                             "application/json");
    if (!res) {
      throw Error(ErrorKind::kBackend, "service unreachable: " + httplib::to_string(res.error()));
    }
    auto doc = json::parse(res->body, nullptr, false);
    if (res->status >= 400) {
      std::string message = doc.is_object() && doc.contains("error")
                                ? doc["error"].value("message", std::string("request failed"))
                                : "HTTP " + std::to_string(res->status);
      throw Error(kind_for(res->status), message);
    }
    if (doc.is_discarded()) throw Error(ErrorKind::kBackend, "service sent a malformed document");
    return doc;
  }

  std::vector<std::uint8_t> blob(const BlobRef& ref) {
    auto res = client_.Get("/blobs/" + ref.hash);
    if (!res || res->status != 200) throw Error(ErrorKind::kNotFound, "blob " + ref.hash);
    return {res->body.begin(), res->body.end()};
  }

  // Starts a stage and polls its job to completion.
  void stage(const std::string& session, const std::string& path) {
    auto job = call("POST", "/sessions/" + session + path);
    const std::string id = job.at("id");
    for (;;) {
      auto state = call("GET", "/jobs/" + id);
      const std::string status = state.at("status");
      if (status == "succeeded") return;
      if (status == "failed") {
        auto kind = state.at("error_kind").get<std::string>();
        ErrorKind k = ErrorKind::kStage;
        for (auto candidate : {ErrorKind::kBackend, ErrorKind::kTimeout, ErrorKind::kAuth,
                               ErrorKind::kExhausted, ErrorKind::kPrecondition}) {
          if (to_string(candidate) == kind) k = candidate;
        }
        throw Error(k, state.value("error", std::string("job failed")));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  }

 private:
  static ErrorKind kind_for(int status) {
    switch (status) {
      case 404: return ErrorKind::kNotFound;
      case 409: return ErrorKind::kWrongState;
      case 422: return ErrorKind::kValidation;
      case 502: return ErrorKind::kBackend;
      default: return ErrorKind::kStage;
    }
  }

  httplib::Client client_;
};

}  // namespace

int run_remote(const RunArgs& args) {
  Remote remote(*args.api);
  std::string stage = "create";
  try {
    json concept_doc = Concept::make(args.concept_name, args.subject, args.level);
    auto session = remote.call("POST", "/sessions", concept_doc);
    const std::string id = session.at("id");
    std::cerr << "session " << id << "\n";

    stage = "validate";
    remote.stage(id, "/validate");
    session = remote.call("GET", "/sessions/" + id);
    if (session.at("state") == "failed") {
      std::cerr << "error: stage validate failed: " << session.value("failure_reason", std::string())
                << "\n";
      return kStageFailure;
    }
    stage = "analogies";
    remote.stage(id, "/analogies");
    session = remote.call("GET", "/sessions/" + id);
    stage = "choose";
    const auto& chosen = session.at("analogies").at(static_cast<std::size_t>(args.choose - 1));
    remote.call("POST", "/sessions/" + id + "/choose", {{"analogy_id", chosen.at("id")}});
    stage = "storyboard";
    remote.stage(id, "/storyboard");
    stage = "video";
    remote.stage(id, "/video");
    stage = "export";
    auto final_session = remote.call("GET", "/sessions/" + id).get<PipelineSession>();
    write_artifacts(final_session, args.out, [&](const BlobRef& ref) { return remote.blob(ref); });
    std::cout << id << "\n";
    return kOk;
  } catch (const Error& e) {
    std::cerr << "error: stage " << stage << " failed (" << to_string(e.kind()) << "): " << e.what()
              << "\n";
    return exit_code_for(e.kind());
  }
}

}  // namespace studio::cli
