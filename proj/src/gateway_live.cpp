#include <cstdlib>

#include "httplib.h"
#include "studio/gateway.hpp"
#include "studio/store.hpp"
#include "studio/util.hpp"

namespace studio {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::kConfig, "endpoint: expected scheme://host/path, got '" + url + "'");
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool is_timeout(httplib::Error e) {
  return e == httplib::Error::ConnectionTimeout || e == httplib::Error::Read ||
         e == httplib::Error::Write;
}

class LiveBackend {
 public:
  explicit LiveBackend(const BackendConfig& c) : config_(c), endpoint_(split_endpoint(*c.endpoint)) {}

 protected:
  // One POST; classifies every failure for the retry policy. Response
  // bodies of failed calls are never surfaced.
  json post(const json& body) const {
    const char* key = std::getenv(config_.credential_ref->c_str());
    if (!key || !*key) {
      throw AttemptError(AttemptError::Class::kAuth, 0,
                         "credential variable " + *config_.credential_ref + " is not set");
    }
    httplib::Client client(endpoint_.origin);
    auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers{{"Authorization", std::string("Bearer ") + key}};
    auto res = client.Post(endpoint_.path, headers, body.dump(), "application/json");
    if (!res) {
      auto err = res.error();
      auto cls = is_timeout(err) ? AttemptError::Class::kTimeout : AttemptError::Class::kTransient;
      throw AttemptError(cls, 0, "transport failure: " + httplib::to_string(err));
    }
    int status = res->status;
    if (status == 401 || status == 403) {
      throw AttemptError(AttemptError::Class::kAuth, status, "unauthorized");
    }
    if (status == 429 || status >= 500) {
      throw AttemptError(AttemptError::Class::kTransient, status, "retryable status");
    }
    if (status < 200 || status >= 300) {
      throw AttemptError(AttemptError::Class::kRejected, status, "rejected");
    }
    auto parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) {
      throw AttemptError(AttemptError::Class::kRejected, status, "malformed response body");
    }
    return parsed;
  }

  static std::string chat_content(const json& response) {
    try {
      return response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw AttemptError(AttemptError::Class::kRejected, 200, "response lacks choices[0].message.content");
    }
  }

  BackendConfig config_;
  Endpoint endpoint_;
};

class LiveTextBackend final : public TextBackend, LiveBackend {
 public:
  using LiveBackend::LiveBackend;

  std::string complete(const TextRequest& req) override {
    json body{{"model", config_.model},
              {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
              {"max_tokens", req.max_tokens},
              {"temperature", req.temperature}};
    if (req.seed) body["seed"] = *req.seed;
    return chat_content(post(body));
  }
};

class LiveImageBackend final : public ImageBackend, LiveBackend {
 public:
  using LiveBackend::LiveBackend;

  ImageResult generate(const ImageRequest& req) override {
    json body{{"model", config_.model},
              {"prompt", req.prompt},
              {"n", config_.batch_size},
              {"size", std::to_string(req.width) + "x" + std::to_string(req.height)},
              {"response_format", "b64_json"}};
    if (req.seed) body["seed"] = *req.seed;
    auto response = post(body);
    std::string b64;
    std::size_t candidates = 0;
    try {
      candidates = response.at("data").size();
      b64 = response.at("data").at(0).at("b64_json").get<std::string>();
    } catch (const json::exception&) {
      throw AttemptError(AttemptError::Class::kRejected, 200, "response lacks data[0].b64_json");
    }
    ImageResult result;
    result.bytes = base64_decode(b64);
    result.media_type = sniff_media_type(result.bytes);
    result.metadata = {{"model", config_.model}, {"candidates", candidates}};
    return result;
  }
};

class LiveCaptionBackend final : public CaptionBackend, LiveBackend {
 public:
  using LiveBackend::LiveBackend;

  std::string caption(std::span<const std::uint8_t> image, const std::string& instruction) override {
    auto uri = "data:" + sniff_media_type(image) + ";base64," + base64_encode(image);
    json content = json::array({{{"type", "text"}, {"text", instruction}},
                                {{"type", "image_url"}, {"image_url", {{"url", uri}}}}});
    json body{{"model", config_.model},
              {"messages", json::array({{{"role", "user"}, {"content", content}}})},
              {"max_tokens", 300},
              {"temperature", 0.0}};
    return chat_content(post(body));
  }
};

}  // namespace

std::unique_ptr<TextBackend> make_live_text_backend(const BackendConfig& c) {
  c.validate();
  return std::make_unique<LiveTextBackend>(c);
}

std::unique_ptr<ImageBackend> make_live_image_backend(const BackendConfig& c) {
  c.validate();
  return std::make_unique<LiveImageBackend>(c);
}

std::unique_ptr<CaptionBackend> make_live_caption_backend(const BackendConfig& c) {
  c.validate();
  return std::make_unique<LiveCaptionBackend>(c);
}

}  // namespace studio
