#include <cstdlib>
#include <future>

#include "doctest.h"
#include "httplib.h"
#include "studio/api.hpp"
#include "support.hpp"

using namespace studio;

namespace {

struct Rig {
  testing::TempDir dir;
  std::unique_ptr<Engine> engine;
  std::unique_ptr<ApiServer> server;
  std::unique_ptr<httplib::Client> client;

  explicit Rig(std::unique_ptr<Engine> e = nullptr, ApiOptions options = {}) {
    engine = e ? std::move(e) : testing::make_engine(dir / "store");
    server = std::make_unique<ApiServer>(*engine, std::move(options));
    int port = server->bind("127.0.0.1", 0);
    server->start_background();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(std::chrono::seconds(30));
  }
  ~Rig() { server->stop(); }

  json post(const std::string& path, const json& body, int expect) {
    auto res = client->Post(path, body.is_null() ? std::string() : body.dump(), "application/json");
    REQUIRE(res);
    CAPTURE(path);
    CAPTURE(res->body);
    CHECK(res->status == expect);
    return res->body.empty() ? json() : json::parse(res->body);
  }
  json get(const std::string& path, int expect = 200) {
    auto res = client->Get(path);
    REQUIRE(res);
    CAPTURE(path);
    CHECK(res->status == expect);
    return json::parse(res->body);
  }
  json patch(const std::string& path, const json& body, int expect) {
    auto res = client->Patch(path, body.dump(), "application/json");
    REQUIRE(res);
    CAPTURE(res->body);
    CHECK(res->status == expect);
    return json::parse(res->body);
  }

  // Full SSE transcript of a job: (event name, data) pairs.
  std::vector<std::pair<std::string, json>> events(const std::string& job_id) {
    std::string raw;
    auto res = client->Get("/jobs/" + job_id + "/events", [&](const char* data, std::size_t n) {
      raw.append(data, n);
      return true;
    });
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type") == "text/event-stream");
    std::vector<std::pair<std::string, json>> out;
    std::size_t pos = 0;
    while (pos < raw.size()) {
      auto end = raw.find("\n\n", pos);
      if (end == std::string::npos) end = raw.size();
      auto frame = raw.substr(pos, end - pos);
      pos = end + 2;
      std::string name;
      std::string data;
      std::stringstream ss(frame);
      std::string line;
      while (std::getline(ss, line)) {
        if (line.rfind("event: ", 0) == 0) name = line.substr(7);
        if (line.rfind("data: ", 0) == 0) data = line.substr(6);
      }
      if (!name.empty()) out.emplace_back(name, json::parse(data));
    }
    return out;
  }

  json run_job(const std::string& path) {
    auto job = post(path, nullptr, 202);
    auto evs = events(job["id"]);
    REQUIRE_FALSE(evs.empty());
    return get("/jobs/" + job["id"].get<std::string>());
  }
};

// Image backend that holds every call until released.
struct GatedImage final : ImageBackend {
  testing::TinyImageBackend inner{testing::mock_config()};
  std::mutex mu;
  std::condition_variable cv;
  bool open = false;
  ImageResult generate(const ImageRequest& req) override {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return open; });
    return inner.generate(req);
  }
  void release() {
    std::lock_guard lock(mu);
    open = true;
    cv.notify_all();
  }
};

int terminal_count(const std::vector<std::pair<std::string, json>>& evs) {
  return static_cast<int>(std::count_if(evs.begin(), evs.end(), [](const auto& e) {
    return e.first == "terminal" && e.second["terminal"] == true;
  }));
}

}  // namespace

TEST_SUITE("api") {

TEST_CASE("health reports mock backends") {
  Rig rig;
  auto h = rig.get("/health");
  CHECK(h["status"] == "ok");
  CHECK(h["backends"] == "mock");
}

TEST_CASE("binding a taken port is an io error") {
  Rig rig;
  auto e = testing::make_engine(rig.dir / "other");
  ApiServer second(*e, {});
  try {
    second.bind("127.0.0.1", rig.server->port());
    FAIL("expected bind failure");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::kIo);
  }
}

TEST_CASE("happy path from concept to video over http") {
  Rig rig;
  auto s = rig.post("/sessions", {{"name", "Newton's First Law"}, {"subject", "physics"}}, 201);
  std::string id = s["id"];
  CHECK(s["state"] == "created");
  CHECK(rig.run_job("/sessions/" + id + "/validate")["status"] == "succeeded");
  CHECK(rig.run_job("/sessions/" + id + "/analogies")["status"] == "succeeded");
  auto session = rig.get("/sessions/" + id);
  REQUIRE(session["analogies"].size() == 3);
  auto chosen = rig.post("/sessions/" + id + "/choose",
                         {{"analogy_id", session["analogies"][0]["id"]}}, 200);
  CHECK(chosen["state"] == "analogy_chosen");
  CHECK(rig.run_job("/sessions/" + id + "/storyboard")["status"] == "succeeded");
  auto edited = rig.patch("/sessions/" + id + "/scenes/1", {{"description", "Standing still."}}, 200);
  CHECK(edited["storyboard"]["scenes"][0]["description"] == "Standing still.");
  CHECK(edited["storyboard"]["scenes"][0]["edited_by_user"] == true);
  CHECK(rig.run_job("/sessions/" + id + "/scenes/2/regenerate")["status"] == "succeeded");
  CHECK(rig.run_job("/sessions/" + id + "/video")["status"] == "succeeded");
  auto done = rig.get("/sessions/" + id);
  CHECK(done["state"] == "video_ready");

  std::string hash = done["video"]["hash"];
  auto blob = rig.client->Get("/blobs/" + hash);
  REQUIRE(blob);
  CHECK(blob->status == 200);
  CHECK(sha256_hex(to_bytes(blob->body)) == hash);
  CHECK(blob->get_header_value("Content-Type") == done["video"]["media_type"].get<std::string>());

  auto page = rig.get("/sessions?limit=1");
  CHECK(page["total"] == 1);
  CHECK(page["sessions"][0]["id"] == id);
}

TEST_CASE("choose before analogies is a conflict naming the state") {
  Rig rig;
  auto s = rig.post("/sessions", {{"name", "Newton's First Law"}}, 201);
  auto err = rig.post("/sessions/" + s["id"].get<std::string>() + "/choose", {{"analogy_id", "abc"}}, 409);
  CHECK(err["error"]["kind"] == "wrong_state");
  CHECK(err["error"]["state"] == "created");
  auto video = rig.post("/sessions/" + s["id"].get<std::string>() + "/video", nullptr, 409);
  CHECK(video["error"]["state"] == "created");
}

TEST_CASE("two storyboard requests at once: one accepted, one conflict") {
  testing::TempDir dir;
  auto gated = std::make_unique<GatedImage>();
  auto* gate = gated.get();
  std::shared_ptr<Gateway> gw = testing::fast_gateway(testing::mock_config(), std::move(gated));
  auto engine = testing::make_engine(dir.path(), testing::fast_options(), gw);
  auto s = engine->create_session(Concept::make("Newton's First Law"));
  engine->validate_concept(s.id);
  engine->choose_analogy(s.id, engine->generate_analogies(s.id)[0].id);
  Rig rig(std::move(engine));

  auto fire = [&] {
    httplib::Client c("127.0.0.1", rig.server->port());
    auto res = c.Post("/sessions/" + s.id + "/storyboard", "", "application/json");
    return res ? res->status : -1;
  };
  auto a = std::async(std::launch::async, fire);
  auto b = std::async(std::launch::async, fire);
  std::multiset<int> codes{a.get(), b.get()};
  CHECK(codes == std::multiset<int>{202, 409});
  gate->release();
  // wait for the accepted job through the registry
  for (int i = 0; i < 500 && rig.get("/sessions/" + s.id)["state"] != "storyboard_ready"; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  CHECK(rig.get("/sessions/" + s.id)["state"] == "storyboard_ready");
}

TEST_CASE("event stream ends with exactly one terminal event") {
  Rig rig;
  auto s = rig.post("/sessions", {{"name", "Voltage and Current"}}, 201);
  auto job = rig.post("/sessions/" + s["id"].get<std::string>() + "/validate", nullptr, 202);
  CHECK(job["status"] == "queued");
  auto evs = rig.events(job["id"]);
  REQUIRE(evs.size() >= 2);
  CHECK(terminal_count(evs) == 1);
  CHECK(evs.back().first == "terminal");
  for (std::size_t i = 1; i < evs.size(); ++i) {
    CHECK(evs[i].second["fraction"].get<double>() >= evs[i - 1].second["fraction"].get<double>());
  }
  // replaying a finished job gives the same transcript
  auto again = rig.events(job["id"]);
  CHECK(again.size() == evs.size());
  CHECK(terminal_count(again) == 1);
}

TEST_CASE("failed stages also end with one terminal event") {
  struct DeadText final : TextBackend {
    std::string complete(const TextRequest&) override {
      throw AttemptError(AttemptError::Class::kRejected, 400, "refused");
    }
  };
  testing::TempDir dir;
  std::shared_ptr<Gateway> gw =
      testing::fast_gateway(testing::mock_config(), nullptr, std::make_unique<DeadText>());
  Rig rig(testing::make_engine(dir.path(), testing::fast_options(), gw));
  auto s = rig.post("/sessions", {{"name", "Voltage and Current"}}, 201);
  auto job = rig.post("/sessions/" + s["id"].get<std::string>() + "/validate", nullptr, 202);
  auto evs = rig.events(job["id"]);
  CHECK(terminal_count(evs) == 1);
  CHECK(evs.back().second["message"].get<std::string>().find("status 400") != std::string::npos);
  auto final_job = rig.get("/jobs/" + job["id"].get<std::string>());
  CHECK(final_job["status"] == "failed");
  CHECK(final_job["error_kind"] == "backend");
}

TEST_CASE("unknown things are 404 and bad input is 422") {
  Rig rig;
  auto missing = random_id();
  CHECK(rig.get("/sessions/" + missing, 404)["error"]["kind"] == "not_found");
  CHECK(rig.get("/jobs/" + missing, 404)["error"]["kind"] == "not_found");
  CHECK(rig.get("/blobs/" + std::string(64, 'a'), 404)["error"]["kind"] == "not_found");
  rig.get("/jobs/" + missing + "/events", 404);
  rig.post("/sessions/" + missing + "/validate", nullptr, 404);

  CHECK(rig.post("/sessions", {{"name", ""}}, 422)["error"]["kind"] == "validation");
  rig.post("/sessions", {{"name", std::string(201, 'x')}}, 422);
  rig.post("/sessions", {{"subject", "physics"}}, 422);
  rig.post("/sessions", {{"name", "x"}, {"subject", "astrology"}}, 422);
  auto res = rig.client->Post("/sessions", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 422);
  rig.get("/sessions?limit=-3", 422);

  auto s = rig.post("/sessions", {{"name", "x"}}, 201);
  rig.post("/sessions/" + s["id"].get<std::string>() + "/choose", json::object(), 422);
}

TEST_CASE("scene index outside one to four is rejected") {
  Rig rig;
  auto s = rig.post("/sessions", {{"name", "Newton's First Law"}}, 201);
  std::string id = s["id"];
  rig.run_job("/sessions/" + id + "/validate");
  rig.run_job("/sessions/" + id + "/analogies");
  auto session = rig.get("/sessions/" + id);
  rig.post("/sessions/" + id + "/choose", {{"analogy_id", session["analogies"][1]["id"]}}, 200);
  rig.run_job("/sessions/" + id + "/storyboard");
  rig.patch("/sessions/" + id + "/scenes/5", {{"description", "x"}}, 422);
  rig.patch("/sessions/" + id + "/scenes/0", {{"description", "x"}}, 422);
  rig.post("/sessions/" + id + "/scenes/9/regenerate", nullptr, 422);
  rig.patch("/sessions/" + id + "/scenes/1", {{"description", 5}}, 422);
}

TEST_CASE("cors headers when enabled") {
  ApiOptions opts;
  opts.cors = true;
  Rig rig(nullptr, opts);
  auto res = rig.client->Get("/health");
  REQUIRE(res);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  auto pre = rig.client->Options("/sessions");
  REQUIRE(pre);
  CHECK(pre->status == 204);

  Rig plain;
  auto r2 = plain.client->Get("/health");
  REQUIRE(r2);
  CHECK_FALSE(r2->has_header("Access-Control-Allow-Origin"));
}

TEST_CASE("credentials never appear in responses or event streams") {
  const std::string secret = "sk-live-4d9e2b7a1c";
  ::setenv("STUDIO_API_SUITE_KEY", secret.c_str(), 1);
  testing::TempDir dir;
  auto cfg = default_config();
  cfg.data_root = dir / "data";
  cfg.text = parse_config(json::parse(R"({"backends": {"text": {"kind": "live_text",
      "endpoint": "http://127.0.0.1:1/v1/chat", "credential_ref": "STUDIO_API_SUITE_KEY",
      "timeout_ms": 300, "max_retries": 0, "backoff_base_ms": 1}}})")).text;
  Rig rig(Engine::from_config(cfg));
  auto s = rig.post("/sessions", {{"name", "Newton's First Law"}}, 201);
  auto job = rig.post("/sessions/" + s["id"].get<std::string>() + "/validate", nullptr, 202);
  auto evs = rig.events(job["id"]);
  CHECK(terminal_count(evs) == 1);
  std::string everything;
  for (const auto& [_, data] : evs) everything += data.dump();
  everything += rig.get("/jobs/" + job["id"].get<std::string>()).dump();
  everything += rig.get("/sessions/" + s["id"].get<std::string>()).dump();
  everything += rig.get("/health").dump();
  CHECK(rig.get("/health")["backends"] == "live");
  CHECK(everything.find(secret) == std::string::npos);
  for (const auto& f : std::filesystem::recursive_directory_iterator(dir.path())) {
    if (f.is_regular_file()) {
      CHECK(to_string(read_file(f.path().string())).find(secret) == std::string::npos);
    }
  }
  ::unsetenv("STUDIO_API_SUITE_KEY");
}

TEST_CASE("status mapping by error kind") {
  CHECK(http_status(ErrorKind::kValidation) == 422);
  CHECK(http_status(ErrorKind::kPrecondition) == 422);
  CHECK(http_status(ErrorKind::kNotFound) == 404);
  CHECK(http_status(ErrorKind::kWrongState) == 409);
  CHECK(http_status(ErrorKind::kBusy) == 409);
  CHECK(http_status(ErrorKind::kBackend) == 502);
  CHECK(http_status(ErrorKind::kTimeout) == 502);
  CHECK(http_status(ErrorKind::kIntegrity) == 500);
}

TEST_CASE("health report for a mock configuration") {
  auto report = health_report(default_config());
  CHECK(report["text"]["kind"] == "mock_text");
  CHECK(report["image"]["reachable"] == true);
}

}  // TEST_SUITE
