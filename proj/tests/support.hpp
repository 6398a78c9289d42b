#pragma once

// Shared helpers for the unit and acceptance suites.

#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "studio/config.hpp"
#include "studio/engine.hpp"
#include "studio/gateway.hpp"
#include "studio/prompts.hpp"
#include "studio/raster.hpp"
#include "studio/store.hpp"
#include "studio/util.hpp"

namespace testing {

namespace fs = std::filesystem;

inline fs::path fixtures_dir() { return fs::path(STUDIO_TEST_FIXTURES); }
inline fs::path data_dir() { return fs::path(STUDIO_DATA_DIR); }
inline fs::path cli_binary() { return fs::path(STUDIO_CLI_BINARY); }

inline std::string fixture_text(const std::string& rel) {
  return studio::to_string(studio::read_file((fixtures_dir() / rel).string()));
}

inline studio::json fixture_json(const std::string& rel) {
  return studio::json::parse(fixture_text(rel));
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("studio-test-" + studio::random_id().substr(0, 12) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline studio::MockConfig mock_config(std::int64_t seed = 42) {
  studio::MockConfig m;
  m.seed = seed;
  m.fixtures_path = (data_dir() / "mock" / "text_fixtures.json").string();
  return m;
}

inline std::shared_ptr<const studio::PromptLibrary> prompts() {
  static auto lib = std::make_shared<const studio::PromptLibrary>(
      studio::PromptLibrary::load_dir(data_dir() / "templates"));
  return lib;
}

/// Follows the mock sidecar protocol but draws a 16x16 placard, so suites
/// that run thousands of stages stay fast. Always omits always_omit items
/// that are not ordered with a MUST clause; never drops anything else.
class TinyImageBackend final : public studio::ImageBackend {
 public:
  explicit TinyImageBackend(studio::MockConfig config) : config_(std::move(config)) {}

  studio::ImageResult generate(const studio::ImageRequest& req) override {
    auto comps = studio::parse_prompt_components(req.prompt);
    std::vector<std::string> depicted;
    auto lower_eq = [](const std::string& a, const std::string& b) {
      return studio::to_lower(a) == studio::to_lower(b);
    };
    for (const auto& c : comps.listed) {
      bool ordered = std::any_of(comps.must.begin(), comps.must.end(),
                                 [&](const auto& m) { return lower_eq(m, c); });
      bool omit = std::any_of(config_.always_omit.begin(), config_.always_omit.end(),
                              [&](const auto& m) { return lower_eq(m, c); });
      if (ordered || !omit) depicted.push_back(c);
    }
    for (const auto& m : comps.must) {
      if (std::none_of(depicted.begin(), depicted.end(), [&](const auto& d) { return lower_eq(d, m); })) {
        depicted.push_back(m);
      }
    }
    auto h = studio::stable_hash64(std::to_string(req.seed.value_or(config_.seed)) + "|" + req.prompt);
    studio::Raster img(16, 16, studio::Rgb{static_cast<std::uint8_t>(h & 0xff),
                                           static_cast<std::uint8_t>((h >> 8) & 0xff),
                                           static_cast<std::uint8_t>((h >> 16) & 0xff)});
    auto bytes = studio::encode_png(img);
    studio::json sidecar{{"generator", "tiny"}, {"components", depicted}};
    studio::append_sidecar(bytes, sidecar);
    return {std::move(bytes), "image/png", sidecar};
  }

 private:
  studio::MockConfig config_;
};

inline std::unique_ptr<studio::Gateway> fast_gateway(
    const studio::MockConfig& mock = mock_config(),
    std::unique_ptr<studio::ImageBackend> image = nullptr,
    std::unique_ptr<studio::TextBackend> text = nullptr,
    std::unique_ptr<studio::CaptionBackend> caption = nullptr) {
  if (!image) image = std::make_unique<TinyImageBackend>(mock);
  if (!text) text = std::make_unique<studio::MockTextBackend>(mock);
  if (!caption) caption = std::make_unique<studio::MockCaptionBackend>();
  studio::RetryPolicy policy{1, 1};
  auto gw = std::make_unique<studio::Gateway>(std::move(text), policy, std::move(image), policy,
                                              std::move(caption), policy, studio::Gateway::Limits{},
                                              true);
  gw->set_sleeper([](int) {});
  return gw;
}

/// Timing for suites that render often: tiny frames, one keyframe per
/// segment, and no external encoder.
inline studio::EngineOptions fast_options() {
  studio::EngineOptions o;
  o.mock_seed = 42;
  o.timing.width = 32;
  o.timing.height = 32;
  o.timing.segment_ms = 1000;
  o.timing.crossfade_ms = 200;
  o.render.encoder = "studio-no-such-encoder";
  o.max_jobs = 2;
  return o;
}

inline std::unique_ptr<studio::Engine> make_engine(const fs::path& root,
                                                   studio::EngineOptions options = fast_options(),
                                                   std::shared_ptr<studio::Gateway> gateway = nullptr) {
  if (!gateway) gateway = fast_gateway();
  return std::make_unique<studio::Engine>(std::move(options),
                                          std::make_shared<studio::FsStore>(root),
                                          std::move(gateway), prompts());
}

/// Four flat-colour scenes stored in `store`, each with a one-attempt trail.
inline studio::Storyboard synthetic_storyboard(studio::Store& store, int side = 64) {
  studio::Storyboard sb;
  sb.analogy_id = "synthetic";
  sb.narrative = "A short story.";
  sb.checklist.analogy_id = "synthetic";
  sb.checklist.items.push_back({"thing", {}, studio::Criticality::kRequired});
  for (int i = 1; i <= 4; ++i) {
    studio::Raster img(side, side, studio::Rgb{static_cast<std::uint8_t>(60 * i), 90,
                                               static_cast<std::uint8_t>(250 - 50 * i)});
    auto ref = store.put_blob(studio::encode_png(img), "image/png");
    studio::Scene s;
    s.index = i;
    s.image_prompt = "picture " + std::to_string(i);
    s.description = "Scene number " + std::to_string(i) + " caption.";
    s.image = ref;
    studio::CoverageAttempt a;
    a.attempt = 1;
    a.prompt = s.image_prompt;
    a.image = ref;
    a.caption = "thing";
    a.report.checklist_ref = "synthetic";
    a.report.matched = {"thing"};
    a.report.coverage_ratio = 1.0;
    s.coverage.push_back(a);
    sb.scenes.push_back(s);
  }
  return sb;
}

/// Runs a command through the shell; returns the exit status and stdout.
struct Shell {
  int status = -1;
  std::string out;
};

inline Shell shell(const std::string& command) {
  Shell r;
  FILE* p = ::popen(command.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  int st = ::pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

inline std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

}  // namespace testing
