#pragma once

// Uniform access to text, image and caption models. Backends implement a
// single attempt; Gateway layers retries, backoff, timeouts and an in-flight
// cap on top. The mock family is fully deterministic so the whole pipeline
// runs offline.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "studio/errors.hpp"

namespace studio {

using json = nlohmann::json;

struct TextRequest {
  std::string prompt;
  int max_tokens = 1024;
  double temperature = 0.7;
  std::optional<std::int64_t> seed;

  void validate() const;
};

inline constexpr int kAllowedImageSides[] = {512, 768, 1024};

struct ImageRequest {
  std::string prompt;
  int width = 512;
  int height = 512;
  std::optional<std::int64_t> seed;

  void validate() const;
};

struct ImageResult {
  std::vector<std::uint8_t> bytes;
  std::string media_type;
  json metadata;  // backend-specific; the mock puts its sidecar here
};

enum class BackendKind { kLiveText, kLiveImage, kLiveCaption, kMockText, kMockImage, kMockCaption };

std::string_view to_string(BackendKind k);
BackendKind parse_backend_kind(std::string_view s);

struct BackendConfig {
  BackendKind kind = BackendKind::kMockText;
  std::optional<std::string> endpoint;        // full URL of the live endpoint
  std::optional<std::string> credential_ref;  // name of the env var holding the key
  std::string model;                          // forwarded to live backends
  int timeout_ms = 60000;
  int max_retries = 3;
  int backoff_base_ms = 500;
  int max_in_flight = 4;
  int batch_size = 1;  // image backends: candidates requested per call

  bool is_mock() const;
  void validate() const;
};

void from_json(const json& j, BackendConfig& c);
void to_json(json& j, const BackendConfig& c);

/// Default settings for a backend of the given kind.
BackendConfig backend_config(BackendKind kind);

/// Settings for the deterministic offline backends.
struct MockConfig {
  std::int64_t seed = 42;
  std::string fixtures_path;  // text fixture file; empty = procedural only
  /// Probability that the mock image generator leaves out an enumerated
  /// component it was not explicitly ordered (MUST) to show.
  double drop_rate = 0.25;
  /// Components the mock image generator never draws unless ordered to.
  std::vector<std::string> always_omit{"connecting tube"};
};

void from_json(const json& j, MockConfig& c);
void to_json(json& j, const MockConfig& c);

/// Failure of one backend attempt, classified for the retry policy.
class AttemptError : public std::runtime_error {
 public:
  enum class Class { kTransient, kTimeout, kAuth, kRejected };
  AttemptError(Class c, int status, std::string message)
      : std::runtime_error(std::move(message)), class_(c), status_(status) {}
  Class classification() const { return class_; }
  int status() const { return status_; }

 private:
  Class class_;
  int status_;
};

class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual std::string complete(const TextRequest& req) = 0;
};

class ImageBackend {
 public:
  virtual ~ImageBackend() = default;
  virtual ImageResult generate(const ImageRequest& req) = 0;
};

class CaptionBackend {
 public:
  virtual ~CaptionBackend() = default;
  /// `instruction` is the rendered caption_probe prompt.
  virtual std::string caption(std::span<const std::uint8_t> image,
                              const std::string& instruction) = 0;
};

struct CallStats {
  int attempts = 0;
  std::vector<int> backoff_ms;  // delay slept before each retry
};

struct RetryPolicy {
  int max_retries = 3;
  int backoff_base_ms = 500;
};

class Gateway {
 public:
  struct Limits {
    int text = 4, image = 4, caption = 4;
  };

  Gateway(std::unique_ptr<TextBackend> text, RetryPolicy text_policy,
          std::unique_ptr<ImageBackend> image, RetryPolicy image_policy,
          std::unique_ptr<CaptionBackend> caption, RetryPolicy caption_policy,
          Limits limits, bool mock);

  /// Builds backends from configuration. Live backends resolve credentials
  /// from the environment at call time and never store them.
  static std::unique_ptr<Gateway> from_config(const BackendConfig& text,
                                              const BackendConfig& image,
                                              const BackendConfig& caption,
                                              const MockConfig& mock);

  /// All-mock gateway.
  static std::unique_ptr<Gateway> mock(const MockConfig& mock);

  std::string complete_text(const TextRequest& req, CallStats* stats = nullptr);
  ImageResult generate_image(const ImageRequest& req, CallStats* stats = nullptr);
  std::string caption_image(std::span<const std::uint8_t> image,
                            const std::string& instruction, CallStats* stats = nullptr);

  bool is_mock() const { return mock_; }

  /// Replaces the sleep used between retries (tests use a no-op).
  void set_sleeper(std::function<void(int)> sleeper) { sleeper_ = std::move(sleeper); }

 private:
  std::unique_ptr<TextBackend> text_;
  std::unique_ptr<ImageBackend> image_;
  std::unique_ptr<CaptionBackend> caption_;
  RetryPolicy text_policy_, image_policy_, caption_policy_;
  std::counting_semaphore<1024> text_slots_, image_slots_, caption_slots_;
  bool mock_;
  std::function<void(int)> sleeper_;
};

// ---- mock family --------------------------------------------------------------

/// Answers prompts from a fixture table keyed by (Task, subject line), and
/// falls back to procedural output derived from hash(seed, prompt).
class MockTextBackend final : public TextBackend {
 public:
  explicit MockTextBackend(MockConfig config);
  std::string complete(const TextRequest& req) override;

 private:
  MockConfig config_;
  json fixtures_;
};

/// Draws a placard PNG: background colored by hash(seed, prompt), the
/// components it "depicts" as labeled boxes, the prompt text, and a sidecar
/// listing those components appended after the PNG data.
class MockImageBackend final : public ImageBackend {
 public:
  explicit MockImageBackend(MockConfig config);
  ImageResult generate(const ImageRequest& req) override;

 private:
  MockConfig config_;
};

/// Reports the sidecar components of a mock image verbatim.
class MockCaptionBackend final : public CaptionBackend {
 public:
  std::string caption(std::span<const std::uint8_t> image,
                      const std::string& instruction) override;
};

/// Sidecar trailer: <json bytes><u32 big-endian json length>"MOCKSCAR".
void append_sidecar(std::vector<std::uint8_t>& image, const json& sidecar);
std::optional<json> read_sidecar(std::span<const std::uint8_t> image);

/// Components an image prompt enumerates and those it orders with MUST
/// clauses, per the image prompt protocol below.
struct PromptComponents {
  std::vector<std::string> listed;
  std::vector<std::string> must;
  std::string base;  // prompt with MUST clauses removed
};
PromptComponents parse_prompt_components(const std::string& prompt);

// Image prompt protocol shared by the coverage validator and the mock image
// generator.
inline constexpr std::string_view kComponentsLead = " Depict each of these components distinctly: ";
inline constexpr std::string_view kMustLead = " The image MUST clearly show: ";

// ---- live family ----------------------------------------------------------------

std::unique_ptr<TextBackend> make_live_text_backend(const BackendConfig& c);
std::unique_ptr<ImageBackend> make_live_image_backend(const BackendConfig& c);
std::unique_ptr<CaptionBackend> make_live_caption_backend(const BackendConfig& c);

/// Runs `attempt` until it succeeds, fails permanently, or max_retries
/// retries are spent. Delays are base·2^k for retry k. Transient and timeout
/// failures retry; auth and other rejections surface at once.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, CallStats* stats, Fn&& attempt,
                  const std::function<void(int)>& sleep_ms) -> decltype(attempt()) {
  CallStats local;
  CallStats& st = stats ? *stats : local;
  st = {};
  for (int k = 0;; ++k) {
    ++st.attempts;
    try {
      return attempt();
    } catch (const AttemptError& e) {
      using C = AttemptError::Class;
      std::string status = e.status() ? " (status " + std::to_string(e.status()) + ")" : "";
      if (e.classification() == C::kAuth) {
        throw Error(ErrorKind::kAuth, "backend rejected credentials" + status);
      }
      if (e.classification() == C::kRejected) {
        throw Error(ErrorKind::kBackend, "backend rejected the request" + status);
      }
      if (k >= policy.max_retries) {
        if (e.classification() == C::kTimeout) {
          throw Error(ErrorKind::kTimeout, "backend timed out after " +
                                               std::to_string(st.attempts) + " attempts");
        }
        throw Error(ErrorKind::kExhausted, "backend still failing after " +
                                               std::to_string(st.attempts) + " attempts" +
                                               status);
      }
      int delay = policy.backoff_base_ms << std::min(k, 20);
      st.backoff_ms.push_back(delay);
      if (sleep_ms) sleep_ms(delay);
    }
  }
}

}  // namespace studio
