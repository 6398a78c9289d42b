#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "studio/gateway.hpp"
#include "studio/video.hpp"

namespace studio {

struct GenerationConfig {
  std::optional<std::int64_t> seed;  // unset: mock.seed for mock text, none for live
  int image_width = 512;
  int image_height = 512;
  int coverage_budget = 2;
};

/// Everything the engine and the HTTP service read from the config file.
///
///   {
///     "data_root": "./studio-data",
///     "templates_dir": "<install>/data/templates",
///     "host": "127.0.0.1", "port": 8080, "cors": false,
///     "parallelism": {"jobs": 4, "renders": 2},
///     "backends": {"text": {...}, "image": {...}, "caption": {...}},
///     "mock": {"seed": 42, "fixtures_path": "...", "drop_rate": 0.25, "always_omit": [...]},
///     "generation": {"seed": 7, "image_width": 512, "image_height": 512, "coverage_budget": 2},
///     "video": {"timing": {...}, "render": {...}}
///   }
///
/// Env overrides: STUDIO_DATA_ROOT, STUDIO_TEMPLATES_DIR, STUDIO_HOST,
/// STUDIO_PORT, STUDIO_CORS, STUDIO_MOCK_SEED.
struct ServiceConfig {
  std::filesystem::path data_root = "studio-data";
  std::filesystem::path templates_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  bool cors = false;
  int max_jobs = 4;
  int max_renders = 2;
  BackendConfig text = backend_config(BackendKind::kMockText);
  BackendConfig image = backend_config(BackendKind::kMockImage);
  BackendConfig caption = backend_config(BackendKind::kMockCaption);
  MockConfig mock;
  GenerationConfig generation;
  TimingConfig timing;
  RenderConfig render;

  bool all_mock() const { return text.is_mock() && image.is_mock() && caption.is_mock(); }
  void validate() const;
};

/// Defaults: all-mock backends, bundled templates and fixtures.
ServiceConfig default_config();

/// Parses a config document on top of the defaults. Errors are kConfig
/// and name the offending field by its dotted path.
ServiceConfig parse_config(const json& doc);
ServiceConfig load_config(const std::filesystem::path& path);

/// Applies the STUDIO_* environment overrides.
void apply_env_overrides(ServiceConfig& config);

/// Directory holding the bundled templates and mock fixtures.
std::filesystem::path bundled_data_dir();

}  // namespace studio
