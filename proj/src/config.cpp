#include "studio/config.hpp"

#include <cstdlib>
#include <set>

#include "studio/util.hpp"

namespace fs = std::filesystem;

namespace studio {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw Error(ErrorKind::kConfig, "config field " + path + ": " + why);
}

void reject_unknown(const json& obj, const std::string& path, std::set<std::string> known) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) fail(path.empty() ? key : path + "." + key, "unknown field");
  }
}

const json& object_at(const json& doc, const char* key, const std::string& path) {
  const auto& v = doc.at(key);
  if (!v.is_object()) fail(path, "expected an object");
  return v;
}

template <typename T>
void read(const json& obj, const char* key, T& target, const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    it->get_to(target);
  } catch (const json::exception&) {
    fail(prefix + key, "wrong type");
  }
}

// Runs a section parser and prefixes its error with the section path.
template <typename Fn>
void section(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    std::string msg = e.what();
    if (msg.rfind("config field ", 0) == 0) throw;
    fail(path + "." + msg.substr(0, msg.find(':')), msg.find(':') == std::string::npos
                                                        ? msg
                                                        : trim(msg.substr(msg.find(':') + 1)));
  }
}

int parse_int_env(const char* name, const std::string& value) {
  try {
    std::size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(name);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kConfig, std::string("environment ") + name + ": not an integer");
  }
}

}  // namespace

fs::path bundled_data_dir() {
  if (const char* env = std::getenv("STUDIO_DATA_DIR"); env && *env) return env;
  return STUDIO_DATA_DIR;
}

ServiceConfig default_config() {
  ServiceConfig c;
  c.templates_dir = bundled_data_dir() / "templates";
  c.mock.fixtures_path = (bundled_data_dir() / "mock" / "text_fixtures.json").string();
  return c;
}

void ServiceConfig::validate() const {
  if (data_root.empty()) fail("data_root", "must not be empty");
  if (templates_dir.empty()) fail("templates_dir", "must not be empty");
  if (port < 0 || port > 65535) fail("port", "must be in 0..65535");
  if (max_jobs < 1 || max_jobs > 64) fail("parallelism.jobs", "must be in 1..64");
  if (max_renders < 1 || max_renders > 64) fail("parallelism.renders", "must be in 1..64");
  if (generation.coverage_budget < 0) fail("generation.coverage_budget", "must be >= 0");
  ImageRequest probe{"x", generation.image_width, generation.image_height, std::nullopt};
  try {
    probe.validate();
  } catch (const Error&) {
    fail("generation.image_width", "image sides must be 512, 768 or 1024");
  }
}

ServiceConfig parse_config(const json& doc) {
  if (!doc.is_object()) fail("(root)", "expected an object");
  reject_unknown(doc, "",
                 {"data_root", "templates_dir", "host", "port", "cors", "parallelism", "backends",
                  "mock", "generation", "video"});
  auto c = default_config();
  std::string data_root = c.data_root.string();
  std::string templates = c.templates_dir.string();
  read(doc, "data_root", data_root, "");
  read(doc, "templates_dir", templates, "");
  read(doc, "host", c.host, "");
  read(doc, "port", c.port, "");
  read(doc, "cors", c.cors, "");
  c.data_root = data_root;
  c.templates_dir = templates;

  if (doc.contains("parallelism")) {
    const auto& p = object_at(doc, "parallelism", "parallelism");
    reject_unknown(p, "parallelism", {"jobs", "renders"});
    read(p, "jobs", c.max_jobs, "parallelism.");
    read(p, "renders", c.max_renders, "parallelism.");
  }
  if (doc.contains("backends")) {
    const auto& b = object_at(doc, "backends", "backends");
    reject_unknown(b, "backends", {"text", "image", "caption"});
    auto backend = [&](const char* key, BackendConfig& target) {
      if (!b.contains(key)) return;
      auto path = std::string("backends.") + key;
      const auto& sec = object_at(b, key, path);
      reject_unknown(sec, path,
                     {"kind", "endpoint", "credential_ref", "model", "timeout_ms", "max_retries",
                      "backoff_base_ms", "max_in_flight", "batch_size"});
      section(path, [&] { from_json(sec, target); });
    };
    backend("text", c.text);
    backend("image", c.image);
    backend("caption", c.caption);
  }
  if (doc.contains("mock")) {
    const auto& m = object_at(doc, "mock", "mock");
    reject_unknown(m, "mock", {"seed", "fixtures_path", "drop_rate", "always_omit"});
    section("mock", [&] { from_json(m, c.mock); });
  }
  if (doc.contains("generation")) {
    const auto& g = object_at(doc, "generation", "generation");
    reject_unknown(g, "generation", {"seed", "image_width", "image_height", "coverage_budget"});
    if (g.contains("seed")) {
      std::int64_t seed = 0;
      read(g, "seed", seed, "generation.");
      c.generation.seed = seed;
    }
    read(g, "image_width", c.generation.image_width, "generation.");
    read(g, "image_height", c.generation.image_height, "generation.");
    read(g, "coverage_budget", c.generation.coverage_budget, "generation.");
  }
  if (doc.contains("video")) {
    const auto& v = object_at(doc, "video", "video");
    reject_unknown(v, "video", {"timing", "render"});
    if (v.contains("timing")) {
      const auto& t = object_at(v, "timing", "video.timing");
      reject_unknown(t, "video.timing",
                     {"segment_ms", "durations_ms", "start_rect", "end_rect", "crossfade_ms", "fps",
                      "width", "height"});
      section("video.timing", [&] { from_json(t, c.timing); });
    }
    if (v.contains("render")) {
      const auto& r = object_at(v, "render", "video.render");
      reject_unknown(r, "video.render", {"encoder", "encoder_args", "fallback", "work_dir"});
      section("video.render", [&] { from_json(r, c.render); });
    }
  }
  c.validate();
  return c;
}

ServiceConfig load_config(const fs::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path.string());
  } catch (const Error&) {
    throw Error(ErrorKind::kConfig, "cannot read config file " + path.string());
  }
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kConfig, "config file " + path.string() +
                                        " is not valid JSON (byte " + std::to_string(e.byte) + ")");
  }
  auto c = parse_config(doc);
  // Relative paths in the file are relative to the file itself.
  auto base = path.parent_path();
  if (c.data_root.is_relative() && doc.contains("data_root")) c.data_root = base / c.data_root;
  if (c.templates_dir.is_relative() && doc.contains("templates_dir")) {
    c.templates_dir = base / c.templates_dir;
  }
  if (doc.contains("mock") && doc["mock"].contains("fixtures_path") &&
      fs::path(c.mock.fixtures_path).is_relative() && !c.mock.fixtures_path.empty()) {
    c.mock.fixtures_path = (base / c.mock.fixtures_path).string();
  }
  return c;
}

void apply_env_overrides(ServiceConfig& c) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("STUDIO_DATA_ROOT")) c.data_root = *v;
  if (auto v = env("STUDIO_TEMPLATES_DIR")) c.templates_dir = *v;
  if (auto v = env("STUDIO_HOST")) c.host = *v;
  if (auto v = env("STUDIO_PORT")) c.port = parse_int_env("STUDIO_PORT", *v);
  if (auto v = env("STUDIO_CORS")) c.cors = (*v == "1" || to_lower(*v) == "true");
  if (auto v = env("STUDIO_MOCK_SEED")) c.mock.seed = parse_int_env("STUDIO_MOCK_SEED", *v);
  c.validate();
}

}  // namespace studio
