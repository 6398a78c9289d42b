#include "studio/gateway.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <thread>

#include "studio/raster.hpp"
#include "studio/util.hpp"

namespace studio {

namespace {

constexpr std::pair<BackendKind, std::string_view> kKindNames[] = {
    {BackendKind::kLiveText, "live_text"},       {BackendKind::kLiveImage, "live_image"},
    {BackendKind::kLiveCaption, "live_caption"}, {BackendKind::kMockText, "mock_text"},
    {BackendKind::kMockImage, "mock_image"},     {BackendKind::kMockCaption, "mock_caption"},
};

constexpr char kSidecarMagic[] = "MOCKSCAR";

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<1024>& sem) : sem_(sem) { sem_.acquire(); }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<1024>& sem_;
};

template <typename T>
T config_value(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kConfig, std::string(key) + ": wrong type");
  }
}

bool contains_ci(const std::vector<std::string>& list, const std::string& item) {
  auto needle = to_lower(trim(item));
  return std::any_of(list.begin(), list.end(),
                     [&](const std::string& s) { return to_lower(trim(s)) == needle; });
}

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(sep, start);
    if (end == std::string_view::npos) end = text.size();
    auto piece = trim(text.substr(start, end - start));
    if (!piece.empty()) out.push_back(piece);
    start = end + 1;
  }
  return out;
}

// Text up to the next sentence end ('.' followed by space or end of text).
std::size_t sentence_end(const std::string& s, std::size_t from) {
  for (std::size_t i = from; i < s.size(); ++i) {
    if (s[i] == '.' && (i + 1 == s.size() || s[i + 1] == ' ' || s[i + 1] == '\n')) return i;
  }
  return s.size();
}

double unit_from_hash(std::string_view key) {
  return static_cast<double>(stable_hash64(key) >> 11) / static_cast<double>(1ULL << 53);
}

// ---- mock text ----------------------------------------------------------------

std::string prompt_line(const std::string& prompt, std::string_view label) {
  std::istringstream in(prompt);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(label, 0) == 0 && line.size() > label.size() && line[label.size()] == ':') {
      return trim(line.substr(label.size() + 1));
    }
  }
  return {};
}

struct SourceDomain {
  const char* title;
  const char* scenario;
  const char* parts[3];
};

constexpr SourceDomain kDomains[] = {
    {"A busy kitchen",
     "A cook in a busy kitchen follows a recipe step by step, carrying ingredients from "
     "the pantry to the stove and finally onto the plate.",
     {"recipe card", "pantry shelves", "hot stove"}},
    {"A city bus route",
     "A bus follows a fixed route through town, picking passengers up at each stop and "
     "dropping them off on a strict timetable.",
     {"city bus", "bus stops", "timetable board"}},
    {"A library",
     "A librarian files every new book on a labeled shelf so that any reader can later "
     "find it quickly through the catalog.",
     {"librarian", "labeled shelves", "card catalog"}},
    {"A vegetable garden",
     "A gardener plants seeds, waters them each morning, and guides the seedlings as they "
     "climb a wooden trellis.",
     {"seeds", "watering can", "wooden trellis"}},
    {"An orchestra",
     "A conductor keeps an orchestra in time while each section plays its own part of "
     "one shared score.",
     {"conductor", "orchestra sections", "musical score"}},
    {"A post office",
     "Letters arrive at a post office, are sorted by postcode into bins, and couriers "
     "carry them to the right doors.",
     {"letters", "sorting bins", "courier"}},
    {"A relay race",
     "Runners in a relay pass a baton from hand to hand, and the team finishes only when "
     "the last runner crosses the line.",
     {"relay runners", "baton", "finish line"}},
    {"A river dam",
     "A dam holds back a river; opening its gates lets water rush down and spin a mill "
     "wheel below.",
     {"dam", "river", "mill wheel"}},
    {"A construction site",
     "Builders follow an architect's plan, pouring the foundation first and stacking "
     "floors on top one at a time.",
     {"building plan", "foundation", "stacked floors"}},
    {"A chess match",
     "Two players move pieces across a board under fixed rules, and every move changes "
     "what the opponent can do next.",
     {"chess pieces", "chessboard", "rule book"}},
};

constexpr const char* kRoles[] = {"the core idea of", "applying",
                                  "the limits of"};

struct ParsedMapping {
  std::string concept_component;
  std::string analogy_component;
};

std::vector<ParsedMapping> parse_mappings_line(const std::string& line) {
  std::vector<ParsedMapping> out;
  for (const auto& pair : split_list(line, ';')) {
    auto arrow = pair.find("->");
    if (arrow == std::string::npos) continue;
    out.push_back({trim(pair.substr(0, arrow)), trim(pair.substr(arrow + 2))});
  }
  return out;
}

json procedural_definition(const std::string& concept_name, const std::string& subject) {
  std::string field = subject.empty() || subject == "other" ? "STEM" : subject;
  return {{"verdict", "valid"},
          {"definition", concept_name + " is a core idea in " + field +
                             " that describes how a set of parts relate and change "
                             "together, and learners use it to predict what happens next."},
          {"rationale", "Recognized as a teachable " + field + " concept."}};
}

json procedural_analogies(const std::string& concept_name, const std::string& key) {
  constexpr auto n = std::size(kDomains);
  std::vector<std::size_t> picked;
  for (int k = 0; picked.size() < 3; ++k) {
    auto idx = stable_hash64(key + "|domain|" + std::to_string(k)) % n;
    if (std::find(picked.begin(), picked.end(), idx) == picked.end()) picked.push_back(idx);
  }
  json list = json::array();
  for (auto idx : picked) {
    const auto& d = kDomains[idx];
    json mappings = json::array();
    for (int r = 0; r < 3; ++r) {
      mappings.push_back({{"concept_component", std::string(kRoles[r]) + " " + concept_name},
                          {"analogy_component", d.parts[r]}});
    }
    list.push_back({{"title", d.title}, {"scenario", d.scenario}, {"mappings", mappings}});
  }
  return {{"analogies", list}};
}

json procedural_narrative(const std::string& concept_name, const std::string& title,
                          const std::string& scenario,
                          const std::vector<ParsedMapping>& mappings) {
  std::string text = scenario.empty() ? "Picture " + title + "." : scenario;
  for (const auto& m : mappings) {
    text += " Here the " + m.analogy_component + " plays the part of " + m.concept_component + ".";
  }
  text += " Put together, the scene shows how " + concept_name + " works.";
  return {{"narrative", text}};
}

json procedural_scenes(const std::string& title, const std::vector<ParsedMapping>& mappings) {
  static constexpr const char* kBeats[4][2] = {
      {"the setting before anything happens", "The setting"},
      {"the first action getting things started", "The first step"},
      {"the process in full swing", "In full swing"},
      {"the outcome once everything settles", "The outcome"},
  };
  std::string parts;
  for (std::size_t i = 0; i < mappings.size(); ++i) {
    if (i) parts += i + 1 == mappings.size() ? " and " : ", ";
    parts += mappings[i].analogy_component;
  }
  if (parts.empty()) parts = "the main elements";
  json scenes = json::array();
  for (int k = 0; k < 4; ++k) {
    std::string focus = mappings.empty()
                            ? std::string("the scene")
                            : mappings[static_cast<std::size_t>(k) % mappings.size()].analogy_component;
    std::string meaning =
        mappings.empty()
            ? std::string("the concept")
            : mappings[static_cast<std::size_t>(k) % mappings.size()].concept_component;
    scenes.push_back(
        {{"image_prompt", std::string(title) + ", " + kBeats[k][0] + ": " + parts +
                              " in one clear picture, with the " + focus + " in the foreground."},
         {"description", std::string(kBeats[k][1]) + ": the " + focus + " stands for " + meaning + "."}});
  }
  return {{"scenes", scenes}};
}

json procedural_checklist(const std::vector<ParsedMapping>& mappings) {
  json items = json::array();
  for (const auto& m : mappings) {
    items.push_back({{"canonical", m.analogy_component},
                     {"aliases", json::array()},
                     {"criticality", "required"}});
  }
  return {{"items", items}};
}

}  // namespace

// ---- requests & config ----------------------------------------------------------

void TextRequest::validate() const {
  if (trim(prompt).empty()) throw Error(ErrorKind::kPrecondition, "text prompt must not be empty");
  if (max_tokens <= 0) throw Error(ErrorKind::kPrecondition, "max_tokens must be positive");
  if (temperature < 0.0 || temperature > 2.0) {
    throw Error(ErrorKind::kPrecondition, "temperature must lie in [0, 2]");
  }
}

void ImageRequest::validate() const {
  if (trim(prompt).empty()) throw Error(ErrorKind::kPrecondition, "image prompt must not be empty");
  auto allowed = [](int v) {
    return std::find(std::begin(kAllowedImageSides), std::end(kAllowedImageSides), v) !=
           std::end(kAllowedImageSides);
  };
  if (!allowed(width) || !allowed(height)) {
    throw Error(ErrorKind::kPrecondition, "image dimensions must be 512, 768 or 1024, got " +
                                              std::to_string(width) + "x" + std::to_string(height));
  }
}

std::string_view to_string(BackendKind k) {
  for (const auto& [kind, name] : kKindNames) {
    if (kind == k) return name;
  }
  return "?";
}

BackendKind parse_backend_kind(std::string_view s) {
  for (const auto& [kind, name] : kKindNames) {
    if (name == s) return kind;
  }
  throw Error(ErrorKind::kConfig, "kind: unknown backend kind '" + std::string(s) + "'");
}

BackendConfig backend_config(BackendKind kind) {
  BackendConfig c;
  c.kind = kind;
  return c;
}

bool BackendConfig::is_mock() const {
  return kind == BackendKind::kMockText || kind == BackendKind::kMockImage ||
         kind == BackendKind::kMockCaption;
}

void BackendConfig::validate() const {
  if (is_mock()) {
    if (endpoint || credential_ref) {
      throw Error(ErrorKind::kConfig, "endpoint: mock backends take no endpoint or credential_ref");
    }
  } else {
    if (!endpoint || endpoint->empty()) {
      throw Error(ErrorKind::kConfig, "endpoint: required for live backends");
    }
    if (!credential_ref || credential_ref->empty()) {
      throw Error(ErrorKind::kConfig, "credential_ref: required for live backends");
    }
  }
  if (timeout_ms <= 0) throw Error(ErrorKind::kConfig, "timeout_ms: must be positive");
  if (max_retries < 0) throw Error(ErrorKind::kConfig, "max_retries: must be >= 0");
  if (backoff_base_ms < 0) throw Error(ErrorKind::kConfig, "backoff_base_ms: must be >= 0");
  if (max_in_flight <= 0 || max_in_flight > 1024) {
    throw Error(ErrorKind::kConfig, "max_in_flight: must be in 1..1024");
  }
  if (batch_size <= 0) throw Error(ErrorKind::kConfig, "batch_size: must be positive");
}

void from_json(const json& j, BackendConfig& c) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "backend section must be an object");
  if (!j.contains("kind")) throw Error(ErrorKind::kConfig, "kind: missing");
  c.kind = parse_backend_kind(config_value<std::string>(j, "kind", ""));
  auto endpoint = config_value<std::string>(j, "endpoint", "");
  c.endpoint = endpoint.empty() ? std::nullopt : std::optional(endpoint);
  auto cred = config_value<std::string>(j, "credential_ref", "");
  c.credential_ref = cred.empty() ? std::nullopt : std::optional(cred);
  c.model = config_value<std::string>(j, "model", "");
  c.timeout_ms = config_value<int>(j, "timeout_ms", c.timeout_ms);
  c.max_retries = config_value<int>(j, "max_retries", c.max_retries);
  c.backoff_base_ms = config_value<int>(j, "backoff_base_ms", c.backoff_base_ms);
  c.max_in_flight = config_value<int>(j, "max_in_flight", c.max_in_flight);
  c.batch_size = config_value<int>(j, "batch_size", c.batch_size);
  c.validate();
}

void to_json(json& j, const BackendConfig& c) {
  j = json{{"kind", to_string(c.kind)},
           {"model", c.model},
           {"timeout_ms", c.timeout_ms},
           {"max_retries", c.max_retries},
           {"backoff_base_ms", c.backoff_base_ms},
           {"max_in_flight", c.max_in_flight},
           {"batch_size", c.batch_size}};
  if (c.endpoint) j["endpoint"] = *c.endpoint;
  if (c.credential_ref) j["credential_ref"] = *c.credential_ref;
}

void from_json(const json& j, MockConfig& c) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, "mock section must be an object");
  c.seed = config_value<std::int64_t>(j, "seed", c.seed);
  c.fixtures_path = config_value<std::string>(j, "fixtures_path", c.fixtures_path);
  c.drop_rate = config_value<double>(j, "drop_rate", c.drop_rate);
  c.always_omit = config_value<std::vector<std::string>>(j, "always_omit", c.always_omit);
  if (c.drop_rate < 0.0 || c.drop_rate > 1.0) {
    throw Error(ErrorKind::kConfig, "drop_rate: must lie in [0, 1]");
  }
}

void to_json(json& j, const MockConfig& c) {
  j = json{{"seed", c.seed},
           {"fixtures_path", c.fixtures_path},
           {"drop_rate", c.drop_rate},
           {"always_omit", c.always_omit}};
}

// ---- gateway ------------------------------------------------------------------

Gateway::Gateway(std::unique_ptr<TextBackend> text, RetryPolicy text_policy,
                 std::unique_ptr<ImageBackend> image, RetryPolicy image_policy,
                 std::unique_ptr<CaptionBackend> caption, RetryPolicy caption_policy,
                 Limits limits, bool mock)
    : text_(std::move(text)),
      image_(std::move(image)),
      caption_(std::move(caption)),
      text_policy_(text_policy),
      image_policy_(image_policy),
      caption_policy_(caption_policy),
      text_slots_(limits.text),
      image_slots_(limits.image),
      caption_slots_(limits.caption),
      mock_(mock),
      sleeper_([](int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); }) {}

std::unique_ptr<Gateway> Gateway::from_config(const BackendConfig& text,
                                              const BackendConfig& image,
                                              const BackendConfig& caption,
                                              const MockConfig& mock) {
  auto check_kind = [](const BackendConfig& c, BackendKind live, BackendKind fake,
                       const char* section) {
    if (c.kind != live && c.kind != fake) {
      throw Error(ErrorKind::kConfig, std::string("backends.") + section +
                                          ".kind: must be " + std::string(to_string(live)) +
                                          " or " + std::string(to_string(fake)));
    }
    c.validate();
  };
  check_kind(text, BackendKind::kLiveText, BackendKind::kMockText, "text");
  check_kind(image, BackendKind::kLiveImage, BackendKind::kMockImage, "image");
  check_kind(caption, BackendKind::kLiveCaption, BackendKind::kMockCaption, "caption");

  std::unique_ptr<TextBackend> t = text.is_mock()
                                       ? std::unique_ptr<TextBackend>(new MockTextBackend(mock))
                                       : make_live_text_backend(text);
  std::unique_ptr<ImageBackend> i = image.is_mock()
                                        ? std::unique_ptr<ImageBackend>(new MockImageBackend(mock))
                                        : make_live_image_backend(image);
  std::unique_ptr<CaptionBackend> c =
      caption.is_mock() ? std::unique_ptr<CaptionBackend>(new MockCaptionBackend())
                        : make_live_caption_backend(caption);
  bool all_mock = text.is_mock() && image.is_mock() && caption.is_mock();
  return std::make_unique<Gateway>(
      std::move(t), RetryPolicy{text.max_retries, text.backoff_base_ms}, std::move(i),
      RetryPolicy{image.max_retries, image.backoff_base_ms}, std::move(c),
      RetryPolicy{caption.max_retries, caption.backoff_base_ms},
      Limits{text.max_in_flight, image.max_in_flight, caption.max_in_flight}, all_mock);
}

std::unique_ptr<Gateway> Gateway::mock(const MockConfig& mock) {
  return from_config(backend_config(BackendKind::kMockText), backend_config(BackendKind::kMockImage),
                     backend_config(BackendKind::kMockCaption), mock);
}

std::string Gateway::complete_text(const TextRequest& req, CallStats* stats) {
  req.validate();
  SlotGuard slot(text_slots_);
  return with_retries(text_policy_, stats, [&] { return text_->complete(req); }, sleeper_);
}

ImageResult Gateway::generate_image(const ImageRequest& req, CallStats* stats) {
  req.validate();
  SlotGuard slot(image_slots_);
  return with_retries(image_policy_, stats, [&] { return image_->generate(req); }, sleeper_);
}

std::string Gateway::caption_image(std::span<const std::uint8_t> image,
                                   const std::string& instruction, CallStats* stats) {
  if (image.empty()) throw Error(ErrorKind::kValidation, "undecodable image: empty input");
  if (!looks_like_image(image)) {
    throw Error(ErrorKind::kValidation, "undecodable image: not PNG or JPEG data");
  }
  SlotGuard slot(caption_slots_);
  return with_retries(caption_policy_, stats,
                      [&] { return caption_->caption(image, instruction); }, sleeper_);
}

// ---- sidecar & prompt protocol --------------------------------------------------

void append_sidecar(std::vector<std::uint8_t>& image, const json& sidecar) {
  auto text = sidecar.dump();
  image.insert(image.end(), text.begin(), text.end());
  auto n = static_cast<std::uint32_t>(text.size());
  for (int shift = 24; shift >= 0; shift -= 8) {
    image.push_back(static_cast<std::uint8_t>((n >> shift) & 0xff));
  }
  image.insert(image.end(), kSidecarMagic, kSidecarMagic + 8);
}

std::optional<json> read_sidecar(std::span<const std::uint8_t> image) {
  if (image.size() < 12) return std::nullopt;
  auto tail = image.subspan(image.size() - 8);
  if (std::memcmp(tail.data(), kSidecarMagic, 8) != 0) return std::nullopt;
  auto len_bytes = image.subspan(image.size() - 12, 4);
  std::uint32_t n = 0;
  for (auto b : len_bytes) n = (n << 8) | b;
  if (n > image.size() - 12) return std::nullopt;
  auto body = image.subspan(image.size() - 12 - n, n);
  auto parsed = json::parse(body.begin(), body.end(), nullptr, false);
  if (parsed.is_discarded()) return std::nullopt;
  return parsed;
}

PromptComponents parse_prompt_components(const std::string& prompt) {
  PromptComponents out;
  const std::string must_lead = trim(kMustLead);
  const std::string list_lead = trim(kComponentsLead);

  std::string base;
  std::size_t pos = 0;
  while (true) {
    auto at = prompt.find(must_lead, pos);
    if (at == std::string::npos) {
      base += prompt.substr(pos);
      break;
    }
    auto start = at;
    if (start > 0 && prompt[start - 1] == ' ') --start;
    base += prompt.substr(pos, start - pos);
    auto value_start = at + must_lead.size();
    auto end = sentence_end(prompt, value_start);
    auto item = trim(prompt.substr(value_start, end - value_start));
    if (!item.empty() && !contains_ci(out.must, item)) out.must.push_back(item);
    pos = std::min(prompt.size(), end + 1);
  }
  out.base = base;

  if (auto at = base.find(list_lead); at != std::string::npos) {
    auto value_start = at + list_lead.size();
    auto end = sentence_end(base, value_start);
    for (auto& item : split_list(base.substr(value_start, end - value_start), ';')) {
      if (!contains_ci(out.listed, item)) out.listed.push_back(item);
    }
  }
  return out;
}

// ---- mock backends ----------------------------------------------------------------

MockTextBackend::MockTextBackend(MockConfig config) : config_(std::move(config)) {
  if (!config_.fixtures_path.empty()) {
    auto bytes = read_file(config_.fixtures_path);
    fixtures_ = json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (fixtures_.is_discarded() || !fixtures_.is_object()) {
      throw Error(ErrorKind::kConfig, "mock.fixtures_path: " + config_.fixtures_path +
                                          " is not a JSON object");
    }
  } else {
    fixtures_ = json::object();
  }
}

std::string MockTextBackend::complete(const TextRequest& req) {
  const auto seed = req.seed.value_or(config_.seed);
  const auto& prompt = req.prompt;
  const auto task = prompt_line(prompt, "Task");
  const auto concept_name = prompt_line(prompt, "Concept");
  const auto analogy = prompt_line(prompt, "Analogy");
  const bool keyed_by_concept = task == "definition_check" || task == "analogy_triple";
  const auto key = keyed_by_concept ? concept_name : analogy;

  if (auto t = fixtures_.find(task); t != fixtures_.end()) {
    if (auto hit = t->find(key); hit != t->end()) return hit->dump(2);
  }

  const auto hash_key = std::to_string(seed) + "|" + prompt;
  const auto mappings = parse_mappings_line(prompt_line(prompt, "Mappings"));
  json out;
  if (task == "definition_check") {
    out = procedural_definition(concept_name, prompt_line(prompt, "Subject"));
  } else if (task == "analogy_triple") {
    out = procedural_analogies(concept_name, hash_key);
  } else if (task == "narrative") {
    out = procedural_narrative(concept_name, analogy, prompt_line(prompt, "Scenario"), mappings);
  } else if (task == "storyboard_scenes") {
    out = procedural_scenes(analogy, mappings);
  } else if (task == "checklist_extract") {
    out = procedural_checklist(mappings);
  } else {
    throw AttemptError(AttemptError::Class::kRejected, 400,
                       "mock text backend does not know task '" + task + "'");
  }
  return out.dump(2);
}

MockImageBackend::MockImageBackend(MockConfig config) : config_(std::move(config)) {}

ImageResult MockImageBackend::generate(const ImageRequest& req) {
  const auto seed = req.seed.value_or(config_.seed);
  const auto comps = parse_prompt_components(req.prompt);

  std::vector<std::string> depicted;
  std::vector<std::string> omitted;
  for (const auto& c : comps.listed) {
    bool ordered = contains_ci(comps.must, c);
    bool dropped = !ordered && (contains_ci(config_.always_omit, c) ||
                                unit_from_hash(std::to_string(seed) + "|" + comps.base + "|" +
                                               to_lower(c)) < config_.drop_rate);
    (dropped ? omitted : depicted).push_back(c);
  }
  for (const auto& c : comps.must) {
    if (!contains_ci(depicted, c)) depicted.push_back(c);
  }

  const auto h = stable_hash64(std::to_string(seed) + "|" + req.prompt);
  Rgb bg{static_cast<std::uint8_t>(150 + (h & 0x3f)),
         static_cast<std::uint8_t>(150 + ((h >> 8) & 0x3f)),
         static_cast<std::uint8_t>(150 + ((h >> 16) & 0x3f))};
  Raster img(req.width, req.height, bg);
  const int scale = req.width >= 1024 ? 2 : 1;
  const int margin = 16 * scale;
  const int gw = glyph_width() * scale;
  const int gh = glyph_height() * scale;
  img.fill_rect(0, 0, req.width, gh + 2 * margin / 2 + 4, Rgb{40, 40, 48});
  img.draw_text(margin, margin / 2 + 2, "MOCK IMAGE  seed " + std::to_string(seed),
                Rgb{255, 255, 255}, scale);

  // One labeled box per depicted component, two per row.
  const int box_w = (req.width - 3 * margin) / 2;
  const int box_h = 3 * gh;
  int y = gh + 2 * margin;
  for (std::size_t i = 0; i < depicted.size(); ++i) {
    int col = static_cast<int>(i % 2);
    int x = margin + col * (box_w + margin);
    auto ch = stable_hash64(to_lower(depicted[i]));
    Rgb fill{static_cast<std::uint8_t>(60 + (ch & 0x7f)),
             static_cast<std::uint8_t>(60 + ((ch >> 8) & 0x7f)),
             static_cast<std::uint8_t>(60 + ((ch >> 16) & 0x7f))};
    img.fill_rect(x, y, box_w, box_h, fill);
    img.outline_rect(x, y, box_w, box_h, Rgb{20, 20, 20}, 2);
    auto label = wrap_text(depicted[i], static_cast<std::size_t>(std::max(4, (box_w - 8) / gw)));
    if (!label.empty()) img.draw_text(x + 6, y + gh, label.front(), Rgb{255, 255, 255}, scale);
    if (col == 1 || i + 1 == depicted.size()) y += box_h + margin / 2;
  }

  auto lines = wrap_text(comps.base, static_cast<std::size_t>((req.width - 2 * margin) / gw));
  int text_y = std::max(y + margin / 2, req.height / 2);
  for (const auto& line : lines) {
    if (text_y + gh > req.height - margin / 2) break;
    img.draw_text(margin, text_y, line, Rgb{20, 20, 28}, scale);
    text_y += gh + 2;
  }

  json sidecar{{"generator", "mock_image/1"},
               {"seed", seed},
               {"prompt_sha256", sha256_hex(req.prompt)},
               {"components", depicted},
               {"omitted", omitted}};
  ImageResult result{encode_png(img), "image/png", sidecar};
  append_sidecar(result.bytes, sidecar);
  return result;
}

std::string MockCaptionBackend::caption(std::span<const std::uint8_t> image,
                                        const std::string&) {
  std::string caption;
  if (auto sidecar = read_sidecar(image)) {
    const auto& comps = (*sidecar)["components"];
    for (std::size_t i = 0; i < comps.size(); ++i) {
      if (i) caption += "; ";
      caption += comps[i].get<std::string>();
    }
  }
  return json{{"caption", caption}}.dump();
}

}  // namespace studio
