#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "studio/domain.hpp"

namespace studio {

enum class TemplateId {
  kDefinitionCheck,
  kAnalogyTriple,
  kNarrative,
  kStoryboardScenes,
  kChecklistExtract,
  kImagePrompt,
  kCaptionProbe,
};

inline constexpr TemplateId kAllTemplates[] = {
    TemplateId::kDefinitionCheck, TemplateId::kAnalogyTriple,
    TemplateId::kNarrative,       TemplateId::kStoryboardScenes,
    TemplateId::kChecklistExtract, TemplateId::kImagePrompt,
    TemplateId::kCaptionProbe};

std::string_view to_string(TemplateId id);
TemplateId parse_template_id(std::string_view s);

using Bindings = std::map<std::string, std::string>;

/// A preset prompt. Placeholders are written {name}; {{ and }} are literal
/// braces. Placeholders not listed as required render empty when unbound.
struct PromptTemplate {
  TemplateId id{};
  std::string version;
  std::string body;
  std::set<std::string> required_placeholders;
  json output_schema;  // null for image_prompt

  /// Every {name} placeholder mentioned in the body.
  std::set<std::string> placeholders() const;
  void validate() const;
};

void from_json(const json& j, PromptTemplate& t);
void to_json(json& j, const PromptTemplate& t);

struct ParsedResponse {
  TemplateId template_id{};
  json payload;
  std::string raw;
  int repair_attempts = 0;
};

/// Loaded set of templates. Immutable after construction.
class PromptLibrary {
 public:
  /// Loads every *.json file in `dir`; all seven templates must be present.
  static PromptLibrary load_dir(const std::filesystem::path& dir);
  explicit PromptLibrary(std::vector<PromptTemplate> templates);

  const PromptTemplate& get(TemplateId id) const;
  std::string render(TemplateId id, const Bindings& bindings) const;
  ParsedResponse parse(TemplateId id, std::string_view raw) const;
  std::map<std::string, std::string> versions() const;

 private:
  std::map<TemplateId, PromptTemplate> templates_;
};

/// Substitutes bindings into `body`; throws kValidation naming the first
/// required placeholder without a binding.
std::string render_body(const std::string& body,
                        const std::set<std::string>& required,
                        const Bindings& bindings, std::string_view template_name);

/// First schema violation as "path: reason", or nullopt when `value`
/// conforms. Supports the subset used by our templates: type, properties,
/// required, additionalProperties (bool), items, minItems, maxItems,
/// minLength, enum.
std::optional<std::string> schema_violation(const json& schema, const json& value);

/// The structured block inside a prose-wrapped response: the body of the
/// first ``` fence if any, else the first balanced {...} or [...] span.
std::optional<std::string> extract_structured_block(std::string_view raw);

// ---- typed decoding of parsed payloads ------------------------------------

DefinitionCheck decode_definition_check(const ParsedResponse& r, const Concept& c);

/// Analogy ids are derived from content (concept, position, title) so that
/// reruns with identical model output yield identical documents.
std::vector<Analogy> decode_analogies(const ParsedResponse& r, const Concept& c);
std::string decode_narrative(const ParsedResponse& r);

struct SceneDraft {
  std::string image_prompt;
  std::string description;
};
std::vector<SceneDraft> decode_scene_drafts(const ParsedResponse& r);
std::vector<ChecklistItem> decode_checklist_items(const ParsedResponse& r);
std::string decode_caption(const ParsedResponse& r);

/// Inverse of decode_analogies, used by fixtures and round-trip checks.
json encode_analogies(const std::vector<Analogy>& analogies);

// ---- analogy distinctness ---------------------------------------------------

inline constexpr double kMaxScenarioJaccard = 0.8;

/// |A ∩ B| / |A ∪ B| over the distinct normalized tokens of each text.
/// Two empty texts have similarity 1.
double token_jaccard(std::string_view a, std::string_view b);

struct QualityViolation {
  std::size_t first = 0;
  std::size_t second = 0;
  std::string reason;
  double jaccard = 0.0;
};

struct QualityReport {
  std::vector<QualityViolation> violations;
  bool pass() const { return violations.empty(); }
  std::string summary() const;
};

/// Distinctness: titles differ case-insensitively and every pair of
/// scenarios has token Jaccard below 0.8. Pure.
QualityReport analogy_quality_gate(const std::vector<Analogy>& triple);

}  // namespace studio
