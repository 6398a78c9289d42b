#pragma once

// Domain records shared by every stage of the pipeline, plus their
// structured-document form. Enum values serialize as lowercase snake_case
// strings; timestamps as RFC 3339 UTC.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "studio/util.hpp"

namespace studio {

using json = nlohmann::json;

enum class Subject { kMath, kPhysics, kProgramming, kOther };
enum class LearnerLevel { kNovice, kIntermediate, kAdvanced };
enum class Verdict { kValid, kAmbiguous, kNotAConcept };
enum class Criticality { kRequired, kOptional };
enum class ProbeSource { kSceneDescription, kImageCaption };

enum class SessionState {
  kCreated,
  kConceptValidated,
  kAnalogiesReady,
  kAnalogyChosen,
  kStoryboardReady,
  kVideoReady,
  kFailed,
};

std::string_view to_string(Subject v);
std::string_view to_string(LearnerLevel v);
std::string_view to_string(Verdict v);
std::string_view to_string(Criticality v);
std::string_view to_string(ProbeSource v);
std::string_view to_string(SessionState v);

Subject parse_subject(std::string_view s);
LearnerLevel parse_learner_level(std::string_view s);
Verdict parse_verdict(std::string_view s);
Criticality parse_criticality(std::string_view s);
ProbeSource parse_probe_source(std::string_view s);
SessionState parse_session_state(std::string_view s);

inline constexpr std::size_t kMaxConceptName = 200;
inline constexpr std::size_t kAnalogyCount = 3;
inline constexpr std::size_t kSceneCount = 4;

struct Concept {
  std::string name;
  Subject subject = Subject::kOther;
  std::optional<LearnerLevel> learner_level;

  /// Trims the name and checks the 1–200 character bound.
  static Concept make(std::string_view name, Subject subject = Subject::kOther,
                      std::optional<LearnerLevel> level = std::nullopt);
  void validate() const;

  bool operator==(const Concept&) const = default;
};

struct DefinitionCheck {
  Concept concept_;
  std::string definition;
  Verdict verdict = Verdict::kValid;
  std::string rationale;

  void validate() const;
  bool operator==(const DefinitionCheck&) const = default;
};

struct Mapping {
  std::string concept_component;
  std::string analogy_component;
  bool operator==(const Mapping&) const = default;
};

struct Analogy {
  std::string id;
  std::string title;
  std::string scenario;
  std::vector<Mapping> mappings;
  bool operator==(const Analogy&) const = default;
};

/// Content-addressed reference to a stored blob.
struct BlobRef {
  std::string hash;  // SHA-256, lowercase hex
  std::string media_type;
  std::uint64_t byte_length = 0;
  bool operator==(const BlobRef&) const = default;
};

struct ChecklistItem {
  std::string canonical;
  std::vector<std::string> aliases;
  Criticality criticality = Criticality::kRequired;
  bool operator==(const ChecklistItem&) const = default;
};

struct ComponentChecklist {
  std::string analogy_id;
  std::vector<ChecklistItem> items;

  std::size_t required_count() const;
  void validate() const;
  bool operator==(const ComponentChecklist&) const = default;
};

struct CoverageReport {
  std::string checklist_ref;  // analogy id of the checklist probed
  ProbeSource probe_source = ProbeSource::kImageCaption;
  std::set<std::string> matched;
  std::set<std::string> missing_required;
  double coverage_ratio = 0.0;
  bool operator==(const CoverageReport&) const = default;
};

/// One generate→caption→verify round of the repair loop.
struct CoverageAttempt {
  int attempt = 0;
  std::string prompt;  // full prompt sent to the image backend
  BlobRef image;
  std::string caption;
  CoverageReport report;
  bool operator==(const CoverageAttempt&) const = default;
};

struct Scene {
  int index = 0;  // 1..4
  std::string image_prompt;
  std::string description;
  std::optional<BlobRef> image;
  std::vector<CoverageAttempt> coverage;  // empty means absent
  bool edited_by_user = false;
  bool operator==(const Scene&) const = default;
};

struct Storyboard {
  std::string analogy_id;
  std::string narrative;
  std::vector<Scene> scenes;
  ComponentChecklist checklist;
  std::map<std::string, std::string> template_versions;

  void validate() const;
  bool operator==(const Storyboard&) const = default;
};

struct PipelineSession {
  std::string id;
  SessionState state = SessionState::kCreated;
  Concept concept_;
  std::optional<DefinitionCheck> definition_check;
  std::optional<std::vector<Analogy>> analogies;
  std::optional<std::string> chosen_analogy_id;
  std::optional<Storyboard> storyboard;
  std::optional<BlobRef> video;
  Timestamp created_at{};
  Timestamp updated_at{};
  std::optional<std::string> failure_reason;

  const Analogy* chosen_analogy() const;
  bool operator==(const PipelineSession&) const = default;
};

/// Edges of the session state machine, including the backtracking edges.
bool is_allowed_transition(SessionState from, SessionState to);

/// States reachable from Created along allowed edges (all of them, today;
/// kept as a function so the property suite checks the edge table itself).
std::set<SessionState> reachable_states();

/// Every violated invariant, as human-readable lines. Empty means healthy.
std::vector<std::string> invariant_violations(const PipelineSession& s);

/// Case-insensitive title equality, the first half of analogy distinctness.
bool titles_equal(std::string_view a, std::string_view b);

void to_json(json& j, const Concept& v);
void from_json(const json& j, Concept& v);
void to_json(json& j, const DefinitionCheck& v);
void from_json(const json& j, DefinitionCheck& v);
void to_json(json& j, const Mapping& v);
void from_json(const json& j, Mapping& v);
void to_json(json& j, const Analogy& v);
void from_json(const json& j, Analogy& v);
void to_json(json& j, const BlobRef& v);
void from_json(const json& j, BlobRef& v);
void to_json(json& j, const ChecklistItem& v);
void from_json(const json& j, ChecklistItem& v);
void to_json(json& j, const ComponentChecklist& v);
void from_json(const json& j, ComponentChecklist& v);
void to_json(json& j, const CoverageReport& v);
void from_json(const json& j, CoverageReport& v);
void to_json(json& j, const CoverageAttempt& v);
void from_json(const json& j, CoverageAttempt& v);
void to_json(json& j, const Scene& v);
void from_json(const json& j, Scene& v);
void to_json(json& j, const Storyboard& v);
void from_json(const json& j, Storyboard& v);
void to_json(json& j, const PipelineSession& v);
void from_json(const json& j, PipelineSession& v);

}  // namespace studio
