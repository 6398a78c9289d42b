#include "studio/domain.hpp"

#include <algorithm>
#include <array>
#include <queue>
#include <utility>

#include "studio/errors.hpp"

namespace studio {

namespace {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<Subject, 4> kSubjects{{{Subject::kMath, "math"},
                                           {Subject::kPhysics, "physics"},
                                           {Subject::kProgramming, "programming"},
                                           {Subject::kOther, "other"}}};
constexpr NameTable<LearnerLevel, 3> kLevels{
    {{LearnerLevel::kNovice, "novice"},
     {LearnerLevel::kIntermediate, "intermediate"},
     {LearnerLevel::kAdvanced, "advanced"}}};
constexpr NameTable<Verdict, 3> kVerdicts{{{Verdict::kValid, "valid"},
                                           {Verdict::kAmbiguous, "ambiguous"},
                                           {Verdict::kNotAConcept, "not_a_concept"}}};
constexpr NameTable<Criticality, 2> kCriticalities{
    {{Criticality::kRequired, "required"}, {Criticality::kOptional, "optional"}}};
constexpr NameTable<ProbeSource, 2> kProbeSources{
    {{ProbeSource::kSceneDescription, "scene_description"},
     {ProbeSource::kImageCaption, "image_caption"}}};
constexpr NameTable<SessionState, 7> kStates{
    {{SessionState::kCreated, "created"},
     {SessionState::kConceptValidated, "concept_validated"},
     {SessionState::kAnalogiesReady, "analogies_ready"},
     {SessionState::kAnalogyChosen, "analogy_chosen"},
     {SessionState::kStoryboardReady, "storyboard_ready"},
     {SessionState::kVideoReady, "video_ready"},
     {SessionState::kFailed, "failed"}}};

template <typename E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E v) {
  for (const auto& [e, name] : table) {
    if (e == v) return name;
  }
  return "?";
}

template <typename E, std::size_t N>
E parse_name(const NameTable<E, N>& table, std::string_view s, const char* what) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  throw Error(ErrorKind::kValidation,
              std::string("unknown ") + what + " '" + std::string(s) + "'");
}

const json& field(const json& j, const char* name) {
  if (!j.is_object()) {
    throw Error(ErrorKind::kValidation,
                std::string("expected an object holding '") + name + "'");
  }
  auto it = j.find(name);
  if (it == j.end()) {
    throw Error(ErrorKind::kValidation, std::string("missing field '") + name + "'");
  }
  return *it;
}

std::string string_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) {
    throw Error(ErrorKind::kValidation, std::string("field '") + name + "' must be a string");
  }
  return v.get<std::string>();
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

int rank(SessionState s) {
  switch (s) {
    case SessionState::kCreated: return 0;
    case SessionState::kConceptValidated: return 1;
    case SessionState::kAnalogiesReady: return 2;
    case SessionState::kAnalogyChosen: return 3;
    case SessionState::kStoryboardReady: return 4;
    case SessionState::kVideoReady: return 5;
    case SessionState::kFailed: return -1;
  }
  return -1;
}

}  // namespace

std::string_view to_string(Subject v) { return name_of(kSubjects, v); }
std::string_view to_string(LearnerLevel v) { return name_of(kLevels, v); }
std::string_view to_string(Verdict v) { return name_of(kVerdicts, v); }
std::string_view to_string(Criticality v) { return name_of(kCriticalities, v); }
std::string_view to_string(ProbeSource v) { return name_of(kProbeSources, v); }
std::string_view to_string(SessionState v) { return name_of(kStates, v); }

Subject parse_subject(std::string_view s) { return parse_name(kSubjects, s, "subject"); }
LearnerLevel parse_learner_level(std::string_view s) {
  return parse_name(kLevels, s, "learner_level");
}
Verdict parse_verdict(std::string_view s) { return parse_name(kVerdicts, s, "verdict"); }
Criticality parse_criticality(std::string_view s) {
  return parse_name(kCriticalities, s, "criticality");
}
ProbeSource parse_probe_source(std::string_view s) {
  return parse_name(kProbeSources, s, "probe_source");
}
SessionState parse_session_state(std::string_view s) {
  return parse_name(kStates, s, "state");
}

Concept Concept::make(std::string_view name, Subject subject,
                      std::optional<LearnerLevel> level) {
  Concept c{trim(name), subject, level};
  c.validate();
  return c;
}

void Concept::validate() const {
  if (trim(name).empty()) {
    throw Error(ErrorKind::kValidation, "concept name must not be empty");
  }
  if (name.size() > kMaxConceptName) {
    throw Error(ErrorKind::kValidation, "concept name exceeds 200 characters");
  }
}

void DefinitionCheck::validate() const {
  bool has_definition = !trim(definition).empty();
  if (has_definition != (verdict != Verdict::kNotAConcept)) {
    throw Error(ErrorKind::kParse,
                "definition must be present exactly when the verdict is not "
                "not_a_concept");
  }
}

std::size_t ComponentChecklist::required_count() const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [](const ChecklistItem& i) {
        return i.criticality == Criticality::kRequired;
      }));
}

void ComponentChecklist::validate() const {
  if (required_count() == 0) {
    throw Error(ErrorKind::kValidation, "checklist needs at least one required item");
  }
  std::set<std::string> seen;
  for (const auto& item : items) {
    if (trim(item.canonical).empty()) {
      throw Error(ErrorKind::kValidation, "checklist item with empty canonical name");
    }
    if (!seen.insert(item.canonical).second) {
      throw Error(ErrorKind::kValidation,
                  "duplicate checklist item '" + item.canonical + "'");
    }
  }
}

void Storyboard::validate() const {
  if (scenes.size() != kSceneCount) {
    throw Error(ErrorKind::kStage, "storyboard must have exactly 4 scenes, got " +
                                       std::to_string(scenes.size()));
  }
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (scenes[i].index != static_cast<int>(i) + 1) {
      throw Error(ErrorKind::kStage, "scene indices must be 1..4 in order");
    }
    if (scenes[i].image && scenes[i].coverage.empty()) {
      throw Error(ErrorKind::kStage, "scene " + std::to_string(i + 1) +
                                         " has an image but no coverage trail");
    }
  }
}

const Analogy* PipelineSession::chosen_analogy() const {
  if (!analogies || !chosen_analogy_id) return nullptr;
  for (const auto& a : *analogies) {
    if (a.id == *chosen_analogy_id) return &a;
  }
  return nullptr;
}

bool is_allowed_transition(SessionState from, SessionState to) {
  using S = SessionState;
  if (from == S::kFailed) return false;
  if (to == S::kFailed) return true;
  switch (from) {
    case S::kCreated: return to == S::kConceptValidated;
    case S::kConceptValidated: return to == S::kAnalogiesReady;
    case S::kAnalogiesReady: return to == S::kAnalogyChosen;
    case S::kAnalogyChosen:
      return to == S::kStoryboardReady || to == S::kAnalogiesReady;
    case S::kStoryboardReady:
      return to == S::kVideoReady || to == S::kAnalogyChosen ||
             to == S::kStoryboardReady;
    case S::kVideoReady: return to == S::kStoryboardReady;
    case S::kFailed: return false;
  }
  return false;
}

std::set<SessionState> reachable_states() {
  std::set<SessionState> seen{SessionState::kCreated};
  std::queue<SessionState> frontier;
  frontier.push(SessionState::kCreated);
  while (!frontier.empty()) {
    auto s = frontier.front();
    frontier.pop();
    for (const auto& [next, name] : kStates) {
      if (is_allowed_transition(s, next) && seen.insert(next).second) {
        frontier.push(next);
      }
    }
  }
  return seen;
}

bool titles_equal(std::string_view a, std::string_view b) {
  return to_lower(trim(a)) == to_lower(trim(b));
}

std::vector<std::string> invariant_violations(const PipelineSession& s) {
  std::vector<std::string> out;
  auto expect = [&](bool ok, std::string what) {
    if (!ok) out.push_back(std::move(what));
  };
  const int r = rank(s.state);
  const bool failed = s.state == SessionState::kFailed;

  try {
    s.concept_.validate();
  } catch (const Error& e) {
    out.emplace_back(e.what());
  }

  expect(s.definition_check.has_value() == (failed || r >= 1),
         "definition_check presence does not match state");
  if (failed) {
    expect(s.failure_reason.has_value(), "failed session without failure_reason");
    expect(s.definition_check && s.definition_check->verdict == Verdict::kNotAConcept,
           "failed session must carry a not_a_concept verdict");
  } else {
    expect(!s.failure_reason.has_value(), "failure_reason set on a live session");
  }
  if (s.definition_check && !failed) {
    expect(s.definition_check->verdict != Verdict::kNotAConcept,
           "not_a_concept verdict on a live session");
  }

  expect(s.analogies.has_value() == (r >= 2), "analogies presence does not match state");
  if (s.analogies) {
    const auto& a = *s.analogies;
    expect(a.size() == kAnalogyCount, "analogies must number exactly 3");
    for (std::size_t i = 0; i < a.size(); ++i) {
      expect(!a[i].mappings.empty(), "analogy '" + a[i].title + "' has no mappings");
      for (std::size_t k = i + 1; k < a.size(); ++k) {
        expect(!titles_equal(a[i].title, a[k].title),
               "duplicate analogy title '" + a[i].title + "'");
      }
    }
  }

  expect(s.chosen_analogy_id.has_value() == (r >= 3),
         "chosen_analogy_id presence does not match state");
  if (s.chosen_analogy_id) {
    expect(s.chosen_analogy() != nullptr, "chosen_analogy_id not among analogies");
  }

  expect(s.storyboard.has_value() == (r >= 4), "storyboard presence does not match state");
  if (s.storyboard) {
    try {
      s.storyboard->validate();
    } catch (const Error& e) {
      out.emplace_back(e.what());
    }
    expect(s.chosen_analogy_id && s.storyboard->analogy_id == *s.chosen_analogy_id,
           "storyboard belongs to a different analogy");
  }

  expect(s.video.has_value() == (r == 5), "video presence does not match state");
  if (s.video && s.storyboard) {
    for (const auto& scene : s.storyboard->scenes) {
      expect(scene.image.has_value(), "video present while a scene lacks its image");
    }
  }
  return out;
}

// ---- serialization ----------------------------------------------------------

void to_json(json& j, const Concept& v) {
  j = json{{"name", v.name}, {"subject", to_string(v.subject)}};
  j["learner_level"] =
      v.learner_level ? json(to_string(*v.learner_level)) : json(nullptr);
}

void from_json(const json& j, Concept& v) {
  v.name = string_field(j, "name");
  auto it = j.find("subject");
  v.subject = (it == j.end() || it->is_null()) ? Subject::kOther
                                               : parse_subject(it->get<std::string>());
  auto lv = optional_field<std::string>(j, "learner_level");
  v.learner_level = lv ? std::optional(parse_learner_level(*lv)) : std::nullopt;
}

void to_json(json& j, const DefinitionCheck& v) {
  j = json{{"concept", v.concept_},
           {"definition", v.definition},
           {"verdict", to_string(v.verdict)},
           {"rationale", v.rationale}};
}

void from_json(const json& j, DefinitionCheck& v) {
  v.concept_ = field(j, "concept").get<Concept>();
  v.definition = string_field(j, "definition");
  v.verdict = parse_verdict(string_field(j, "verdict"));
  v.rationale = string_field(j, "rationale");
}

void to_json(json& j, const Mapping& v) {
  j = json{{"concept_component", v.concept_component},
           {"analogy_component", v.analogy_component}};
}

void from_json(const json& j, Mapping& v) {
  v.concept_component = string_field(j, "concept_component");
  v.analogy_component = string_field(j, "analogy_component");
}

void to_json(json& j, const Analogy& v) {
  j = json{{"id", v.id},
           {"title", v.title},
           {"scenario", v.scenario},
           {"mappings", v.mappings}};
}

void from_json(const json& j, Analogy& v) {
  v.id = string_field(j, "id");
  v.title = string_field(j, "title");
  v.scenario = string_field(j, "scenario");
  v.mappings = field(j, "mappings").get<std::vector<Mapping>>();
}

void to_json(json& j, const BlobRef& v) {
  j = json{{"hash", v.hash}, {"media_type", v.media_type}, {"byte_length", v.byte_length}};
}

void from_json(const json& j, BlobRef& v) {
  v.hash = string_field(j, "hash");
  v.media_type = string_field(j, "media_type");
  v.byte_length = field(j, "byte_length").get<std::uint64_t>();
}

void to_json(json& j, const ChecklistItem& v) {
  j = json{{"canonical", v.canonical},
           {"aliases", v.aliases},
           {"criticality", to_string(v.criticality)}};
}

void from_json(const json& j, ChecklistItem& v) {
  v.canonical = string_field(j, "canonical");
  auto it = j.find("aliases");
  v.aliases = (it == j.end() || it->is_null()) ? std::vector<std::string>{}
                                               : it->get<std::vector<std::string>>();
  auto crit = optional_field<std::string>(j, "criticality");
  v.criticality = crit ? parse_criticality(*crit) : Criticality::kRequired;
}

void to_json(json& j, const ComponentChecklist& v) {
  j = json{{"analogy_id", v.analogy_id}, {"items", v.items}};
}

void from_json(const json& j, ComponentChecklist& v) {
  v.analogy_id = string_field(j, "analogy_id");
  v.items = field(j, "items").get<std::vector<ChecklistItem>>();
}

void to_json(json& j, const CoverageReport& v) {
  j = json{{"checklist_ref", v.checklist_ref},
           {"probe_source", to_string(v.probe_source)},
           {"matched", v.matched},
           {"missing_required", v.missing_required},
           {"coverage_ratio", v.coverage_ratio}};
}

void from_json(const json& j, CoverageReport& v) {
  v.checklist_ref = string_field(j, "checklist_ref");
  v.probe_source = parse_probe_source(string_field(j, "probe_source"));
  v.matched = field(j, "matched").get<std::set<std::string>>();
  v.missing_required = field(j, "missing_required").get<std::set<std::string>>();
  v.coverage_ratio = field(j, "coverage_ratio").get<double>();
}

void to_json(json& j, const CoverageAttempt& v) {
  j = json{{"attempt", v.attempt},
           {"prompt", v.prompt},
           {"image", v.image},
           {"caption", v.caption},
           {"report", v.report}};
}

void from_json(const json& j, CoverageAttempt& v) {
  v.attempt = field(j, "attempt").get<int>();
  v.prompt = string_field(j, "prompt");
  v.image = field(j, "image").get<BlobRef>();
  v.caption = string_field(j, "caption");
  v.report = field(j, "report").get<CoverageReport>();
}

void to_json(json& j, const Scene& v) {
  j = json{{"index", v.index},
           {"image_prompt", v.image_prompt},
           {"description", v.description},
           {"image", optional_json(v.image)},
           {"coverage", v.coverage.empty() ? json(nullptr) : json(v.coverage)},
           {"edited_by_user", v.edited_by_user}};
}

void from_json(const json& j, Scene& v) {
  v.index = field(j, "index").get<int>();
  v.image_prompt = string_field(j, "image_prompt");
  v.description = string_field(j, "description");
  v.image = optional_field<BlobRef>(j, "image");
  v.coverage = optional_field<std::vector<CoverageAttempt>>(j, "coverage")
                   .value_or(std::vector<CoverageAttempt>{});
  v.edited_by_user = j.value("edited_by_user", false);
}

void to_json(json& j, const Storyboard& v) {
  j = json{{"analogy_id", v.analogy_id},
           {"narrative", v.narrative},
           {"scenes", v.scenes},
           {"checklist", v.checklist},
           {"template_versions", v.template_versions}};
}

void from_json(const json& j, Storyboard& v) {
  v.analogy_id = string_field(j, "analogy_id");
  v.narrative = string_field(j, "narrative");
  v.scenes = field(j, "scenes").get<std::vector<Scene>>();
  v.checklist = field(j, "checklist").get<ComponentChecklist>();
  v.template_versions =
      j.value("template_versions", std::map<std::string, std::string>{});
}

void to_json(json& j, const PipelineSession& v) {
  j = json{{"id", v.id},
           {"state", to_string(v.state)},
           {"concept", v.concept_},
           {"definition_check", optional_json(v.definition_check)},
           {"analogies", optional_json(v.analogies)},
           {"chosen_analogy_id", optional_json(v.chosen_analogy_id)},
           {"storyboard", optional_json(v.storyboard)},
           {"video", optional_json(v.video)},
           {"created_at", format_rfc3339(v.created_at)},
           {"updated_at", format_rfc3339(v.updated_at)},
           {"failure_reason", optional_json(v.failure_reason)}};
}

void from_json(const json& j, PipelineSession& v) {
  v.id = string_field(j, "id");
  v.state = parse_session_state(string_field(j, "state"));
  v.concept_ = field(j, "concept").get<Concept>();
  v.definition_check = optional_field<DefinitionCheck>(j, "definition_check");
  v.analogies = optional_field<std::vector<Analogy>>(j, "analogies");
  v.chosen_analogy_id = optional_field<std::string>(j, "chosen_analogy_id");
  v.storyboard = optional_field<Storyboard>(j, "storyboard");
  v.video = optional_field<BlobRef>(j, "video");
  v.created_at = parse_rfc3339(string_field(j, "created_at"));
  v.updated_at = parse_rfc3339(string_field(j, "updated_at"));
  v.failure_reason = optional_field<std::string>(j, "failure_reason");
}

}  // namespace studio
