#include <map>
#include <queue>

#include "doctest.h"
#include "studio/domain.hpp"
#include "studio/errors.hpp"
#include "support.hpp"

using namespace studio;
using S = SessionState;

namespace {

const S kAllStates[] = {S::kCreated,         S::kConceptValidated, S::kAnalogiesReady,
                        S::kAnalogyChosen,   S::kStoryboardReady,  S::kVideoReady,
                        S::kFailed};

// Independent edge table: the forward chain, any live state to Failed, and
// the three backtracking edges (re-pick analogy, rebuild storyboard, edit
// after video).
bool oracle_edge(S from, S to) {
  static const std::set<std::pair<S, S>> edges = {
      {S::kCreated, S::kConceptValidated},
      {S::kConceptValidated, S::kAnalogiesReady},
      {S::kAnalogiesReady, S::kAnalogyChosen},
      {S::kAnalogyChosen, S::kStoryboardReady},
      {S::kStoryboardReady, S::kVideoReady},
      {S::kAnalogyChosen, S::kAnalogiesReady},
      {S::kStoryboardReady, S::kAnalogyChosen},
      {S::kVideoReady, S::kStoryboardReady},
      {S::kStoryboardReady, S::kStoryboardReady},
  };
  if (from == S::kFailed) return false;
  if (to == S::kFailed) return true;
  return edges.count({from, to}) > 0;
}

PipelineSession sample_session() {
  return testing::fixture_json("session_video_ready.json").get<PipelineSession>();
}

}  // namespace

TEST_SUITE("domain") {

TEST_CASE("concept names are trimmed and bounded") {
  auto c = Concept::make("  Newton's First Law  ", Subject::kPhysics);
  CHECK(c.name == "Newton's First Law");
  CHECK(c.subject == Subject::kPhysics);
  CHECK_THROWS_AS(Concept::make(""), Error);
  CHECK_THROWS_AS(Concept::make("   \t"), Error);
  CHECK_NOTHROW(Concept::make(std::string(200, 'x')));
  try {
    Concept::make(std::string(201, 'x'));
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kValidation);
  }
}

TEST_CASE("concept subject defaults to other") {
  auto c = json::parse(R"({"name": "Entropy"})").get<Concept>();
  CHECK(c.subject == Subject::kOther);
  CHECK_FALSE(c.learner_level.has_value());
}

TEST_CASE("definition present exactly when the verdict is not not_a_concept") {
  auto c = Concept::make("x");
  CHECK_NOTHROW((DefinitionCheck{c, "d", Verdict::kValid, ""}).validate());
  CHECK_NOTHROW((DefinitionCheck{c, "", Verdict::kNotAConcept, "r"}).validate());
  CHECK_THROWS_AS((DefinitionCheck{c, "", Verdict::kValid, ""}).validate(), Error);
  CHECK_THROWS_AS((DefinitionCheck{c, "d", Verdict::kNotAConcept, ""}).validate(), Error);
}

TEST_CASE("enums serialize as lowercase snake case") {
  CHECK(to_string(S::kConceptValidated) == "concept_validated");
  CHECK(to_string(S::kVideoReady) == "video_ready");
  CHECK(to_string(Verdict::kNotAConcept) == "not_a_concept");
  CHECK(to_string(ProbeSource::kImageCaption) == "image_caption");
  for (S s : kAllStates) CHECK(parse_session_state(to_string(s)) == s);
  CHECK_THROWS_AS(parse_session_state("VideoReady"), Error);
}

TEST_CASE("transition table matches the oracle edge set") {
  for (S from : kAllStates) {
    for (S to : kAllStates) {
      CAPTURE(to_string(from));
      CAPTURE(to_string(to));
      CHECK(is_allowed_transition(from, to) == oracle_edge(from, to));
    }
  }
}

TEST_CASE("every state is reachable from created") {
  std::set<S> seen{S::kCreated};
  std::queue<S> q;
  q.push(S::kCreated);
  while (!q.empty()) {
    S s = q.front();
    q.pop();
    for (S t : kAllStates) {
      if (oracle_edge(s, t) && seen.insert(t).second) q.push(t);
    }
  }
  CHECK(reachable_states() == seen);
  CHECK(seen.size() == std::size(kAllStates));
}

TEST_CASE("session document round-trips") {
  auto doc = testing::fixture_json("session_video_ready.json");
  auto s = doc.get<PipelineSession>();
  CHECK(json(s) == doc);
  CHECK(json(s).get<PipelineSession>() == s);
  CHECK(invariant_violations(s).empty());
  CHECK(s.state == S::kVideoReady);
  CHECK(s.analogies->size() == 3);
  CHECK(s.storyboard->scenes.size() == 4);
}

TEST_CASE("session documents use the field names of the record") {
  auto doc = json(sample_session());
  for (const char* key : {"id", "state", "concept", "definition_check", "analogies",
                          "chosen_analogy_id", "storyboard", "video", "created_at", "updated_at",
                          "failure_reason"}) {
    CHECK_MESSAGE(doc.contains(key), key);
  }
  CHECK(doc["created_at"].get<std::string>().back() == 'Z');
}

TEST_CASE("invariant checker flags inconsistent sessions") {
  auto good = sample_session();

  auto s = good;
  s.video.reset();
  CHECK_FALSE(invariant_violations(s).empty());

  s = good;
  s.analogies->pop_back();
  CHECK_FALSE(invariant_violations(s).empty());

  s = good;
  (*s.analogies)[1].title = to_lower((*s.analogies)[0].title);
  CHECK_FALSE(invariant_violations(s).empty());

  s = good;
  s.storyboard->scenes.pop_back();
  CHECK_FALSE(invariant_violations(s).empty());

  s = good;
  s.chosen_analogy_id = "nope";
  CHECK_FALSE(invariant_violations(s).empty());

  s = good;
  s.state = S::kFailed;
  CHECK_FALSE(invariant_violations(s).empty());

  PipelineSession fresh;
  fresh.id = "x";
  fresh.concept_ = Concept::make("Entropy");
  CHECK(invariant_violations(fresh).empty());
}

TEST_CASE("scene with an image needs a coverage trail") {
  auto s = sample_session();
  s.storyboard->scenes[0].coverage.clear();
  CHECK_THROWS_AS(s.storyboard->validate(), Error);
}

TEST_CASE("checklists need a required item and distinct canonicals") {
  ComponentChecklist c{"a", {{"tube", {}, Criticality::kOptional}}};
  CHECK_THROWS_AS(c.validate(), Error);
  c.items.push_back({"tank", {}, Criticality::kRequired});
  CHECK_NOTHROW(c.validate());
  CHECK(c.required_count() == 1);
  c.items.push_back({"tank", {}, Criticality::kRequired});
  CHECK_THROWS_AS(c.validate(), Error);
}

}  // TEST_SUITE
