#include <random>

#include "doctest.h"
#include "studio/prompts.hpp"
#include "support.hpp"

using namespace studio;

namespace {

const PromptLibrary& lib() { return *testing::prompts(); }

Analogy analogy(std::string title, std::string scenario) {
  return Analogy{"", std::move(title), std::move(scenario), {{"a", "b"}}};
}

std::string words(int from, int to, const std::string& prefix = "w") {
  std::string out;
  for (int i = from; i <= to; ++i) out += prefix + std::to_string(i) + " ";
  return out;
}

}  // namespace

TEST_SUITE("prompts") {

TEST_CASE("all seven templates load with versions and schemas") {
  auto versions = lib().versions();
  CHECK(versions.size() == 7);
  for (auto id : kAllTemplates) {
    const auto& t = lib().get(id);
    CHECK(!t.version.empty());
    for (const auto& name : t.required_placeholders) CHECK(t.placeholders().contains(name));
    if (id == TemplateId::kImagePrompt) {
      CHECK(t.output_schema.is_null());
    } else {
      CHECK(t.output_schema.is_object());
    }
  }
}

TEST_CASE("template missing from the directory is a config error") {
  testing::TempDir dir;
  for (const auto& e : std::filesystem::directory_iterator(testing::data_dir() / "templates")) {
    if (e.path().filename() != "narrative.json") {
      std::filesystem::copy_file(e.path(), dir.path() / e.path().filename());
    }
  }
  try {
    PromptLibrary::load_dir(dir.path());
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    CHECK(std::string(e.what()).find("narrative") != std::string::npos);
  }
}

TEST_CASE("template with a required placeholder absent from its body is rejected") {
  PromptTemplate t{TemplateId::kNarrative, "n/1", "Concept: {concept}", {"concept", "mappings"},
                   json{{"type", "object"}}};
  CHECK_THROWS_AS(t.validate(), Error);
  t.required_placeholders = {"concept"};
  CHECK_NOTHROW(t.validate());
  t.output_schema = nullptr;
  CHECK_THROWS_AS(t.validate(), Error);
}

TEST_CASE("image prompt renders the water scene verbatim") {
  auto bindings = testing::fixture_json("golden/image_prompt.bindings.json").get<Bindings>();
  CHECK(lib().render(TemplateId::kImagePrompt, bindings) ==
        testing::fixture_text("golden/image_prompt.rendered.txt"));
}

TEST_CASE("render names the missing placeholder") {
  try {
    lib().render(TemplateId::kDefinitionCheck, {{"subject", "physics"}});
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kValidation);
    CHECK(std::string(e.what()).find("'concept'") != std::string::npos);
  }
}

TEST_CASE("render is deterministic and ignores unknown bindings") {
  Bindings b{{"concept", "Entropy"}, {"subject", "physics"}, {"bogus", "zzz"}};
  auto a = lib().render(TemplateId::kDefinitionCheck, b);
  CHECK(a == lib().render(TemplateId::kDefinitionCheck, b));
  CHECK(a.find("zzz") == std::string::npos);
  CHECK(a.find("Concept: Entropy") != std::string::npos);
  CHECK(a.find("{\"verdict\"") != std::string::npos);
  CHECK(a.find("{learner_level}") == std::string::npos);
}

TEST_CASE("render substitutes braces literally") {
  CHECK(render_body("a {x} {{y}} }}", {"x"}, {{"x", "{z}"}}, "t") == "a {z} {y} }");
}

TEST_CASE("golden fixtures parse to their payloads") {
  auto index = testing::fixture_json("golden/index.json");
  std::set<std::string> covered;
  for (const auto& entry : index) {
    auto id = parse_template_id(entry.at("template").get<std::string>());
    auto raw = testing::fixture_text("golden/" + entry.at("raw").get<std::string>());
    auto expected = testing::fixture_json("golden/" + entry.at("payload").get<std::string>());
    CAPTURE(entry.at("raw").get<std::string>());
    auto parsed = lib().parse(id, raw);
    CHECK(parsed.payload == expected);
    CHECK(parsed.raw == raw);
    CHECK(parsed.template_id == id);
    CHECK(parsed.repair_attempts == entry.at("repair_attempts").get<int>());
    covered.insert(std::string(to_string(id)));
  }
  // image_prompt has no response schema; its golden pair is a render.
  covered.insert("image_prompt");
  CHECK(covered.size() == 7);
}

TEST_CASE("well-formed triple decodes to three analogies") {
  auto raw = testing::fixture_text("golden/analogy_triple.raw.txt");
  auto c = Concept::make("Newton's First Law", Subject::kPhysics);
  auto triple = decode_analogies(lib().parse(TemplateId::kAnalogyTriple, raw), c);
  REQUIRE(triple.size() == 3);
  CHECK(triple[0].title == "Skating on ice");
  CHECK(triple[1].title == "Pushing a stalled car");
  CHECK(triple[2].title == "The stationary soccer ball");
  CHECK(triple[0].id.size() == 32);
  CHECK(triple[0].id != triple[1].id);
  // ids depend on content only
  CHECK(decode_analogies(lib().parse(TemplateId::kAnalogyTriple, raw), c) == triple);
  CHECK(analogy_quality_gate(triple).pass());
}

TEST_CASE("object-oriented triple maps objects to bricks and classes to structures") {
  auto raw = testing::fixture_text("golden/analogy_triple_prose.raw.txt");
  auto triple = decode_analogies(lib().parse(TemplateId::kAnalogyTriple, raw),
                                 Concept::make("Object-Oriented Programming"));
  const auto& lego = triple.at(0);
  CHECK(lego.mappings.at(0) == Mapping{"objects", "Lego bricks"});
  CHECK(lego.mappings.at(1) == Mapping{"classes", "Lego structures"});
}

TEST_CASE("parse rejects empty and unrepairable responses") {
  for (std::string raw : {"", "   ", "no structure at all", "{\"analogies\": []}",
                          "```json\n{\"verdict\": \"maybe\"}\n```"}) {
    CAPTURE(raw);
    try {
      lib().parse(raw.find("verdict") != std::string::npos ? TemplateId::kDefinitionCheck
                                                           : TemplateId::kAnalogyTriple,
                  raw);
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kParse);
    }
  }
}

TEST_CASE("parse of serialize is identity on schema-valid payloads") {
  std::mt19937_64 rng(99);
  auto word = [&] {
    static const char* pool[] = {"tank", "tube", "flow", "level", "ice", "push", "\"quoted\"",
                                 "brick", "naïve", "line\nbreak"};
    return std::string(pool[rng() % std::size(pool)]);
  };
  for (int i = 0; i < 200; ++i) {
    json scenes = json::array();
    for (int k = 0; k < 4; ++k) {
      scenes.push_back({{"image_prompt", word() + " " + word()}, {"description", word()}});
    }
    json payload{{"scenes", scenes}};
    REQUIRE_FALSE(schema_violation(lib().get(TemplateId::kStoryboardScenes).output_schema, payload));
    auto parsed = lib().parse(TemplateId::kStoryboardScenes, payload.dump(i % 3 ? -1 : 2));
    CHECK(parsed.payload == payload);
    CHECK(parsed.repair_attempts == 0);
  }
}

TEST_CASE("schema checker reports the first violation with its path") {
  json schema = json::parse(R"({"type":"object","required":["a"],"additionalProperties":false,
    "properties":{"a":{"type":"array","minItems":1,"maxItems":2,"items":{"type":"string","minLength":2}},
                  "b":{"type":"string","enum":["x","y"]}}})");
  CHECK_FALSE(schema_violation(schema, json::parse(R"({"a":["xx"]})")));
  CHECK(schema_violation(schema, json::parse(R"({})")));
  CHECK(schema_violation(schema, json::parse(R"({"a":[]})")));
  CHECK(schema_violation(schema, json::parse(R"({"a":["xx","yy","zz"]})")));
  CHECK(schema_violation(schema, json::parse(R"({"a":["x"]})")));
  CHECK(schema_violation(schema, json::parse(R"({"a":["xx"],"b":"z"})")));
  CHECK(schema_violation(schema, json::parse(R"({"a":["xx"],"c":1})")));
  auto why = schema_violation(schema, json::parse(R"({"a":["xx", 3]})"));
  REQUIRE(why);
  CHECK(why->find("$.a[1]") != std::string::npos);
}

TEST_CASE("structured block extraction") {
  CHECK(extract_structured_block("text ```json\n{\"a\":1}\n``` more") == "{\"a\":1}");
  CHECK(extract_structured_block("Answer: {\"a\": {\"b\": \"}\"}} trailing") ==
        "{\"a\": {\"b\": \"}\"}}");
  CHECK(extract_structured_block("list [1, 2] end") == "[1, 2]");
  CHECK_FALSE(extract_structured_block("nothing here"));
}

TEST_CASE("token jaccard by hand") {
  // {a,b,c} vs {b,c,d}: 2 shared of 4 distinct
  CHECK(token_jaccard("a b c", "b c d") == doctest::Approx(0.5));
  CHECK(token_jaccard("", "") == 1.0);
  CHECK(token_jaccard("x", "") == 0.0);
  CHECK(token_jaccard("The Ice, the ice!", "ice THE") == 1.0);
  // ten tokens against nine of them plus one new: 9 / 11
  CHECK(token_jaccard(words(1, 10), words(1, 9) + " z1") == doctest::Approx(9.0 / 11.0));
}

TEST_CASE("quality gate passes the three skating, car and ball analogies") {
  auto raw = testing::fixture_text("golden/analogy_triple.raw.txt");
  auto triple = decode_analogies(lib().parse(TemplateId::kAnalogyTriple, raw), Concept::make("n"));
  auto report = analogy_quality_gate(triple);
  CHECK(report.pass());
  CHECK(report.summary().empty());
}

TEST_CASE("quality gate flags identical titles case-insensitively") {
  auto report = analogy_quality_gate({analogy("Skating on ice", "alpha beta"),
                                      analogy("skating ON ICE", "gamma delta"),
                                      analogy("Soccer", "epsilon zeta")});
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].first == 0);
  CHECK(report.violations[0].second == 1);
  CHECK_FALSE(report.summary().empty());
}

TEST_CASE("quality gate flags scenario overlap of 0.85") {
  // 17 shared tokens, 3 extra on one side: 17 / 20 = 0.85
  auto a = words(1, 17);
  auto b = words(1, 17) + "x1 x2 x3";
  REQUIRE(token_jaccard(a, b) == doctest::Approx(0.85));
  auto report = analogy_quality_gate(
      {analogy("One", a), analogy("Two", b), analogy("Three", words(1, 5, "q"))});
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].jaccard == doctest::Approx(0.85));
}

TEST_CASE("quality gate accepts overlap just under the bound") {
  // 15 shared, 4 extra on one side: 15 / 19 < 0.8
  auto report = analogy_quality_gate({analogy("One", words(1, 15)),
                                      analogy("Two", words(1, 15) + "x1 x2 x3 x4"),
                                      analogy("Three", "unrelated words")});
  CHECK(report.pass());
}

TEST_CASE("quality gate wants exactly three") {
  CHECK_FALSE(analogy_quality_gate({analogy("a", "x"), analogy("b", "y")}).pass());
}

TEST_CASE("encode_analogies inverts decode") {
  auto raw = testing::fixture_text("golden/analogy_triple.raw.txt");
  auto c = Concept::make("Newton's First Law");
  auto triple = decode_analogies(lib().parse(TemplateId::kAnalogyTriple, raw), c);
  auto again = decode_analogies(lib().parse(TemplateId::kAnalogyTriple, encode_analogies(triple).dump()), c);
  CHECK(again == triple);
}

}  // TEST_SUITE
