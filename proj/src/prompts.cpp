#include "studio/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "studio/errors.hpp"

namespace fs = std::filesystem;

namespace studio {

namespace {

constexpr std::pair<TemplateId, std::string_view> kTemplateNames[] = {
    {TemplateId::kDefinitionCheck, "definition_check"},
    {TemplateId::kAnalogyTriple, "analogy_triple"},
    {TemplateId::kNarrative, "narrative"},
    {TemplateId::kStoryboardScenes, "storyboard_scenes"},
    {TemplateId::kChecklistExtract, "checklist_extract"},
    {TemplateId::kImagePrompt, "image_prompt"},
    {TemplateId::kCaptionProbe, "caption_probe"},
};

bool is_ident_start(char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) {
  return is_ident_start(c) || std::isdigit(static_cast<unsigned char>(c));
}

// Calls on_placeholder(name) for each {name}, on_text(chunk) for literal text.
template <typename OnText, typename OnPlaceholder>
void scan_body(const std::string& body, OnText on_text, OnPlaceholder on_placeholder) {
  std::size_t i = 0;
  while (i < body.size()) {
    char c = body[i];
    if (c == '{' && i + 1 < body.size() && body[i + 1] == '{') {
      on_text(std::string_view("{"));
      i += 2;
      continue;
    }
    if (c == '}' && i + 1 < body.size() && body[i + 1] == '}') {
      on_text(std::string_view("}"));
      i += 2;
      continue;
    }
    if (c == '{' && i + 1 < body.size() && is_ident_start(body[i + 1])) {
      std::size_t j = i + 1;
      while (j < body.size() && is_ident_char(body[j])) ++j;
      if (j < body.size() && body[j] == '}') {
        on_placeholder(std::string_view(body).substr(i + 1, j - i - 1));
        i = j + 1;
        continue;
      }
    }
    on_text(std::string_view(body).substr(i, 1));
    ++i;
  }
}

std::string json_type_of(const json& v) {
  if (v.is_object()) return "object";
  if (v.is_array()) return "array";
  if (v.is_string()) return "string";
  if (v.is_boolean()) return "boolean";
  if (v.is_null()) return "null";
  if (v.is_number_integer() || v.is_number_unsigned()) return "integer";
  return "number";
}

bool type_matches(const std::string& want, const json& v) {
  auto have = json_type_of(v);
  if (want == have) return true;
  return want == "number" && have == "integer";
}

std::optional<std::string> violation_at(const json& schema, const json& v,
                                        const std::string& path) {
  if (!schema.is_object()) return std::nullopt;
  if (auto t = schema.find("type"); t != schema.end()) {
    if (!type_matches(t->get<std::string>(), v)) {
      return path + ": expected " + t->get<std::string>() + ", got " + json_type_of(v);
    }
  }
  if (auto e = schema.find("enum"); e != schema.end()) {
    if (std::find(e->begin(), e->end(), v) == e->end()) {
      return path + ": value " + v.dump() + " not in enum";
    }
  }
  if (v.is_string()) {
    if (auto m = schema.find("minLength"); m != schema.end()) {
      if (trim(v.get<std::string>()).size() < m->get<std::size_t>()) {
        return path + ": string shorter than " + std::to_string(m->get<std::size_t>());
      }
    }
  }
  if (v.is_object()) {
    if (auto req = schema.find("required"); req != schema.end()) {
      for (const auto& name : *req) {
        if (!v.contains(name.get<std::string>())) {
          return path + ": missing required property '" + name.get<std::string>() + "'";
        }
      }
    }
    auto props = schema.find("properties");
    if (props != schema.end()) {
      for (const auto& [name, sub] : props->items()) {
        if (auto it = v.find(name); it != v.end()) {
          if (auto bad = violation_at(sub, *it, path + "." + name)) return bad;
        }
      }
    }
    if (auto ap = schema.find("additionalProperties");
        ap != schema.end() && ap->is_boolean() && !ap->get<bool>()) {
      for (const auto& [name, _] : v.items()) {
        if (props == schema.end() || !props->contains(name)) {
          return path + ": unexpected property '" + name + "'";
        }
      }
    }
  }
  if (v.is_array()) {
    if (auto m = schema.find("minItems"); m != schema.end() && v.size() < m->get<std::size_t>()) {
      return path + ": fewer than " + std::to_string(m->get<std::size_t>()) + " items";
    }
    if (auto m = schema.find("maxItems"); m != schema.end() && v.size() > m->get<std::size_t>()) {
      return path + ": more than " + std::to_string(m->get<std::size_t>()) + " items";
    }
    if (auto items = schema.find("items"); items != schema.end()) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (auto bad = violation_at(*items, v[i], path + "[" + std::to_string(i) + "]")) {
          return bad;
        }
      }
    }
  }
  return std::nullopt;
}

std::optional<json> try_parse(std::string_view text) {
  auto parsed = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) return std::nullopt;
  return parsed;
}

std::set<std::string> token_set(std::string_view text) {
  auto tokens = tokenize(text);
  return {tokens.begin(), tokens.end()};
}

}  // namespace

std::string_view to_string(TemplateId id) {
  for (const auto& [t, name] : kTemplateNames) {
    if (t == id) return name;
  }
  return "?";
}

TemplateId parse_template_id(std::string_view s) {
  for (const auto& [t, name] : kTemplateNames) {
    if (name == s) return t;
  }
  throw Error(ErrorKind::kConfig, "unknown template id '" + std::string(s) + "'");
}

std::set<std::string> PromptTemplate::placeholders() const {
  std::set<std::string> out;
  scan_body(body, [](std::string_view) {},
            [&](std::string_view name) { out.emplace(name); });
  return out;
}

void PromptTemplate::validate() const {
  auto present = placeholders();
  for (const auto& name : required_placeholders) {
    if (!present.contains(name)) {
      throw Error(ErrorKind::kConfig, "template " + std::string(to_string(id)) +
                                          " requires placeholder '" + name +
                                          "' absent from its body");
    }
  }
  bool has_schema = output_schema.is_object() && !output_schema.empty();
  if (id != TemplateId::kImagePrompt && !has_schema) {
    throw Error(ErrorKind::kConfig,
                "template " + std::string(to_string(id)) + " lacks an output_schema");
  }
  if (version.empty()) {
    throw Error(ErrorKind::kConfig,
                "template " + std::string(to_string(id)) + " lacks a version");
  }
}

void from_json(const json& j, PromptTemplate& t) {
  try {
    t.id = parse_template_id(j.at("id").get<std::string>());
    t.version = j.at("version").get<std::string>();
    const auto& body = j.at("body");
    if (body.is_array()) {
      // Long bodies may be written as an array of lines.
      std::string joined;
      for (std::size_t i = 0; i < body.size(); ++i) {
        if (i) joined += '\n';
        joined += body[i].get<std::string>();
      }
      t.body = joined;
    } else {
      t.body = body.get<std::string>();
    }
    t.required_placeholders = j.at("required_placeholders").get<std::set<std::string>>();
    t.output_schema = j.value("output_schema", json(nullptr));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("malformed template: ") + e.what());
  }
}

void to_json(json& j, const PromptTemplate& t) {
  j = json{{"id", to_string(t.id)},
           {"version", t.version},
           {"body", t.body},
           {"required_placeholders", t.required_placeholders},
           {"output_schema", t.output_schema}};
}

PromptLibrary PromptLibrary::load_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw Error(ErrorKind::kConfig, "template directory " + dir.string() + " not found");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PromptTemplate> templates;
  for (const auto& f : files) {
    auto parsed = try_parse(to_string(read_file(f.string())));
    if (!parsed) throw Error(ErrorKind::kConfig, "template file " + f.string() + " is not JSON");
    templates.push_back(parsed->get<PromptTemplate>());
  }
  return PromptLibrary(std::move(templates));
}

PromptLibrary::PromptLibrary(std::vector<PromptTemplate> templates) {
  for (auto& t : templates) {
    t.validate();
    auto id = t.id;
    if (!templates_.emplace(id, std::move(t)).second) {
      throw Error(ErrorKind::kConfig, "duplicate template " + std::string(to_string(id)));
    }
  }
  for (auto id : kAllTemplates) {
    if (!templates_.contains(id)) {
      throw Error(ErrorKind::kConfig, "missing template " + std::string(to_string(id)));
    }
  }
}

const PromptTemplate& PromptLibrary::get(TemplateId id) const { return templates_.at(id); }

std::map<std::string, std::string> PromptLibrary::versions() const {
  std::map<std::string, std::string> out;
  for (const auto& [id, t] : templates_) out.emplace(to_string(id), t.version);
  return out;
}

std::string render_body(const std::string& body, const std::set<std::string>& required,
                        const Bindings& bindings, std::string_view template_name) {
  for (const auto& name : required) {
    if (!bindings.contains(name)) {
      throw Error(ErrorKind::kValidation, "missing placeholder '" + name +
                                              "' for template " +
                                              std::string(template_name));
    }
  }
  std::string out;
  out.reserve(body.size() + 256);
  scan_body(
      body, [&](std::string_view text) { out.append(text); },
      [&](std::string_view name) {
        if (auto it = bindings.find(std::string(name)); it != bindings.end()) {
          out.append(it->second);
        }
      });
  return out;
}

std::string PromptLibrary::render(TemplateId id, const Bindings& bindings) const {
  const auto& t = get(id);
  return render_body(t.body, t.required_placeholders, bindings, to_string(id));
}

std::optional<std::string> schema_violation(const json& schema, const json& value) {
  return violation_at(schema, value, "$");
}

std::optional<std::string> extract_structured_block(std::string_view raw) {
  if (auto fence = raw.find("```"); fence != std::string_view::npos) {
    auto start = raw.find('\n', fence);
    if (start != std::string_view::npos) {
      auto end = raw.find("```", start + 1);
      if (end != std::string_view::npos) {
        return trim(raw.substr(start + 1, end - start - 1));
      }
    }
  }
  auto open = raw.find_first_of("{[");
  if (open == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < raw.size(); ++i) {
    char c = raw[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{' || c == '[') ++depth;
    else if (c == '}' || c == ']') {
      if (--depth == 0) return std::string(raw.substr(open, i - open + 1));
    }
  }
  return std::nullopt;
}

ParsedResponse PromptLibrary::parse(TemplateId id, std::string_view raw) const {
  const auto& schema = get(id).output_schema;
  const std::string name(to_string(id));
  ParsedResponse out{id, json(nullptr), std::string(raw), 0};
  if (trim(raw).empty()) {
    throw Error(ErrorKind::kParse, name + ": empty response violates the schema");
  }
  std::string first_problem;
  if (auto direct = try_parse(raw)) {
    auto bad = schema_violation(schema, *direct);
    if (!bad) {
      out.payload = std::move(*direct);
      return out;
    }
    first_problem = *bad;
  } else {
    first_problem = "response is not a structured document";
  }
  out.repair_attempts = 1;
  auto block = extract_structured_block(raw);
  if (block) {
    if (auto repaired = try_parse(*block)) {
      auto bad = schema_violation(schema, *repaired);
      if (!bad) {
        out.payload = std::move(*repaired);
        return out;
      }
      first_problem = *bad;
    }
  }
  throw Error(ErrorKind::kParse,
              name + ": schema violation after repair (" + first_problem + ")");
}

DefinitionCheck decode_definition_check(const ParsedResponse& r, const Concept& c) {
  const auto& p = r.payload;
  DefinitionCheck check{c, trim(p.at("definition").get<std::string>()),
                        parse_verdict(p.at("verdict").get<std::string>()),
                        trim(p.value("rationale", std::string()))};
  check.validate();
  return check;
}

std::vector<Analogy> decode_analogies(const ParsedResponse& r, const Concept& c) {
  std::vector<Analogy> out;
  const auto& list = r.payload.at("analogies");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& a = list[i];
    Analogy analogy;
    analogy.title = trim(a.at("title").get<std::string>());
    analogy.scenario = trim(a.at("scenario").get<std::string>());
    for (const auto& m : a.at("mappings")) {
      analogy.mappings.push_back({trim(m.at("concept_component").get<std::string>()),
                                  trim(m.at("analogy_component").get<std::string>())});
    }
    analogy.id = sha256_hex("analogy|" + c.name + "|" + std::to_string(i) + "|" +
                            analogy.title)
                     .substr(0, 32);
    out.push_back(std::move(analogy));
  }
  return out;
}

json encode_analogies(const std::vector<Analogy>& analogies) {
  json list = json::array();
  for (const auto& a : analogies) {
    list.push_back({{"title", a.title}, {"scenario", a.scenario}, {"mappings", a.mappings}});
  }
  return json{{"analogies", list}};
}

std::string decode_narrative(const ParsedResponse& r) {
  return trim(r.payload.at("narrative").get<std::string>());
}

std::vector<SceneDraft> decode_scene_drafts(const ParsedResponse& r) {
  std::vector<SceneDraft> out;
  for (const auto& s : r.payload.at("scenes")) {
    out.push_back({trim(s.at("image_prompt").get<std::string>()),
                   trim(s.at("description").get<std::string>())});
  }
  return out;
}

std::vector<ChecklistItem> decode_checklist_items(const ParsedResponse& r) {
  std::vector<ChecklistItem> out;
  for (const auto& item : r.payload.at("items")) out.push_back(item.get<ChecklistItem>());
  return out;
}

std::string decode_caption(const ParsedResponse& r) {
  return r.payload.at("caption").get<std::string>();
}

double token_jaccard(std::string_view a, std::string_view b) {
  auto sa = token_set(a);
  auto sb = token_set(b);
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t shared = 0;
  for (const auto& t : sa) shared += sb.count(t);
  std::size_t uni = sa.size() + sb.size() - shared;
  return static_cast<double>(shared) / static_cast<double>(uni);
}

std::string QualityReport::summary() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    const auto& v = violations[i];
    if (i) out << "; ";
    out << "analogies " << v.first + 1 << " and " << v.second + 1 << ": " << v.reason;
  }
  return out.str();
}

QualityReport analogy_quality_gate(const std::vector<Analogy>& triple) {
  QualityReport report;
  if (triple.size() != kAnalogyCount) {
    report.violations.push_back(
        {0, 0, "expected 3 analogies, got " + std::to_string(triple.size()), 0.0});
  }
  for (std::size_t i = 0; i < triple.size(); ++i) {
    for (std::size_t k = i + 1; k < triple.size(); ++k) {
      if (titles_equal(triple[i].title, triple[k].title)) {
        report.violations.push_back({i, k, "identical titles '" + triple[i].title + "'", 0.0});
      }
      double jac = token_jaccard(triple[i].scenario, triple[k].scenario);
      if (jac >= kMaxScenarioJaccard) {
        std::ostringstream why;
        why << "scenario token overlap " << jac << " >= " << kMaxScenarioJaccard;
        report.violations.push_back({i, k, why.str(), jac});
      }
    }
  }
  return report;
}

}  // namespace studio
