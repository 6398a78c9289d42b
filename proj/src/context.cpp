#include "studio/context.hpp"

namespace studio {

ParsedResponse ask(GenerationContext& ctx, TemplateId id, const Bindings& bindings) {
  TextRequest req;
  req.prompt = ctx.prompts.render(id, bindings);
  req.seed = ctx.seed;
  return ctx.prompts.parse(id, ctx.gateway.complete_text(req));
}

std::string format_mappings(const std::vector<Mapping>& mappings) {
  std::string out;
  for (const auto& m : mappings) {
    if (!out.empty()) out += "; ";
    out += m.concept_component + " -> " + m.analogy_component;
  }
  return out;
}

Bindings analogy_bindings(const Concept& c, const Analogy& a) {
  return {{"concept", c.name},
          {"subject", std::string(to_string(c.subject))},
          {"learner_level", c.learner_level ? std::string(to_string(*c.learner_level)) : ""},
          {"analogy_title", a.title},
          {"scenario", a.scenario},
          {"mappings", format_mappings(a.mappings)}};
}

}  // namespace studio
