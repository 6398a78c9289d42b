#pragma once

#include <cstdint>
#include <optional>

#include "studio/gateway.hpp"
#include "studio/prompts.hpp"
#include "studio/store.hpp"

namespace studio {

/// What a generation stage needs: models, templates, somewhere to put
/// bytes, and the knobs shared by every call.
struct GenerationContext {
  Gateway& gateway;
  const PromptLibrary& prompts;
  Store& store;
  std::optional<std::int64_t> seed;
  int image_width = 512;
  int image_height = 512;
  int coverage_budget = 2;
};

/// Renders `id`, sends it to the text backend and parses the reply.
ParsedResponse ask(GenerationContext& ctx, TemplateId id, const Bindings& bindings);

/// Bindings shared by every analogy-level template.
Bindings analogy_bindings(const Concept& c, const Analogy& a);

/// "concept part -> analogy part; ..." as fed to the templates.
std::string format_mappings(const std::vector<Mapping>& mappings);

}  // namespace studio
