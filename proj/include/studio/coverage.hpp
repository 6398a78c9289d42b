#pragma once

// Component coverage: which parts of an analogy a depiction must show,
// whether a probe text (scene description or image caption) mentions them,
// and a bounded regenerate-with-stronger-prompt loop for scene images.

#include <string>
#include <string_view>
#include <vector>

#include "studio/context.hpp"
#include "studio/domain.hpp"

namespace studio {

/// Lowercased phrase plus its singular/plural counterpart (last word only).
std::vector<std::string> alias_variants(std::string_view phrase);

/// One required item per mapping's analogy_component, merged with `extra`
/// by case-insensitive canonical name; aliases are normalized and widened
/// with singular/plural variants.
ComponentChecklist build_checklist(const Analogy& analogy, const std::vector<ChecklistItem>& extra);

/// build_checklist over the checklist_extract template's answer.
ComponentChecklist extract_checklist(const Concept& c, const Analogy& analogy,
                                     GenerationContext& ctx);

/// Pure. An item matches when its canonical name or an alias appears in
/// the normalized probe as a whole-token phrase.
CoverageReport verify_text(const ComponentChecklist& checklist, std::string_view probe,
                           ProbeSource source);

/// " Depict each of these components distinctly: a; b; c."
std::string components_clause(const ComponentChecklist& checklist);

/// Appends one MUST clause per missing required item not already present.
std::string repair_prompt(const std::string& image_prompt, const CoverageReport& report);

/// Highest ratio in the trail, latest on ties; null for an empty trail.
const CoverageAttempt* best_attempt(const std::vector<CoverageAttempt>& trail);

struct CoverageLoopResult {
  Scene scene;  // image = best attempt, coverage = full trail
  std::optional<std::string> aborted;  // set when a backend error cut the loop short
};

/// generate → caption → verify, repairing the prompt while required items
/// are missing and budget remains. Throws only if no attempt succeeded.
CoverageLoopResult coverage_loop(const Scene& scene, const ComponentChecklist& checklist,
                                 int budget, GenerationContext& ctx);

}  // namespace studio
