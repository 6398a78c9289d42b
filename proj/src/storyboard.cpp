#include "studio/storyboard.hpp"

#include <sstream>

#include "studio/coverage.hpp"

namespace studio {

namespace {

Scene& scene_at(Storyboard& sb, int index) {
  if (index < 1 || index > static_cast<int>(kSceneCount) ||
      static_cast<std::size_t>(index) > sb.scenes.size()) {
    throw Error(ErrorKind::kValidation,
                "scene index must be between 1 and 4, got " + std::to_string(index));
  }
  return sb.scenes[static_cast<std::size_t>(index - 1)];
}

}  // namespace

Storyboard build_storyboard(const Concept& c, const Analogy& analogy, GenerationContext& ctx,
                            const ProgressFn& progress) {
  auto report = [&](const std::string& stage, double f) {
    if (progress) progress(stage, f);
  };
  if (analogy.mappings.empty()) {
    throw Error(ErrorKind::kPrecondition, "analogy '" + analogy.title + "' has no mappings");
  }
  Storyboard sb;
  sb.analogy_id = analogy.id;
  sb.template_versions = ctx.prompts.versions();

  report("narrative", 0.05);
  auto bindings = analogy_bindings(c, analogy);
  sb.narrative = decode_narrative(ask(ctx, TemplateId::kNarrative, bindings));

  report("scenes", 0.15);
  bindings["narrative"] = sb.narrative;
  auto drafts = decode_scene_drafts(ask(ctx, TemplateId::kStoryboardScenes, bindings));
  if (drafts.size() != kSceneCount) {
    throw Error(ErrorKind::kStage, "storyboard_scenes returned " + std::to_string(drafts.size()) +
                                       " scenes; exactly 4 are required");
  }

  report("checklist", 0.25);
  sb.checklist = extract_checklist(c, analogy, ctx);

  for (std::size_t i = 0; i < drafts.size(); ++i) {
    report("scene " + std::to_string(i + 1) + " image", 0.3 + 0.175 * static_cast<double>(i));
    Scene draft;
    draft.index = static_cast<int>(i) + 1;
    draft.image_prompt = drafts[i].image_prompt;
    draft.description = drafts[i].description;
    sb.scenes.push_back(coverage_loop(draft, sb.checklist, ctx.coverage_budget, ctx).scene);
  }
  sb.validate();
  report("storyboard ready", 1.0);
  return sb;
}

Storyboard edit_scene(Storyboard storyboard, int index,
                      const std::optional<std::string>& new_description,
                      const std::optional<std::string>& new_image_prompt) {
  auto& scene = scene_at(storyboard, index);
  if (!new_description && !new_image_prompt) {
    throw Error(ErrorKind::kValidation, "edit must supply a description or an image prompt");
  }
  if (new_image_prompt && trim(*new_image_prompt).empty()) {
    throw Error(ErrorKind::kValidation, "image prompt must not be empty");
  }
  if (new_description && trim(*new_description).empty()) {
    throw Error(ErrorKind::kValidation, "description must not be empty");
  }
  bool description_changed = new_description && trim(*new_description) != scene.description;
  bool prompt_changed = new_image_prompt && trim(*new_image_prompt) != scene.image_prompt;
  if (!description_changed && !prompt_changed) {
    throw Error(ErrorKind::kValidation, "edit changes nothing on scene " + std::to_string(index));
  }
  if (description_changed) scene.description = trim(*new_description);
  if (prompt_changed) {
    scene.image_prompt = trim(*new_image_prompt);
    scene.image.reset();
    scene.coverage.clear();
  }
  scene.edited_by_user = true;
  return storyboard;
}

Scene regenerate_scene_image(const Storyboard& storyboard, int index, GenerationContext& ctx) {
  auto copy = storyboard;
  const auto& scene = scene_at(copy, index);
  if (trim(scene.image_prompt).empty()) {
    throw Error(ErrorKind::kPrecondition,
                "scene " + std::to_string(index) + " has no image prompt to regenerate from");
  }
  return coverage_loop(scene, storyboard.checklist, ctx.coverage_budget, ctx).scene;
}

std::string image_extension(const std::string& media_type) {
  if (media_type == "image/png") return "png";
  if (media_type == "image/jpeg") return "jpg";
  return "bin";
}

std::string storyboard_markdown(const PipelineSession& session,
                                const std::function<std::string(const Scene&)>& image_link) {
  if (!session.storyboard) {
    throw Error(ErrorKind::kPrecondition, "session " + session.id + " has no storyboard yet");
  }
  const auto& sb = *session.storyboard;
  const auto* analogy = session.chosen_analogy();
  std::ostringstream out;
  out << "# " << (analogy ? analogy->title : std::string("Storyboard")) << "\n\n";
  out << "**Concept:** " << session.concept_.name << " (" << to_string(session.concept_.subject)
      << ")\n\n";
  if (session.definition_check && !session.definition_check->definition.empty()) {
    out << "**Definition:** " << session.definition_check->definition << "\n\n";
  }
  if (analogy) {
    out << "**Correspondences:**\n\n";
    for (const auto& m : analogy->mappings) {
      out << "- " << m.concept_component << " → " << m.analogy_component << "\n";
    }
    out << "\n";
  }
  out << "## Narrative\n\n" << sb.narrative << "\n\n## Storyboard\n";
  for (const auto& scene : sb.scenes) {
    out << "\n### Scene " << scene.index << "\n\n";
    if (scene.image) {
      out << "![Scene " << scene.index << "](" << image_link(scene) << ")\n\n";
    } else {
      out << "_(image pending regeneration)_\n\n";
    }
    out << scene.description << "\n";
  }
  return out.str();
}

}  // namespace studio
