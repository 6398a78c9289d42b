#pragma once

#include <functional>
#include <optional>
#include <string>

#include "studio/context.hpp"
#include "studio/domain.hpp"

namespace studio {

/// (stage label, fraction of the build done)
using ProgressFn = std::function<void(const std::string&, double)>;

/// Narrative, then four scene drafts, then the checklist, then one coverage
/// loop per scene. Images of finished scenes stay in the store even when a
/// later scene fails.
Storyboard build_storyboard(const Concept& c, const Analogy& analogy, GenerationContext& ctx,
                            const ProgressFn& progress = {});

/// Pure edit. Changing the image prompt drops the scene's image and trail.
Storyboard edit_scene(Storyboard storyboard, int index,
                      const std::optional<std::string>& new_description,
                      const std::optional<std::string>& new_image_prompt);

/// Fresh coverage loop for one scene; returns the replacement scene.
Scene regenerate_scene_image(const Storyboard& storyboard, int index, GenerationContext& ctx);

/// Human-readable export: title, narrative and the four captioned images.
/// `image_link` maps a scene to the link target for its image.
std::string storyboard_markdown(const PipelineSession& session,
                                const std::function<std::string(const Scene&)>& image_link);

/// File extension (without dot) for a stored image's media type.
std::string image_extension(const std::string& media_type);

}  // namespace studio
