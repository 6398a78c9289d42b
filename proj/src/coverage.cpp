#include "studio/coverage.hpp"

#include <algorithm>

#include "studio/util.hpp"

namespace studio {

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_vowel(char c) { return std::string_view("aeiou").find(c) != std::string_view::npos; }

// Best-effort English number flip of a single word.
std::string flip_number(const std::string& w) {
  if (w.size() < 3) return w + "s";
  if (ends_with(w, "ies")) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "ches") || ends_with(w, "shes") || ends_with(w, "xes") ||
      ends_with(w, "sses")) {
    return w.substr(0, w.size() - 2);
  }
  if (ends_with(w, "ss") || ends_with(w, "us") || ends_with(w, "is")) return w + "es";
  if (w.back() == 's') return w.substr(0, w.size() - 1);
  if (w.back() == 'y' && !is_vowel(w[w.size() - 2])) return w.substr(0, w.size() - 1) + "ies";
  if (ends_with(w, "ch") || ends_with(w, "sh") || w.back() == 'x') return w + "es";
  return w + "s";
}

void add_unique(std::vector<std::string>& list, std::string value) {
  if (value.empty()) return;
  if (std::find(list.begin(), list.end(), value) == list.end()) list.push_back(std::move(value));
}

bool contains_phrase(const std::string& padded_probe, const std::string& phrase) {
  auto norm = normalize_text(phrase);
  if (norm.empty()) return false;
  return padded_probe.find(" " + norm + " ") != std::string::npos;
}

}  // namespace

std::vector<std::string> alias_variants(std::string_view phrase) {
  auto lower = to_lower(trim(phrase));
  std::vector<std::string> out;
  if (lower.empty()) return out;
  out.push_back(lower);
  auto cut = lower.find_last_of(' ');
  auto head = cut == std::string::npos ? std::string() : lower.substr(0, cut + 1);
  auto last = cut == std::string::npos ? lower : lower.substr(cut + 1);
  bool alpha = !last.empty() && std::all_of(last.begin(), last.end(), [](unsigned char c) {
    return std::isalpha(c);
  });
  if (alpha) add_unique(out, head + flip_number(last));
  return out;
}

ComponentChecklist build_checklist(const Analogy& analogy, const std::vector<ChecklistItem>& extra) {
  ComponentChecklist out{analogy.id, {}};
  auto find = [&](const std::string& canonical) -> ChecklistItem* {
    for (auto& item : out.items) {
      if (to_lower(item.canonical) == to_lower(canonical)) return &item;
    }
    return nullptr;
  };
  for (const auto& m : analogy.mappings) {
    auto canonical = trim(m.analogy_component);
    if (canonical.empty() || find(canonical)) continue;
    out.items.push_back({canonical, {}, Criticality::kRequired});
  }
  for (const auto& item : extra) {
    auto canonical = trim(item.canonical);
    if (canonical.empty()) continue;
    if (auto* existing = find(canonical)) {
      existing->aliases.insert(existing->aliases.end(), item.aliases.begin(), item.aliases.end());
      if (item.criticality == Criticality::kRequired) existing->criticality = Criticality::kRequired;
    } else {
      out.items.push_back({canonical, item.aliases, item.criticality});
    }
  }
  for (auto& item : out.items) {
    std::vector<std::string> aliases;
    auto self = to_lower(item.canonical);
    auto widen = [&](const std::string& phrase) {
      for (auto& v : alias_variants(phrase)) {
        if (v != self) add_unique(aliases, std::move(v));
      }
    };
    widen(item.canonical);
    for (const auto& a : item.aliases) widen(a);
    item.aliases = std::move(aliases);
  }
  out.validate();
  return out;
}

ComponentChecklist extract_checklist(const Concept& c, const Analogy& analogy,
                                     GenerationContext& ctx) {
  if (analogy.mappings.empty()) {
    throw Error(ErrorKind::kPrecondition, "analogy '" + analogy.title + "' has no mappings");
  }
  auto parsed = ask(ctx, TemplateId::kChecklistExtract, analogy_bindings(c, analogy));
  return build_checklist(analogy, decode_checklist_items(parsed));
}

CoverageReport verify_text(const ComponentChecklist& checklist, std::string_view probe,
                           ProbeSource source) {
  CoverageReport report;
  report.checklist_ref = checklist.analogy_id;
  report.probe_source = source;
  const std::string padded = " " + normalize_text(probe) + " ";
  std::size_t required = 0;
  std::size_t required_hit = 0;
  for (const auto& item : checklist.items) {
    bool hit = contains_phrase(padded, item.canonical) ||
               std::any_of(item.aliases.begin(), item.aliases.end(),
                           [&](const std::string& a) { return contains_phrase(padded, a); });
    bool is_required = item.criticality == Criticality::kRequired;
    required += is_required;
    if (hit) {
      report.matched.insert(item.canonical);
      required_hit += is_required;
    } else if (is_required) {
      report.missing_required.insert(item.canonical);
    }
  }
  report.coverage_ratio =
      required == 0 ? 1.0 : static_cast<double>(required_hit) / static_cast<double>(required);
  return report;
}

std::string components_clause(const ComponentChecklist& checklist) {
  if (checklist.items.empty()) return {};
  std::string out(kComponentsLead);
  for (std::size_t i = 0; i < checklist.items.size(); ++i) {
    if (i) out += "; ";
    out += checklist.items[i].canonical;
  }
  return out + ".";
}

std::string repair_prompt(const std::string& image_prompt, const CoverageReport& report) {
  if (report.missing_required.empty()) {
    throw Error(ErrorKind::kPrecondition, "nothing to repair: no required item is missing");
  }
  std::string out = image_prompt;
  for (const auto& missing : report.missing_required) {
    auto clause = std::string(kMustLead) + missing + ".";
    if (out.find(trim(clause)) == std::string::npos) out += clause;
  }
  return out;
}

const CoverageAttempt* best_attempt(const std::vector<CoverageAttempt>& trail) {
  const CoverageAttempt* best = nullptr;
  for (const auto& a : trail) {
    if (!best || a.report.coverage_ratio >= best->report.coverage_ratio) best = &a;
  }
  return best;
}

CoverageLoopResult coverage_loop(const Scene& scene, const ComponentChecklist& checklist,
                                 int budget, GenerationContext& ctx) {
  if (budget < 0) throw Error(ErrorKind::kPrecondition, "coverage budget must be >= 0");
  if (trim(scene.image_prompt).empty()) {
    throw Error(ErrorKind::kPrecondition,
                "scene " + std::to_string(scene.index) + " has no image prompt");
  }
  CoverageLoopResult result{scene, std::nullopt};
  auto& trail = result.scene.coverage;
  trail.clear();

  const auto instruction = ctx.prompts.render(TemplateId::kCaptionProbe, {});
  std::string prompt = ctx.prompts.render(
      TemplateId::kImagePrompt,
      {{"scene_prompt", scene.image_prompt}, {"components_clause", components_clause(checklist)}});

  for (int attempt = 0; attempt <= budget; ++attempt) {
    if (attempt > 0) prompt = repair_prompt(prompt, trail.back().report);
    try {
      ImageRequest req{prompt, ctx.image_width, ctx.image_height, ctx.seed};
      auto image = ctx.gateway.generate_image(req);
      auto ref = ctx.store.put_blob(image.bytes, image.media_type);
      auto raw = ctx.gateway.caption_image(image.bytes, instruction);
      std::string caption;
      try {
        caption = decode_caption(ctx.prompts.parse(TemplateId::kCaptionProbe, raw));
      } catch (const Error& e) {
        // Captioners often answer in plain prose; use it as is.
        if (e.kind() != ErrorKind::kParse) throw;
        caption = raw;
      }
      auto report = verify_text(checklist, caption, ProbeSource::kImageCaption);
      trail.push_back({attempt + 1, prompt, ref, caption, report});
    } catch (const Error& e) {
      if (trail.empty()) throw;
      result.aborted = e.what();
      break;
    }
    if (trail.back().report.missing_required.empty()) break;
  }
  result.scene.image = best_attempt(trail)->image;
  return result;
}

}  // namespace studio
