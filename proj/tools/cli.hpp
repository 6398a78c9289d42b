#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "studio/domain.hpp"
#include "studio/errors.hpp"

namespace studio::cli {

enum Exit : int {
  kOk = 0,
  kUsage = 2,
  kNotFound = 3,
  kStageFailure = 4,
  kBackendFailure = 5,
};

int exit_code_for(ErrorKind kind);

struct RunArgs {
  std::string concept_name;
  Subject subject = Subject::kOther;
  std::optional<LearnerLevel> level;
  int choose = 1;
  std::filesystem::path out = "studio-out";
  std::optional<std::string> api;
};

/// The whole pipeline against a running service.
int run_remote(const RunArgs& args);

using BlobFetch = std::function<std::vector<std::uint8_t>(const BlobRef&)>;

/// Writes storyboard.md next to an images/ directory holding the scene images.
void export_markdown(const PipelineSession& session, const std::filesystem::path& file,
                     const BlobFetch& fetch);

/// session.json, storyboard.json, storyboard.md, images/, and the video or
/// keyframe archive, all under `dir`.
void write_artifacts(const PipelineSession& session, const std::filesystem::path& dir,
                     const BlobFetch& fetch);

}  // namespace studio::cli
