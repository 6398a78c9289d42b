#pragma once

// Storyboard → pan/zoom slideshow. The manifest is the single source of
// timing; the ffmpeg filter script and the fallback keyframe archive are
// both derived from it.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "studio/domain.hpp"
#include "studio/raster.hpp"
#include "studio/store.hpp"

namespace studio {

enum class Transition { kCut, kCrossfade };
std::string_view to_string(Transition t);
Transition parse_transition(std::string_view s);

struct Motion {
  RectF start_rect;
  RectF end_rect;
  bool operator==(const Motion&) const = default;
};

struct VideoSegment {
  int scene_index = 0;
  BlobRef image;
  std::string caption;
  int duration_ms = 0;
  Motion motion;
  Transition transition_out = Transition::kCut;
  int transition_ms = 0;

  void validate() const;
  bool operator==(const VideoSegment&) const = default;
};

struct VideoManifest {
  static constexpr int kFormatVersion = 1;

  std::vector<VideoSegment> segments;
  int fps = 30;
  int width = 512;
  int height = 512;
  std::int64_t total_duration_ms = 0;

  void validate() const;
  bool operator==(const VideoManifest&) const = default;
};

void to_json(json& j, const Motion& m);
void from_json(const json& j, Motion& m);
void to_json(json& j, const VideoSegment& s);
void from_json(const json& j, VideoSegment& s);
void to_json(json& j, const VideoManifest& m);
void from_json(const json& j, VideoManifest& m);

struct TimingConfig {
  int segment_ms = 5000;
  std::vector<int> durations_ms;  // per scene; empty = segment_ms for all
  RectF start_rect{0.0, 0.0, 1.0, 1.0};
  RectF end_rect{0.075, 0.075, 0.85, 0.85};
  int crossfade_ms = 500;  // 0 = hard cuts
  int fps = 30;
  int width = 512;
  int height = 512;
};

void to_json(json& j, const TimingConfig& c);
void from_json(const json& j, TimingConfig& c);

VideoManifest build_manifest(const Storyboard& storyboard, const TimingConfig& timing = {});

/// (1−t)·start + t·end, componentwise. t outside [0,1] is an error.
RectF interpolate_motion(const VideoSegment& segment, double t);

/// Frame count covering `ms` at `fps`, rounded to nearest.
int frames_for(int ms, int fps);

struct RenderConfig {
  std::string encoder = "ffmpeg";  // bare name searched on PATH, or a path
  std::vector<std::string> encoder_args{"-c:v", "libx264", "-preset", "ultrafast",
                                        "-pix_fmt", "yuv420p", "-movflags", "+faststart"};
  bool fallback = true;  // keyframe archive when the encoder is missing
  std::filesystem::path work_dir;  // scratch space; defaults to the system temp dir
};

void to_json(json& j, const RenderConfig& c);
void from_json(const json& j, RenderConfig& c);

/// Absolute path of the encoder, or nullopt when it cannot be found.
std::optional<std::filesystem::path> find_encoder(const std::string& name);

/// The -filter_complex script for `manifest`; input 2k is segment k's
/// image and input 2k+1 its caption overlay.
std::string filter_script(const VideoManifest& manifest);

/// Times (in [0,1] of segment progress) of the fallback keyframes: one per
/// whole second of the segment.
std::vector<double> keyframe_times(const VideoSegment& segment);

/// One frame of `segment` at progress t: motion crop, resize, caption band.
Raster render_frame(const Raster& image, const VideoSegment& segment, double t, int width,
                    int height);

struct RenderResult {
  BlobRef blob;
  bool fallback = false;
};

/// Encodes the manifest (or writes the keyframe archive) and stores the
/// result. Nothing is stored unless rendering succeeds.
RenderResult render_video(const VideoManifest& manifest, Store& store, const RenderConfig& config);

/// Duration reported by the encoder's own inspection (`ffmpeg -i`), in ms.
std::optional<std::int64_t> probe_duration_ms(const std::filesystem::path& encoder,
                                              const std::filesystem::path& media);

}  // namespace studio
