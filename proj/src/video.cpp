#include "studio/video.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <regex>
#include <sstream>

#include "studio/errors.hpp"
#include "studio/util.hpp"
#include "studio/zip.hpp"

extern char** environ;

namespace fs = std::filesystem;

namespace studio {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// "(1-P)*a+P*b" with P the zoompan progress expression.
std::string lerp_expr(const std::string& p, double a, double b) {
  return "(1-" + p + ")*" + num(a) + "+" + p + "*" + num(b);
}

class ScratchDir {
 public:
  explicit ScratchDir(const fs::path& parent) {
    auto base = parent.empty() ? fs::temp_directory_path() : parent;
    path_ = base / ("render-" + random_id());
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct ProcessResult {
  int exit_code = -1;
  std::string stderr_text;
};

ProcessResult run_process(const std::vector<std::string>& argv, const fs::path& stderr_file) {
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, 0, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_addopen(&actions, 1, "/dev/null", O_WRONLY, 0);
  posix_spawn_file_actions_addopen(&actions, 2, stderr_file.c_str(),
                                   O_WRONLY | O_CREAT | O_TRUNC, 0644);
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  pid_t pid = 0;
  int rc = posix_spawn(&pid, argv[0].c_str(), &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) {
    throw Error(ErrorKind::kEncoder, "could not start encoder " + argv[0] + ": " +
                                         std::string(std::strerror(rc)));
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw Error(ErrorKind::kEncoder, "waitpid failed");
  }
  ProcessResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  std::error_code ec;
  if (fs::exists(stderr_file, ec)) result.stderr_text = to_string(read_file(stderr_file));
  return result;
}

RectF rect_from_json(const json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(),
          j.at("h").get<double>()};
}

json rect_to_json(const RectF& r) { return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

std::vector<std::uint8_t> frame_png(const Raster& image, const VideoSegment& seg, double t,
                                    int w, int h) {
  return encode_png(render_frame(image, seg, t, w, h));
}

std::vector<std::uint8_t> keyframe_archive(const VideoManifest& manifest,
                                           const std::vector<Raster>& images) {
  ZipWriter zip;
  auto manifest_text = json(manifest).dump(2);
  zip.add("manifest.json", to_bytes(manifest_text));
  for (std::size_t i = 0; i < manifest.segments.size(); ++i) {
    const auto& seg = manifest.segments[i];
    auto times = keyframe_times(seg);
    for (std::size_t k = 0; k < times.size(); ++k) {
      char name[64];
      std::snprintf(name, sizeof name, "keyframes/scene-%d-%02zu.png", seg.scene_index, k);
      zip.add(name, frame_png(images[i], seg, times[k], manifest.width, manifest.height));
    }
  }
  return zip.finish();
}

}  // namespace

std::string_view to_string(Transition t) { return t == Transition::kCut ? "cut" : "crossfade"; }

Transition parse_transition(std::string_view s) {
  if (s == "cut") return Transition::kCut;
  if (s == "crossfade") return Transition::kCrossfade;
  throw Error(ErrorKind::kValidation, "unknown transition '" + std::string(s) + "'");
}

void VideoSegment::validate() const {
  auto where = "segment " + std::to_string(scene_index) + ": ";
  if (duration_ms <= 0) throw Error(ErrorKind::kValidation, where + "duration_ms must be positive");
  if (transition_ms < 0) throw Error(ErrorKind::kValidation, where + "transition_ms must be >= 0");
  if (transition_ms >= duration_ms) {
    throw Error(ErrorKind::kValidation, where + "transition_ms must be shorter than duration_ms");
  }
  if (transition_out == Transition::kCut && transition_ms != 0) {
    throw Error(ErrorKind::kValidation, where + "a cut has no transition time");
  }
  if (!motion.start_rect.within_unit_square() || !motion.end_rect.within_unit_square()) {
    throw Error(ErrorKind::kValidation, where + "motion rectangles must lie in the unit square");
  }
}

void VideoManifest::validate() const {
  if (segments.size() != kSceneCount) {
    throw Error(ErrorKind::kPrecondition, "manifest needs exactly 4 segments, has " +
                                              std::to_string(segments.size()));
  }
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    segments[i].validate();
    if (segments[i].scene_index != static_cast<int>(i) + 1) {
      throw Error(ErrorKind::kValidation, "segments must be ordered by scene index 1..4");
    }
    sum += segments[i].duration_ms;
  }
  if (segments.back().transition_out != Transition::kCut) {
    throw Error(ErrorKind::kValidation, "the last segment cannot transition out");
  }
  if (sum != total_duration_ms) {
    throw Error(ErrorKind::kValidation, "total_duration_ms " + std::to_string(total_duration_ms) +
                                            " does not match the segment sum " +
                                            std::to_string(sum));
  }
  if (fps <= 0 || fps > 120) throw Error(ErrorKind::kValidation, "fps must be in 1..120");
  if (width < 16 || height < 16 || width % 2 || height % 2) {
    throw Error(ErrorKind::kValidation, "resolution must be even and at least 16x16");
  }
}

void to_json(json& j, const Motion& m) {
  j = {{"start_rect", rect_to_json(m.start_rect)}, {"end_rect", rect_to_json(m.end_rect)}};
}

void from_json(const json& j, Motion& m) {
  m.start_rect = rect_from_json(j.at("start_rect"));
  m.end_rect = rect_from_json(j.at("end_rect"));
}

void to_json(json& j, const VideoSegment& s) {
  j = {{"scene_index", s.scene_index},   {"image", s.image},
       {"caption", s.caption},           {"duration_ms", s.duration_ms},
       {"motion", s.motion},             {"transition_out", to_string(s.transition_out)},
       {"transition_ms", s.transition_ms}};
}

void from_json(const json& j, VideoSegment& s) {
  s.scene_index = j.at("scene_index").get<int>();
  s.image = j.at("image").get<BlobRef>();
  s.caption = j.at("caption").get<std::string>();
  s.duration_ms = j.at("duration_ms").get<int>();
  s.motion = j.at("motion").get<Motion>();
  s.transition_out = parse_transition(j.at("transition_out").get<std::string>());
  s.transition_ms = j.at("transition_ms").get<int>();
}

void to_json(json& j, const VideoManifest& m) {
  j = {{"version", VideoManifest::kFormatVersion},
       {"fps", m.fps},
       {"resolution", {{"width", m.width}, {"height", m.height}}},
       {"total_duration_ms", m.total_duration_ms},
       {"segments", m.segments}};
}

void from_json(const json& j, VideoManifest& m) {
  if (j.value("version", 0) != VideoManifest::kFormatVersion) {
    throw Error(ErrorKind::kValidation, "unsupported manifest version");
  }
  m.fps = j.at("fps").get<int>();
  m.width = j.at("resolution").at("width").get<int>();
  m.height = j.at("resolution").at("height").get<int>();
  m.total_duration_ms = j.at("total_duration_ms").get<std::int64_t>();
  m.segments = j.at("segments").get<std::vector<VideoSegment>>();
}

void to_json(json& j, const TimingConfig& c) {
  j = {{"segment_ms", c.segment_ms},     {"durations_ms", c.durations_ms},
       {"start_rect", rect_to_json(c.start_rect)}, {"end_rect", rect_to_json(c.end_rect)},
       {"crossfade_ms", c.crossfade_ms}, {"fps", c.fps},
       {"width", c.width},               {"height", c.height}};
}

void from_json(const json& j, TimingConfig& c) {
  auto field = [&](const char* key, auto& target) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(target);
    } catch (const json::exception&) {
      throw Error(ErrorKind::kConfig, std::string(key) + ": wrong type");
    }
  };
  field("segment_ms", c.segment_ms);
  field("durations_ms", c.durations_ms);
  field("crossfade_ms", c.crossfade_ms);
  field("fps", c.fps);
  field("width", c.width);
  field("height", c.height);
  try {
    if (j.contains("start_rect")) c.start_rect = rect_from_json(j.at("start_rect"));
    if (j.contains("end_rect")) c.end_rect = rect_from_json(j.at("end_rect"));
  } catch (const json::exception&) {
    throw Error(ErrorKind::kConfig, "start_rect/end_rect: expected {x, y, w, h}");
  }
}

void to_json(json& j, const RenderConfig& c) {
  j = {{"encoder", c.encoder},
       {"encoder_args", c.encoder_args},
       {"fallback", c.fallback},
       {"work_dir", c.work_dir.string()}};
}

void from_json(const json& j, RenderConfig& c) {
  try {
    if (j.contains("encoder")) c.encoder = j.at("encoder").get<std::string>();
    if (j.contains("encoder_args")) c.encoder_args = j.at("encoder_args").get<std::vector<std::string>>();
    if (j.contains("fallback")) c.fallback = j.at("fallback").get<bool>();
    if (j.contains("work_dir")) c.work_dir = j.at("work_dir").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::kConfig, "video: encoder/encoder_args/fallback/work_dir has the wrong type");
  }
}

VideoManifest build_manifest(const Storyboard& storyboard, const TimingConfig& timing) {
  if (storyboard.scenes.size() != kSceneCount) {
    throw Error(ErrorKind::kPrecondition, "storyboard needs exactly 4 scenes to make a video");
  }
  if (!timing.durations_ms.empty() && timing.durations_ms.size() != kSceneCount) {
    throw Error(ErrorKind::kValidation, "durations_ms must list exactly 4 durations");
  }
  VideoManifest m;
  m.fps = timing.fps;
  m.width = timing.width;
  m.height = timing.height;
  for (std::size_t i = 0; i < storyboard.scenes.size(); ++i) {
    const auto& scene = storyboard.scenes[i];
    if (!scene.image) {
      throw Error(ErrorKind::kPrecondition,
                  "scene " + std::to_string(scene.index) + " has no image");
    }
    VideoSegment seg;
    seg.scene_index = scene.index;
    seg.image = *scene.image;
    seg.caption = scene.description;
    seg.duration_ms = timing.durations_ms.empty() ? timing.segment_ms : timing.durations_ms[i];
    seg.motion = {timing.start_rect, timing.end_rect};
    bool last = i + 1 == storyboard.scenes.size();
    if (!last && timing.crossfade_ms > 0) {
      seg.transition_out = Transition::kCrossfade;
      seg.transition_ms = timing.crossfade_ms;
    }
    m.segments.push_back(seg);
    m.total_duration_ms += seg.duration_ms;
  }
  m.validate();
  return m;
}

RectF interpolate_motion(const VideoSegment& segment, double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw Error(ErrorKind::kValidation, "motion time t must lie in [0, 1]");
  }
  const auto& a = segment.motion.start_rect;
  const auto& b = segment.motion.end_rect;
  return {(1 - t) * a.x + t * b.x, (1 - t) * a.y + t * b.y, (1 - t) * a.w + t * b.w,
          (1 - t) * a.h + t * b.h};
}

int frames_for(int ms, int fps) {
  return static_cast<int>(std::llround(static_cast<double>(ms) * fps / 1000.0));
}

std::optional<fs::path> find_encoder(const std::string& name) {
  if (name.empty()) return std::nullopt;
  if (name.find('/') != std::string::npos) {
    if (::access(name.c_str(), X_OK) == 0) return fs::path(name);
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  if (!path) return std::nullopt;
  std::stringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) continue;
    auto candidate = fs::path(dir) / name;
    if (::access(candidate.c_str(), X_OK) == 0 && !fs::is_directory(candidate)) return candidate;
  }
  return std::nullopt;
}

std::string filter_script(const VideoManifest& manifest) {
  manifest.validate();
  std::ostringstream out;
  const auto size = std::to_string(manifest.width) + "x" + std::to_string(manifest.height);
  for (std::size_t k = 0; k < manifest.segments.size(); ++k) {
    const auto& seg = manifest.segments[k];
    int tail = seg.transition_out == Transition::kCrossfade ? seg.transition_ms : 0;
    int clip_frames = frames_for(seg.duration_ms + tail, manifest.fps);
    int motion_frames = frames_for(seg.duration_ms, manifest.fps);
    std::string p = motion_frames > 1
                        ? "min(on/" + std::to_string(motion_frames - 1) + "\\,1)"
                        : std::string("1");
    const auto& a = seg.motion.start_rect;
    const auto& b = seg.motion.end_rect;
    out << "[" << 2 * k << ":v]zoompan=z='1/(" << lerp_expr(p, a.w, b.w) << ")'"
        << ":x='(" << lerp_expr(p, a.x, b.x) << ")*iw'"
        << ":y='(" << lerp_expr(p, a.y, b.y) << ")*ih'"
        << ":d=" << clip_frames << ":s=" << size << ":fps=" << manifest.fps
        << ",setsar=1[z" << k << "];\n";
    out << "[z" << k << "][" << 2 * k + 1 << ":v]overlay=0:0,format=yuv420p,settb=1/"
        << manifest.fps << "[v" << k << "];\n";
  }
  std::string acc = "v0";
  std::int64_t offset_ms = 0;
  for (std::size_t k = 1; k < manifest.segments.size(); ++k) {
    const auto& prev = manifest.segments[k - 1];
    offset_ms += prev.duration_ms;
    std::string next = k + 1 == manifest.segments.size() ? "out" : "x" + std::to_string(k);
    if (prev.transition_out == Transition::kCrossfade) {
      out << "[" << acc << "][v" << k << "]xfade=transition=fade:duration="
          << num(prev.transition_ms / 1000.0) << ":offset=" << num(offset_ms / 1000.0) << "["
          << next << "]";
    } else {
      out << "[" << acc << "][v" << k << "]concat=n=2:v=1:a=0[" << next << "]";
    }
    out << (next == "out" ? "\n" : ";\n");
    acc = next;
  }
  return out.str();
}

std::vector<double> keyframe_times(const VideoSegment& segment) {
  int n = std::max(1, segment.duration_ms / 1000);
  std::vector<double> out;
  for (int k = 0; k < n; ++k) out.push_back(n == 1 ? 0.0 : static_cast<double>(k) / (n - 1));
  return out;
}

Raster render_frame(const Raster& image, const VideoSegment& segment, double t, int width,
                    int height) {
  auto frame = crop_resize(image, interpolate_motion(segment, t), width, height);
  frame.blit(caption_overlay(width, height, segment.caption), 0, 0);
  return frame;
}

RenderResult render_video(const VideoManifest& manifest, Store& store, const RenderConfig& config) {
  if (manifest.segments.empty()) {
    throw Error(ErrorKind::kPrecondition, "manifest has no segments");
  }
  manifest.validate();
  std::vector<Raster> images;
  for (const auto& seg : manifest.segments) {
    images.push_back(crop_resize(decode_image(store.get_blob(seg.image)), RectF{},
                                 manifest.width, manifest.height));
  }

  auto encoder = find_encoder(config.encoder);
  if (!encoder) {
    if (!config.fallback) {
      throw Error(ErrorKind::kEncoder,
                  "video encoder '" + config.encoder + "' not found and fallback is disabled");
    }
    auto archive = keyframe_archive(manifest, images);
    return {store.put_blob(archive, "application/zip"), true};
  }

  ScratchDir scratch(config.work_dir);
  std::vector<std::string> argv{encoder->string(), "-nostdin", "-y", "-hide_banner",
                                "-loglevel", "error"};
  for (std::size_t k = 0; k < manifest.segments.size(); ++k) {
    auto img = scratch.path() / ("scene-" + std::to_string(k + 1) + ".png");
    auto cap = scratch.path() / ("caption-" + std::to_string(k + 1) + ".png");
    write_file(img, encode_png(images[k]));
    write_file(cap, encode_png(caption_overlay(manifest.width, manifest.height,
                                               manifest.segments[k].caption)));
    argv.insert(argv.end(), {"-i", img.string(), "-i", cap.string()});
  }
  auto script = scratch.path() / "filter.txt";
  write_file(script, filter_script(manifest));
  auto output = scratch.path() / "video.mp4";
  argv.insert(argv.end(), {"-filter_complex_script", script.string(), "-map", "[out]"});
  argv.insert(argv.end(), config.encoder_args.begin(), config.encoder_args.end());
  argv.insert(argv.end(), {"-r", std::to_string(manifest.fps), output.string()});

  auto result = run_process(argv, scratch.path() / "stderr.txt");
  if (result.exit_code != 0) {
    auto tail = result.stderr_text.size() > 2000
                    ? result.stderr_text.substr(result.stderr_text.size() - 2000)
                    : result.stderr_text;
    throw Error(ErrorKind::kEncoder, "encoder exited with status " +
                                         std::to_string(result.exit_code) + ": " + trim(tail));
  }
  if (!fs::exists(output) || fs::file_size(output) == 0) {
    throw Error(ErrorKind::kEncoder, "encoder reported success but wrote no output");
  }
  return {store.put_blob(read_file(output), "video/mp4"), false};
}

std::optional<std::int64_t> probe_duration_ms(const fs::path& encoder, const fs::path& media) {
  auto err = fs::temp_directory_path() / ("probe-" + random_id() + ".txt");
  auto result = run_process({encoder.string(), "-hide_banner", "-i", media.string()}, err);
  std::error_code ec;
  fs::remove(err, ec);
  static const std::regex kDuration(R"(Duration:\s*(\d+):(\d+):(\d+(?:\.\d+)?))");
  std::smatch m;
  if (!std::regex_search(result.stderr_text, m, kDuration)) return std::nullopt;
  double seconds = std::stod(m[1]) * 3600 + std::stod(m[2]) * 60 + std::stod(m[3]);
  return static_cast<std::int64_t>(std::llround(seconds * 1000.0));
}

}  // namespace studio
