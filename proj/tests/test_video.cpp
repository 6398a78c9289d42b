#include <fstream>
#include <random>

#include "doctest.h"
#include "studio/video.hpp"
#include "support.hpp"

using namespace studio;

namespace {

VideoSegment segment_with(RectF a, RectF b) {
  VideoSegment s;
  s.scene_index = 1;
  s.duration_ms = 5000;
  s.motion = {a, b};
  return s;
}

// Lists archive entries with python's zipfile, independent of our writer.
std::vector<std::string> zip_names(const std::filesystem::path& file) {
  auto r = testing::shell(
      "python3 -c \"import zipfile,sys; print('\\n'.join(zipfile.ZipFile(sys.argv[1]).namelist()))\" " +
      testing::quote(file.string()));
  REQUIRE(r.status == 0);
  std::vector<std::string> out;
  std::stringstream ss(r.out);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string zip_entry(const std::filesystem::path& file, const std::string& name) {
  auto r = testing::shell(
      "python3 -c \"import zipfile,sys; sys.stdout.write(zipfile.ZipFile(sys.argv[1]).read(sys.argv[2]).decode())\" " +
      testing::quote(file.string()) + " " + testing::quote(name));
  REQUIRE(r.status == 0);
  return r.out;
}

}  // namespace

TEST_SUITE("video") {

TEST_CASE("default timing gives four five-second segments") {
  testing::TempDir dir;
  FsStore store(dir.path());
  auto m = build_manifest(testing::synthetic_storyboard(store));
  REQUIRE(m.segments.size() == 4);
  CHECK(m.total_duration_ms == 20000);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(m.segments[i].duration_ms == 5000);
    CHECK(m.segments[i].scene_index == static_cast<int>(i) + 1);
  }
  CHECK(m.segments[0].transition_out == Transition::kCrossfade);
  CHECK(m.segments[3].transition_out == Transition::kCut);
  CHECK(m.segments[3].transition_ms == 0);
  CHECK(m.segments[2].caption == "Scene number 3 caption.");
}

TEST_CASE("per-scene durations sum to the total") {
  testing::TempDir dir;
  FsStore store(dir.path());
  TimingConfig t;
  t.durations_ms = {3000, 4000, 5000, 6000};
  auto m = build_manifest(testing::synthetic_storyboard(store), t);
  CHECK(m.total_duration_ms == 18000);
  CHECK(m.segments[3].duration_ms == 6000);

  t.durations_ms = {3000, 0, 5000, 6000};
  CHECK_THROWS_AS(build_manifest(testing::synthetic_storyboard(store), t), Error);
  t.durations_ms = {3000, 4000};
  CHECK_THROWS_AS(build_manifest(testing::synthetic_storyboard(store), t), Error);
}

TEST_CASE("hard cuts when crossfade is zero") {
  testing::TempDir dir;
  FsStore store(dir.path());
  TimingConfig t;
  t.crossfade_ms = 0;
  auto m = build_manifest(testing::synthetic_storyboard(store), t);
  for (const auto& s : m.segments) CHECK(s.transition_out == Transition::kCut);
  CHECK(filter_script(m).find("concat") != std::string::npos);
  CHECK(filter_script(m).find("xfade") == std::string::npos);
}

TEST_CASE("scenes without images cannot be turned into a video") {
  testing::TempDir dir;
  FsStore store(dir.path());
  auto sb = testing::synthetic_storyboard(store);
  sb.scenes[2].image.reset();
  try {
    build_manifest(sb);
    FAIL("expected precondition error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kPrecondition);
    CHECK(std::string(e.what()).find("scene 3") != std::string::npos);
  }
}

TEST_CASE("motion interpolation at the endpoints and midpoint") {
  auto seg = segment_with({0, 0, 1, 1}, {0.075, 0.075, 0.85, 0.85});
  CHECK(interpolate_motion(seg, 0.0) == RectF{0, 0, 1, 1});
  CHECK(interpolate_motion(seg, 1.0) == RectF{0.075, 0.075, 0.85, 0.85});
  auto mid = interpolate_motion(seg, 0.5);
  CHECK(mid.x == doctest::Approx(0.0375));
  CHECK(mid.y == doctest::Approx(0.0375));
  CHECK(mid.w == doctest::Approx(0.925));
  CHECK(mid.h == doctest::Approx(0.925));
  CHECK_THROWS_AS(interpolate_motion(seg, -0.01), Error);
  CHECK_THROWS_AS(interpolate_motion(seg, 1.01), Error);
  CHECK_THROWS_AS(interpolate_motion(seg, std::nan("")), Error);
}

TEST_CASE("interpolation is linear in t for random rectangles") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  for (int i = 0; i < 200; ++i) {
    RectF a{u(rng), u(rng), 0.5, 0.5};
    RectF b{u(rng), u(rng), 0.4, 0.3};
    auto seg = segment_with(a, b);
    double t = static_cast<double>(i) / 199.0;
    auto r = interpolate_motion(seg, t);
    CHECK(r.x == doctest::Approx(a.x + t * (b.x - a.x)));
    CHECK(r.y == doctest::Approx(a.y + t * (b.y - a.y)));
    CHECK(r.w == doctest::Approx(a.w + t * (b.w - a.w)));
    CHECK(r.h == doctest::Approx(a.h + t * (b.h - a.h)));
  }
}

TEST_CASE("frame counts round to nearest") {
  CHECK(frames_for(5000, 30) == 150);
  CHECK(frames_for(500, 30) == 15);
  CHECK(frames_for(1017, 30) == 31);
  CHECK(frames_for(0, 30) == 0);
}

TEST_CASE("keyframes fall once per second of a segment") {
  auto seg = segment_with({0, 0, 1, 1}, {0, 0, 1, 1});
  auto t = keyframe_times(seg);
  REQUIRE(t.size() == 5);
  CHECK(t.front() == 0.0);
  CHECK(t.back() == 1.0);
  CHECK(t[2] == doctest::Approx(0.5));
  seg.duration_ms = 800;
  CHECK(keyframe_times(seg) == std::vector<double>{0.0});
}

TEST_CASE("manifest survives a json round-trip") {
  testing::TempDir dir;
  FsStore store(dir.path());
  TimingConfig t;
  t.durations_ms = {1000, 2000, 3000, 4000};
  auto m = build_manifest(testing::synthetic_storyboard(store), t);
  auto doc = json(m);
  CHECK(doc.get<VideoManifest>() == m);
  doc["total_duration_ms"] = 1;
  CHECK_THROWS_AS(doc.get<VideoManifest>().validate(), Error);
}

TEST_CASE("an empty manifest renders nothing") {
  testing::TempDir dir;
  FsStore store(dir.path());
  try {
    render_video(VideoManifest{}, store, RenderConfig{});
    FAIL("expected precondition error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kPrecondition);
  }
  CHECK(store.blob_usage().first == 0);
}

TEST_CASE("rendered frame shows the cropped image under the caption band") {
  Raster img(64, 64, Rgb{200, 10, 10});
  auto seg = segment_with({0, 0, 1, 1}, {0.25, 0.25, 0.5, 0.5});
  seg.caption = "hello";
  auto frame = render_frame(img, seg, 0.5, 48, 48);
  CHECK(frame.width() == 48);
  CHECK(frame.height() == 48);
  // top rows sit above the caption band
  CHECK(frame.pixels()[(4 * 48 + 24) * 4] == 200);
}

TEST_CASE("without an encoder the fallback archive holds one keyframe per second") {
  testing::TempDir dir;
  FsStore store(dir.path());
  TimingConfig t;
  t.width = 64;
  t.height = 64;
  auto m = build_manifest(testing::synthetic_storyboard(store), t);
  RenderConfig rc;
  rc.encoder = "studio-no-such-encoder";
  auto result = render_video(m, store, rc);
  CHECK(result.fallback);
  CHECK(result.blob.media_type == "application/zip");
  auto names = zip_names(store.blob_path(result.blob.hash));
  CHECK(names.size() == 21);
  CHECK(std::count(names.begin(), names.end(), "manifest.json") == 1);
  CHECK(std::count_if(names.begin(), names.end(), [](const std::string& n) {
          return n.rfind("keyframes/", 0) == 0 && n.size() > 4 && n.substr(n.size() - 4) == ".png";
        }) == 20);
  CHECK(std::count(names.begin(), names.end(), "keyframes/scene-4-04.png") == 1);
  auto embedded = json::parse(zip_entry(store.blob_path(result.blob.hash), "manifest.json"));
  CHECK(embedded.get<VideoManifest>() == m);
}

TEST_CASE("missing encoder with fallback disabled is an encoder error") {
  testing::TempDir dir;
  FsStore store(dir.path());
  auto m = build_manifest(testing::synthetic_storyboard(store));
  auto before = store.blob_usage();
  RenderConfig rc;
  rc.encoder = "studio-no-such-encoder";
  rc.fallback = false;
  try {
    render_video(m, store, rc);
    FAIL("expected encoder error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kEncoder);
  }
  CHECK(store.blob_usage() == before);
}

TEST_CASE("a failing encoder surfaces its stderr and stores nothing") {
  testing::TempDir dir;
  FsStore store(dir / "store");
  auto script = dir / "bad-encoder.sh";
  {
    std::ofstream f(script);
    f << "#!/bin/sh\necho 'codec exploded: marker-7731' >&2\nexit 3\n";
  }
  std::filesystem::permissions(script, std::filesystem::perms::owner_all);
  TimingConfig t;
  t.width = 32;
  t.height = 32;
  auto m = build_manifest(testing::synthetic_storyboard(store, 32), t);
  auto before = store.blob_usage();
  RenderConfig rc;
  rc.encoder = script.string();
  rc.work_dir = dir / "work";
  try {
    render_video(m, store, rc);
    FAIL("expected encoder error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kEncoder);
    CHECK(std::string(e.what()).find("marker-7731") != std::string::npos);
    CHECK(std::string(e.what()).find("status 3") != std::string::npos);
  }
  CHECK(store.blob_usage() == before);
}

TEST_CASE("ffmpeg render lasts the manifest total") {
  auto ffmpeg = find_encoder("ffmpeg");
  if (!ffmpeg) {
    MESSAGE("ffmpeg not on PATH; skipping encoder render");
    return;
  }
  testing::TempDir dir;
  FsStore store(dir.path());
  TimingConfig t;
  t.width = 96;
  t.height = 96;
  t.fps = 12;
  t.durations_ms = {1000, 2000, 1500, 2500};
  auto m = build_manifest(testing::synthetic_storyboard(store), t);
  auto result = render_video(m, store, RenderConfig{});
  CHECK_FALSE(result.fallback);
  CHECK(result.blob.media_type == "video/mp4");
  auto ms = probe_duration_ms(*ffmpeg, store.blob_path(result.blob.hash));
  REQUIRE(ms);
  CHECK(std::llabs(*ms - 7000) <= 100);
}

TEST_CASE("filter script references every input once") {
  testing::TempDir dir;
  FsStore store(dir.path());
  auto script = filter_script(build_manifest(testing::synthetic_storyboard(store)));
  for (int k = 0; k < 8; ++k) {
    auto tag = "[" + std::to_string(k) + ":v]";
    CHECK(script.find(tag) != std::string::npos);
    CHECK(script.find(tag) == script.rfind(tag));
  }
  CHECK(script.find("xfade=transition=fade:duration=0.5:offset=5") != std::string::npos);
  CHECK(script.find("[out]") != std::string::npos);
}

TEST_CASE("encoder lookup") {
  CHECK_FALSE(find_encoder(""));
  CHECK_FALSE(find_encoder("studio-no-such-encoder"));
  CHECK_FALSE(find_encoder("/nonexistent/ffmpeg"));
  CHECK(find_encoder("sh"));
}

}  // TEST_SUITE
