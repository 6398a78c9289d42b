#include <fstream>
#include <random>
#include <thread>

#include "doctest.h"
#include "studio/store.hpp"
#include "support.hpp"

using namespace studio;
using testing::TempDir;

namespace {

std::vector<std::uint8_t> random_bytes(std::mt19937_64& rng, std::size_t max_len) {
  std::vector<std::uint8_t> out(rng() % (max_len + 1));
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
  return out;
}

PipelineSession make_session(const std::string& name) {
  PipelineSession s;
  s.id = random_id();
  s.concept_ = Concept::make(name);
  s.created_at = monotonic_now();
  s.updated_at = s.created_at;
  return s;
}

}  // namespace

TEST_SUITE("store") {

TEST_CASE("layout is versioned and blobs fan out two levels") {
  TempDir dir;
  FsStore store(dir.path());
  CHECK(to_string(read_file((dir / "VERSION").string())).substr(0, 1) == "1");
  auto ref = store.put_blob(to_bytes("hello"), "text/plain");
  auto expected = dir / "blobs" / ref.hash.substr(0, 2) / ref.hash.substr(2, 2) / ref.hash;
  CHECK(store.blob_path(ref.hash) == expected);
  CHECK(std::filesystem::exists(expected));
}

TEST_CASE("unknown layout version is refused") {
  TempDir dir;
  write_file((dir / "VERSION").string(), std::string_view("99\n"));
  CHECK_THROWS_AS(FsStore(dir.path()), Error);
}

TEST_CASE("put/get round-trips random bytes") {
  TempDir dir;
  FsStore store(dir.path());
  std::mt19937_64 rng(1234);
  for (int i = 0; i < 300; ++i) {
    auto bytes = random_bytes(rng, 4096);
    auto ref = store.put_blob(bytes, "application/octet-stream");
    REQUIRE(ref.byte_length == bytes.size());
    REQUIRE(store.get_blob(ref) == bytes);
    REQUIRE(store.get_blob(ref.hash) == bytes);
  }
}

TEST_CASE("empty blob is a valid ref") {
  TempDir dir;
  FsStore store(dir.path());
  auto ref = store.put_blob({}, "application/octet-stream");
  CHECK(ref.byte_length == 0);
  CHECK(ref.hash == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(store.get_blob(ref).empty());
}

TEST_CASE("duplicate puts keep a single copy") {
  TempDir dir;
  FsStore store(dir.path());
  auto a = store.put_blob(to_bytes("same bytes"), "text/plain");
  auto usage = store.blob_usage();
  auto b = store.put_blob(to_bytes("same bytes"), "text/plain");
  CHECK(a == b);
  CHECK(store.blob_usage() == usage);
  CHECK(usage.first == 1);
}

TEST_CASE("distinct bytes get the digest an independent tool computes") {
  TempDir dir;
  FsStore store(dir.path());
  auto a = store.put_blob(to_bytes("alpha"), "text/plain");
  auto b = store.put_blob(to_bytes("beta"), "text/plain");
  CHECK(a.hash != b.hash);
  for (const auto& ref : {a, b}) {
    auto r = testing::shell("python3 -c \"import hashlib,sys; print(hashlib.sha256(open(sys.argv[1],'rb').read()).hexdigest())\" " +
                            testing::quote(store.blob_path(ref.hash).string()));
    REQUIRE(r.status == 0);
    CHECK(trim(r.out) == ref.hash);
  }
}

TEST_CASE("a flipped byte on disk is an integrity error") {
  TempDir dir;
  FsStore store(dir.path());
  auto ref = store.put_blob(to_bytes("precious data"), "text/plain");
  auto path = store.blob_path(ref.hash);
  std::filesystem::permissions(path, std::filesystem::perms::owner_all,
                               std::filesystem::perm_options::add);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(3);
    f.put('X');
  }
  try {
    store.get_blob(ref);
    FAIL("expected an integrity error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIntegrity);
  }
}

TEST_CASE("unknown blobs and sessions are not found") {
  TempDir dir;
  FsStore store(dir.path());
  auto expect_not_found = [](auto&& fn) {
    try {
      fn();
      FAIL("expected not found");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNotFound);
    }
  };
  expect_not_found([&] { store.get_blob(std::string(64, 'a')); });
  expect_not_found([&] { store.get_blob("../../etc/passwd"); });
  expect_not_found([&] { store.load_session(random_id()); });
  expect_not_found([&] { store.load_session("../VERSION"); });
  CHECK_FALSE(store.has_blob(std::string(64, 'b')));
}

TEST_CASE("save then load returns the same document") {
  TempDir dir;
  FsStore store(dir.path());
  auto s = testing::fixture_json("session_video_ready.json").get<PipelineSession>();
  store.save_session(s);
  CHECK(store.load_session(s.id) == s);
  s.failure_reason.reset();
  s.concept_.name = "renamed";
  store.save_session(s);
  CHECK(store.load_session(s.id).concept_.name == "renamed");
}

TEST_CASE("session saves leave no staging files behind") {
  TempDir dir;
  FsStore store(dir.path());
  for (int i = 0; i < 20; ++i) store.save_session(make_session("c" + std::to_string(i)));
  std::size_t leftovers = 0;
  if (std::filesystem::exists(dir / "tmp")) {
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "tmp")) ++leftovers;
  }
  CHECK(leftovers == 0);
}

TEST_CASE("a truncated session file is reported, not half-read") {
  TempDir dir;
  FsStore store(dir.path());
  auto s = make_session("x");
  store.save_session(s);
  auto text = to_string(read_file(store.session_path(s.id).string()));
  write_file(store.session_path(s.id).string(), std::string_view(text).substr(0, text.size() / 2));
  try {
    store.load_session(s.id);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIntegrity);
  }
}

TEST_CASE("list is newest first and paginates") {
  TempDir dir;
  FsStore store(dir.path());
  std::vector<std::string> ids;
  for (int i = 0; i < 5; ++i) {
    auto s = make_session("c" + std::to_string(i));
    store.save_session(s);
    ids.push_back(s.id);
  }
  auto page = store.list_sessions(0, 3);
  CHECK(page.total == 5);
  REQUIRE(page.sessions.size() == 3);
  CHECK(page.sessions[0].id == ids[4]);
  CHECK(page.sessions[1].id == ids[3]);
  CHECK(page.sessions[0].created_at > page.sessions[1].created_at);
  auto rest = store.list_sessions(3, 10);
  REQUIRE(rest.sessions.size() == 2);
  CHECK(rest.sessions[1].id == ids[0]);
  CHECK(store.list_sessions(10, 3).sessions.empty());
}

TEST_CASE("concurrent puts of the same bytes agree") {
  TempDir dir;
  FsStore store(dir.path());
  auto bytes = to_bytes(std::string(10000, 'z'));
  std::vector<std::thread> threads;
  std::vector<BlobRef> refs(8);
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] { refs[static_cast<std::size_t>(i)] = store.put_blob(bytes, "text/plain"); });
  }
  for (auto& t : threads) t.join();
  for (const auto& r : refs) CHECK(r == refs[0]);
  CHECK(store.blob_usage().first == 1);
  CHECK(store.get_blob(refs[0]) == bytes);
}

TEST_CASE("media types are sniffed from magic bytes") {
  CHECK(sniff_media_type(to_bytes("\x89PNG\r\n\x1a\n....")) == "image/png");
  CHECK(sniff_media_type(std::vector<std::uint8_t>{0xff, 0xd8, 0xff, 0xe0}) == "image/jpeg");
  CHECK(sniff_media_type(to_bytes("PK\x03\x04")) == "application/zip");
  CHECK(sniff_media_type(to_bytes("hello")) == "application/octet-stream");
  CHECK(is_hex_digest(std::string(64, 'a')));
  CHECK_FALSE(is_hex_digest(std::string(64, 'A')));
  CHECK_FALSE(is_hex_digest("abc"));
}

}  // TEST_SUITE
