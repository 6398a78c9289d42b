#include "studio/store.hpp"

#include <algorithm>
#include <fstream>

#include "studio/errors.hpp"

namespace fs = std::filesystem;

namespace studio {

namespace {

bool is_session_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || c == '-' || c == '_';
  });
}

}  // namespace

bool is_hex_digest(std::string_view s) {
  return s.size() == 64 && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

std::string sniff_media_type(std::span<const std::uint8_t> b) {
  auto starts = [&](std::initializer_list<std::uint8_t> magic, std::size_t at = 0) {
    if (b.size() < at + magic.size()) return false;
    return std::equal(magic.begin(), magic.end(), b.begin() + static_cast<long>(at));
  };
  if (starts({0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'})) return "image/png";
  if (starts({0xff, 0xd8, 0xff})) return "image/jpeg";
  if (starts({'R', 'I', 'F', 'F'}) && starts({'W', 'E', 'B', 'P'}, 8)) return "image/webp";
  if (starts({'f', 't', 'y', 'p'}, 4)) return "video/mp4";
  if (starts({'P', 'K', 3, 4})) return "application/zip";
  if (starts({'{'})) return "application/json";
  return "application/octet-stream";
}

FsStore::FsStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "blobs", ec);
  fs::create_directories(root_ / "sessions", ec);
  fs::create_directories(root_ / "tmp", ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create data root " + root_.string());
  auto version_file = root_ / "VERSION";
  if (fs::exists(version_file)) {
    auto text = trim(to_string(read_file(version_file.string())));
    if (text != std::to_string(kLayoutVersion)) {
      throw Error(ErrorKind::kConfig, "data root " + root_.string() +
                                          " has unsupported layout version " + text);
    }
  } else {
    write_file(version_file.string(), std::to_string(kLayoutVersion) + "\n");
  }
}

fs::path FsStore::blob_path(const std::string& hash) const {
  return root_ / "blobs" / hash.substr(0, 2) / hash.substr(2, 2) / hash;
}

fs::path FsStore::session_path(const std::string& id) const {
  return root_ / "sessions" / (id + ".json");
}

void FsStore::write_atomic(const fs::path& dest, std::span<const std::uint8_t> bytes) const {
  auto tmp = root_ / "tmp" / (random_id() + ".part");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot stage " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignore;
      fs::remove(tmp, ignore);
      throw Error(ErrorKind::kIo, "short write staging " + dest.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, dest, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::kIo, "cannot move blob into " + dest.string());
  }
}

BlobRef FsStore::put_blob(std::span<const std::uint8_t> bytes, std::string media_type) {
  BlobRef ref{sha256_hex(bytes), std::move(media_type), bytes.size()};
  auto path = blob_path(ref.hash);
  if (fs::exists(path)) return ref;
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + path.parent_path().string());
  // Concurrent puts of the same bytes race on rename(); both write identical
  // content so whichever lands last is equally valid.
  write_atomic(path, bytes);
  return ref;
}

std::vector<std::uint8_t> FsStore::get_blob(const std::string& hash) const {
  if (!is_hex_digest(hash)) throw Error(ErrorKind::kNotFound, "no blob " + hash);
  auto path = blob_path(hash);
  if (!fs::exists(path)) throw Error(ErrorKind::kNotFound, "no blob " + hash);
  auto bytes = read_file(path.string());
  if (sha256_hex(bytes) != hash) {
    throw Error(ErrorKind::kIntegrity, "blob " + hash + " fails digest verification");
  }
  return bytes;
}

std::vector<std::uint8_t> FsStore::get_blob(const BlobRef& ref) const {
  auto bytes = get_blob(ref.hash);
  if (bytes.size() != ref.byte_length) {
    throw Error(ErrorKind::kIntegrity, "blob " + ref.hash + " has unexpected length");
  }
  return bytes;
}

bool FsStore::has_blob(const std::string& hash) const {
  return is_hex_digest(hash) && fs::exists(blob_path(hash));
}

std::pair<std::size_t, std::uint64_t> FsStore::blob_usage() const {
  std::size_t count = 0;
  std::uint64_t bytes = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root_ / "blobs")) {
    if (entry.is_regular_file()) {
      ++count;
      bytes += entry.file_size();
    }
  }
  return {count, bytes};
}

std::mutex& FsStore::session_lock(const std::string& id) const {
  return session_locks_[stable_hash64(id) % session_locks_.size()];
}

void FsStore::save_session(const PipelineSession& session) {
  if (!is_session_id(session.id)) {
    throw Error(ErrorKind::kValidation, "invalid session id '" + session.id + "'");
  }
  auto text = json(session).dump(2);
  std::lock_guard lock(session_lock(session.id));
  write_atomic(session_path(session.id), to_bytes(text));
}

PipelineSession FsStore::load_session(const std::string& id) const {
  if (!is_session_id(id)) throw Error(ErrorKind::kNotFound, "no session " + id);
  auto path = session_path(id);
  std::vector<std::uint8_t> bytes;
  {
    std::lock_guard lock(session_lock(id));
    if (!fs::exists(path)) throw Error(ErrorKind::kNotFound, "no session " + id);
    bytes = read_file(path.string());
  }
  try {
    return json::parse(bytes).get<PipelineSession>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIntegrity, "session " + id + " is unreadable: " + e.what());
  }
}

SessionPage FsStore::list_sessions(std::size_t offset, std::size_t limit) const {
  std::vector<PipelineSession> all;
  for (const auto& entry : fs::directory_iterator(root_ / "sessions")) {
    if (entry.path().extension() != ".json") continue;
    all.push_back(load_session(entry.path().stem().string()));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.created_at != b.created_at) return a.created_at > b.created_at;
    return a.id < b.id;
  });
  SessionPage page;
  page.total = all.size();
  page.offset = offset;
  for (std::size_t i = offset; i < all.size() && page.sessions.size() < limit; ++i) {
    page.sessions.push_back(std::move(all[i]));
  }
  return page;
}

}  // namespace studio
