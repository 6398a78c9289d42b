#pragma once

// Persistence for sessions and content-addressed blobs.
//
// On-disk layout (version 1) under the data root:
//   VERSION                      "1"
//   blobs/<h0h1>/<h2h3>/<hash>   raw bytes, named by SHA-256
//   sessions/<id>.json           one session document per file
//   tmp/                         staging area for atomic renames
//
// Writes go to tmp/ and are renamed into place, so a crash mid-write never
// leaves a half-written readable file. Every blob read re-hashes the bytes.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "studio/domain.hpp"

namespace studio {

struct SessionPage {
  std::vector<PipelineSession> sessions;  // newest first
  std::size_t offset = 0;
  std::size_t total = 0;
};

class Store {
 public:
  virtual ~Store() = default;

  virtual BlobRef put_blob(std::span<const std::uint8_t> bytes,
                           std::string media_type) = 0;
  virtual std::vector<std::uint8_t> get_blob(const BlobRef& ref) const = 0;
  virtual std::vector<std::uint8_t> get_blob(const std::string& hash) const = 0;
  virtual bool has_blob(const std::string& hash) const = 0;

  virtual void save_session(const PipelineSession& session) = 0;
  virtual PipelineSession load_session(const std::string& id) const = 0;
  virtual SessionPage list_sessions(std::size_t offset, std::size_t limit) const = 0;
};

class FsStore final : public Store {
 public:
  static constexpr int kLayoutVersion = 1;

  explicit FsStore(std::filesystem::path root);

  BlobRef put_blob(std::span<const std::uint8_t> bytes, std::string media_type) override;
  std::vector<std::uint8_t> get_blob(const BlobRef& ref) const override;
  std::vector<std::uint8_t> get_blob(const std::string& hash) const override;
  bool has_blob(const std::string& hash) const override;

  void save_session(const PipelineSession& session) override;
  PipelineSession load_session(const std::string& id) const override;
  SessionPage list_sessions(std::size_t offset, std::size_t limit) const override;

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path blob_path(const std::string& hash) const;
  std::filesystem::path session_path(const std::string& id) const;

  /// Number of blob files and their total size; used for dedup checks.
  std::pair<std::size_t, std::uint64_t> blob_usage() const;

 private:
  void write_atomic(const std::filesystem::path& dest,
                    std::span<const std::uint8_t> bytes) const;
  std::mutex& session_lock(const std::string& id) const;

  std::filesystem::path root_;
  mutable std::array<std::mutex, 16> session_locks_;
};

/// Media type guessed from magic bytes; application/octet-stream otherwise.
std::string sniff_media_type(std::span<const std::uint8_t> bytes);

bool is_hex_digest(std::string_view s);

}  // namespace studio
