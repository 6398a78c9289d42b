#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace studio {

using Clock = std::chrono::system_clock;
using Timestamp = std::chrono::time_point<Clock, std::chrono::microseconds>;

/// Random 128-bit identifier rendered as 32 lowercase hex characters.
std::string random_id();

/// SHA-256 of `bytes` as 64 lowercase hex characters.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

/// First 8 bytes of SHA-256 over `text`, big-endian. Stable across
/// processes and platforms, unlike std::hash.
std::uint64_t stable_hash64(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// RFC 3339 UTC with microsecond precision, e.g. 2026-10-16T12:00:00.000001Z.
std::string format_rfc3339(Timestamp ts);
Timestamp parse_rfc3339(std::string_view text);

/// Wall clock, strictly increasing within a process.
Timestamp monotonic_now();

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);

/// Lowercase, replace every non-alphanumeric byte with a space, collapse
/// runs of whitespace, and trim. Apostrophes are dropped rather than
/// spaced so "Newton's" normalizes to "newtons".
std::string normalize_text(std::string_view text);

/// Tokens of normalize_text(text).
std::vector<std::string> tokenize(std::string_view text);

std::vector<std::uint8_t> to_bytes(std::string_view text);
std::string to_string(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
void write_file(const std::string& path, std::string_view text);

}  // namespace studio
