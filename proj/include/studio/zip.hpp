#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace studio {

/// Minimal writer for an uncompressed ("stored") zip archive. Entries carry
/// a fixed 1980-01-01 timestamp so identical input gives identical bytes.
class ZipWriter {
 public:
  void add(const std::string& name, std::span<const std::uint8_t> data);
  std::vector<std::uint8_t> finish();

 private:
  struct Entry {
    std::string name;
    std::uint32_t crc = 0;
    std::uint32_t size = 0;
    std::uint32_t offset = 0;
  };
  std::vector<Entry> entries_;
  std::vector<std::uint8_t> out_;
  bool finished_ = false;
};

}  // namespace studio
