#include "studio/zip.hpp"

#include <zlib.h>

#include <limits>

#include "studio/errors.hpp"

namespace studio {

namespace {

constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

}  // namespace

void ZipWriter::add(const std::string& name, std::span<const std::uint8_t> data) {
  if (finished_) throw Error(ErrorKind::kIo, "zip archive already finished");
  if (data.size() > std::numeric_limits<std::uint32_t>::max() ||
      out_.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorKind::kIo, "zip entry too large for a non-zip64 archive");
  }
  Entry e{name, 0, static_cast<std::uint32_t>(data.size()), static_cast<std::uint32_t>(out_.size())};
  e.crc = static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), data.data(), static_cast<uInt>(data.size())));

  put32(out_, 0x04034b50);
  put16(out_, 20);  // version needed
  put16(out_, 0);   // flags
  put16(out_, 0);   // stored
  put16(out_, 0);   // time
  put16(out_, kDosDate);
  put32(out_, e.crc);
  put32(out_, e.size);
  put32(out_, e.size);
  put16(out_, static_cast<std::uint16_t>(name.size()));
  put16(out_, 0);
  out_.insert(out_.end(), name.begin(), name.end());
  out_.insert(out_.end(), data.begin(), data.end());
  entries_.push_back(std::move(e));
}

std::vector<std::uint8_t> ZipWriter::finish() {
  if (finished_) throw Error(ErrorKind::kIo, "zip archive already finished");
  finished_ = true;
  auto cd_offset = static_cast<std::uint32_t>(out_.size());
  for (const auto& e : entries_) {
    put32(out_, 0x02014b50);
    put16(out_, 20);  // made by
    put16(out_, 20);  // needed
    put16(out_, 0);
    put16(out_, 0);
    put16(out_, 0);
    put16(out_, kDosDate);
    put32(out_, e.crc);
    put32(out_, e.size);
    put32(out_, e.size);
    put16(out_, static_cast<std::uint16_t>(e.name.size()));
    put16(out_, 0);  // extra
    put16(out_, 0);  // comment
    put16(out_, 0);  // disk
    put16(out_, 0);  // internal attrs
    put32(out_, 0);  // external attrs
    put32(out_, e.offset);
    out_.insert(out_.end(), e.name.begin(), e.name.end());
  }
  auto cd_size = static_cast<std::uint32_t>(out_.size()) - cd_offset;
  put32(out_, 0x06054b50);
  put16(out_, 0);
  put16(out_, 0);
  put16(out_, static_cast<std::uint16_t>(entries_.size()));
  put16(out_, static_cast<std::uint16_t>(entries_.size()));
  put32(out_, cd_size);
  put32(out_, cd_offset);
  put16(out_, 0);
  return std::move(out_);
}

}  // namespace studio
