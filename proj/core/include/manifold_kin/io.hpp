#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "manifold_kin/errors.hpp"

namespace mkin {

/// Little-endian binary buffer writer with a running CRC32.
/// All multi-byte values are written explicitly byte by byte so the
/// on-disk layout does not depend on host endianness.
class BinaryWriter {
public:
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(const void* data, std::size_t size);
  void str(const std::string& s);  // u32 length + raw bytes

  /// CRC32 (zlib polynomial) of everything written so far.
  std::uint32_t crc() const;

  const std::vector<std::uint8_t>& buffer() const { return buf_; }

  /// Writes the buffer to `path`, replacing any existing file.
  void save(const std::filesystem::path& path) const;

private:
  std::vector<std::uint8_t> buf_;
};

/// Reader matching BinaryWriter. Throws FormatError on truncation.
class BinaryReader {
public:
  explicit BinaryReader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}

  static BinaryReader from_file(const std::filesystem::path& path);

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  void bytes(void* out, std::size_t size);
  std::string str();

  std::size_t offset() const { return pos_; }
  std::size_t size() const { return buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }

  void seek(std::size_t pos) {
    if (pos > buf_.size()) throw FormatError("seek past end of buffer");
    pos_ = pos;
  }

  /// CRC32 of buf_[0, end) (typically everything before the stored checksum).
  std::uint32_t crc_of_prefix(std::size_t end) const;

private:
  void need(std::size_t n) const;

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

/// Minimal CSV emitter: quoting is never needed for the numeric /
/// identifier content this library writes.
class CsvWriter {
public:
  explicit CsvWriter(std::vector<std::string> header);

  void row(const std::vector<std::string>& cells);
  void save(const std::filesystem::path& path) const;
  const std::string& content() const { return out_; }

private:
  std::string out_;
  std::size_t columns_;
};

/// Shortest round-trip decimal form of a double ("%.17g" trimmed).
std::string format_double(double v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace mkin
