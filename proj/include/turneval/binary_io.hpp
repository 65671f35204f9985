#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace turneval {

using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest sha256(std::span<const std::uint8_t> bytes);
Sha256Digest sha256(std::string_view text);
std::string to_hex(const Sha256Digest& digest);

/// Little-endian append-only byte buffer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void raw(std::span<const std::uint8_t> data);
  void string(std::string_view s);  // u32 length prefix

  /// Appends the SHA-256 of everything written so far.
  void append_checksum();
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  void write_file(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; running off the end throws
/// CorruptFileError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string string();
  void skip(std::size_t n);

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> take(std::size_t n);

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Verifies and strips a trailing SHA-256; throws CorruptFileError on mismatch.
std::span<const std::uint8_t> verify_checksum(std::span<const std::uint8_t> file);

}  // namespace turneval
