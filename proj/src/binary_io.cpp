#include "turneval/binary_io.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "turneval/errors.hpp"

namespace turneval {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

Sha256Digest sha256(std::span<const std::uint8_t> bytes) {
  Sha256Digest out{};
  SHA256(bytes.data(), bytes.size(), out.data());
  return out;
}

Sha256Digest sha256(std::string_view text) {
  return sha256(std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                          text.size()));
}

std::string to_hex(const Sha256Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes) {
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

}  // namespace

void ByteWriter::u32(std::uint32_t v) { put(bytes_, v); }
void ByteWriter::u64(std::uint64_t v) { put(bytes_, v); }
void ByteWriter::f32(float v) { put(bytes_, v); }
void ByteWriter::f64(double v) { put(bytes_, v); }

void ByteWriter::raw(std::span<const std::uint8_t> data) {
  bytes_.insert(bytes_.end(), data.begin(), data.end());
}

void ByteWriter::string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes_.insert(bytes_.end(), s.begin(), s.end());
}

void ByteWriter::append_checksum() {
  const auto digest = sha256(std::span<const std::uint8_t>(bytes_));
  raw(digest);
}

void ByteWriter::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes_.data()),
            static_cast<std::streamsize>(bytes_.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
  if (n > remaining()) {
    throw CorruptFileError("unexpected end of data at offset " +
                           std::to_string(pos_));
  }
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t ByteReader::u8() { return take(1)[0]; }
std::uint32_t ByteReader::u32() { return get<std::uint32_t>(take(4)); }
std::uint64_t ByteReader::u64() { return get<std::uint64_t>(take(8)); }
float ByteReader::f32() { return get<float>(take(4)); }
double ByteReader::f64() { return get<double>(take(8)); }

std::string ByteReader::string() {
  const auto n = u32();
  auto bytes = take(n);
  return std::string(bytes.begin(), bytes.end());
}

void ByteReader::skip(std::size_t n) { take(n); }

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::span<const std::uint8_t> verify_checksum(std::span<const std::uint8_t> file) {
  if (file.size() < 32) throw CorruptFileError("file too short for checksum");
  auto body = file.first(file.size() - 32);
  const auto expected = sha256(body);
  if (std::memcmp(expected.data(), file.data() + body.size(), 32) != 0) {
    throw CorruptFileError("checksum mismatch");
  }
  return body;
}

}  // namespace turneval
