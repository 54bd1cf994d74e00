#pragma once

// Little-endian byte encoding shared by the RFNN, RFDS and RFAT file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>

#include <boost/crc.hpp>

#include "rfadv/error.hpp"

namespace rfadv::io {

inline std::uint32_t crc32(std::string_view bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

class ByteWriter {
 public:
  void raw(std::string_view bytes) { buf_.append(bytes); }

  template <typename U>
  void uint(U value) {
    static_assert(std::is_unsigned_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<char>((value >> (8 * i)) & 0xffu));
    }
  }

  void u8(std::uint8_t v) { uint(v); }
  void u16(std::uint16_t v) { uint(v); }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void i16(std::int16_t v) { uint(static_cast<std::uint16_t>(v)); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

  void f32s(std::span<const float> values) {
    buf_.reserve(buf_.size() + 4 * values.size());
    for (float v : values) f32(v);
  }

  void str16(std::string_view s) {
    if (s.size() > 0xffff) throw FormatError("string too long for u16 length prefix");
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }

  void str32(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }

  /// Appends the CRC32 of everything written so far.
  void seal() { u32(crc32(buf_)); }

  const std::string& bytes() const noexcept { return buf_; }
  std::string take() noexcept { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes, std::string_view what = "file")
      : bytes_(bytes), what_(what) {}

  /// Checks and strips the trailing CRC32. Call before reading fields.
  void verify_crc() {
    if (bytes_.size() < 4) fail("too short for checksum");
    const std::string_view body = bytes_.substr(0, bytes_.size() - 4);
    ByteReader tail(bytes_.substr(bytes_.size() - 4), what_);
    if (tail.u32() != crc32(body)) fail("checksum mismatch");
    bytes_ = body;
  }

  std::string_view raw(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename U>
  U uint() {
    need(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return value;
  }

  std::uint8_t u8() { return uint<std::uint8_t>(); }
  std::uint16_t u16() { return uint<std::uint16_t>(); }
  std::uint32_t u32() { return uint<std::uint32_t>(); }
  std::uint64_t u64() { return uint<std::uint64_t>(); }
  std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  void f32s(std::span<float> out) {
    need(4 * out.size());
    for (float& v : out) v = f32();
  }

  std::string str16() { return std::string(raw(u16())); }
  std::string str32() { return std::string(raw(u32())); }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void expect_end() {
    if (remaining() != 0) fail(std::to_string(remaining()) + " trailing bytes");
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError(std::string(what_) + ": " + why);
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string_view what_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace rfadv::io
