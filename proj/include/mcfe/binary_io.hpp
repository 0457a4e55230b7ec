#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "mcfe/errors.hpp"

namespace mcfe::io {

// Little-endian byte sink.
class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  const std::vector<char>& buffer() const { return buf_; }
  std::vector<char>& buffer() { return buf_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error("write failed: " + path.string());
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  std::vector<char> buf_;
};

// Little-endian byte source over an in-memory buffer. Every read names the
// section being parsed so truncation errors point at the missing part.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  static ByteReader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open for reading: " + path.string());
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data));
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }
  void skip(std::size_t n, const char* section) {
    need(n, section);
    pos_ += n;
  }

  std::string bytes(std::size_t n, const char* section) {
    need(n, section);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* section) { return static_cast<std::uint8_t>(get(1, section)); }
  std::uint16_t u16(const char* section) { return static_cast<std::uint16_t>(get(2, section)); }
  std::uint32_t u32(const char* section) { return static_cast<std::uint32_t>(get(4, section)); }
  std::uint64_t u64(const char* section) { return get(8, section); }
  std::int16_t i16(const char* section) { return static_cast<std::int16_t>(u16(section)); }
  float f32(const char* section) { return std::bit_cast<float>(u32(section)); }
  double f64(const char* section) { return std::bit_cast<double>(u64(section)); }

  void need(std::size_t n, const char* section) const {
    if (remaining() < n)
      throw FormatError(section, "truncated input: need " + std::to_string(n) + " bytes, have " +
                                     std::to_string(remaining()));
  }

 private:
  std::uint64_t get(int n, const char* section) {
    need(static_cast<std::size_t>(n), section);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::vector<char> data_;
  std::size_t pos_ = 0;
};

// Multiplies element counts, throwing on overflow or if the payload would
// exceed the `limit` bytes left in the input.
inline std::size_t checked_payload(std::initializer_list<std::uint64_t> dims, std::size_t elem_bytes,
                                   std::size_t limit, const char* section) {
  std::uint64_t total = elem_bytes;
  for (std::uint64_t d : dims) {
    if (d != 0 && total > UINT64_MAX / d) throw FormatError(section, "dimension overflow");
    total *= d;
  }
  if (total > limit)
    throw FormatError(section, "truncated input: header declares " + std::to_string(total) +
                                   " bytes but only " + std::to_string(limit) + " remain");
  return static_cast<std::size_t>(total);
}

}  // namespace mcfe::io
