#pragma once

// Little-endian byte encoding shared by the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ultra/error.hpp"

namespace ultra::io {

class ByteWriter {
 public:
  template <typename T>
  void put_uint(T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
  }
  void put_u16(std::uint16_t v) { put_uint(v); }
  void put_u32(std::uint32_t v) { put_uint(v); }
  void put_u64(std::uint64_t v) { put_uint(v); }
  void put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }
  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  void need(std::size_t n, std::string_view what) const {
    if (remaining() < n) {
      throw ParseError(context_ + ": truncated while reading " + std::string(what), pos_);
    }
  }

  template <typename T>
  T get_uint(std::string_view what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return v;
  }
  std::uint16_t get_u16(std::string_view what) { return get_uint<std::uint16_t>(what); }
  std::uint32_t get_u32(std::string_view what) { return get_uint<std::uint32_t>(what); }
  std::uint64_t get_u64(std::string_view what) { return get_uint<std::uint64_t>(what); }
  float get_f32(std::string_view what) { return std::bit_cast<float>(get_u32(what)); }
  double get_f64(std::string_view what) { return std::bit_cast<double>(get_u64(what)); }

  std::string get_string(std::size_t n, std::string_view what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  [[noreturn]] void fail(const std::string& what, std::size_t at) const {
    throw ParseError(context_ + ": " + what, at);
  }

  const std::string& context() const noexcept { return context_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string context_;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);
void write_text(const std::string& path, std::string_view text);

}  // namespace ultra::io
