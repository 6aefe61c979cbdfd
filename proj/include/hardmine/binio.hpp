#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

#include "hardmine/errors.hpp"

namespace hardmine::binio {

// Little-endian append/consume helpers shared by the dataset and snapshot
// formats.

inline void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(static_cast<const char*>(p), n);
}

inline void put_u8(std::string& out, uint8_t v) { put_bytes(out, &v, 1); }

inline void put_u16(std::string& out, uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.append(b, 2);
}

inline void put_u32(std::string& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.append(b, 4);
}

inline void put_u64(std::string& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.append(b, 8);
}

inline void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<uint32_t>(v));
}

inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<uint64_t>(v));
}

class Reader {
 public:
  Reader(std::string data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  // Location string used in parse errors, e.g. "scene record 3".
  void set_context(std::string ctx) { context_ = std::move(ctx); }

  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(data_[pos_++]);
  }

  uint16_t u16() {
    need(2);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i)
      v |= static_cast<uint16_t>(static_cast<uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 2;
    return v;
  }

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<uint64_t>(static_cast<uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string bytes(size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  size_t remaining() const { return data_.size() - pos_; }

  void expect_done() {
    if (pos_ != data_.size())
      throw ParseError(source_ + ": " + std::to_string(remaining()) +
                       " trailing bytes after " + context_);
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(source_ + ": " + what + " in " + context_ + " (offset " +
                     std::to_string(pos_) + ")");
  }

 private:
  void need(size_t n) {
    if (data_.size() - pos_ < n) fail("unexpected end of file");
  }

  std::string data_;
  std::string source_;
  std::string context_ = "header";
  size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& data);

}  // namespace hardmine::binio
