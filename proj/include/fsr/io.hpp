#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "fsr/tensor.hpp"

namespace fsr {

/// Malformed binary input; the message carries the source name and byte offset.
class ParseError : public Error {
 public:
  using Error::Error;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

/// Little-endian append-only byte buffer.
class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(char((v >> (8 * i)) & 0xFF));
  }
  void f32s(std::span<const float> values) {
    for (float v : values) u32(std::bit_cast<std::uint32_t>(v));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

/// Little-endian cursor; every short read raises ParseError naming the offset.
class ByteReader {
 public:
  ByteReader(const std::string& data, std::string origin) : data_(data), origin_(std::move(origin)) {}

  bool done() const { return pos_ >= data_.size(); }
  std::size_t offset() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(origin_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

  void bytes(void* dst, std::size_t n) {
    need(n);
    data_.copy(static_cast<char*>(dst), n, pos_);
    pos_ += n;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  void f32s(std::span<float> out) {
    need(out.size() * 4);
    for (float& v : out) v = std::bit_cast<float>(u32());
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      fail("truncated input (needed " + std::to_string(n) + " bytes, " + std::to_string(data_.size() - pos_) +
           " left)");
    }
  }

  const std::string& data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace fsr
