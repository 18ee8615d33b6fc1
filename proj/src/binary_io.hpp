#pragma once

// Little-endian byte buffers shared by the cache, codebook and model formats.

#include "birdfl/common.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

namespace birdfl::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_arithmetic_v<T>);
    const auto* p = reinterpret_cast<const char*>(&value);
    buf_.append(p, sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    buf_.append(static_cast<const char*>(data), n);
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  // Doubles are narrowed to float32 on the wire.
  template <typename Range>
  void put_floats(const Range& values) {
    for (double v : values) put<float>(static_cast<float>(v));
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  template <typename T>
  T get() {
    static_assert(std::is_arithmetic_v<T>);
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_magic(const char (&magic)[5]) {
    need(4);
    if (std::memcmp(data_.data() + pos_, magic, 4) != 0) {
      throw IoError("'" + source_ + "': bad magic, expected " + std::string(magic, 4));
    }
    pos_ += 4;
  }
  std::vector<double> get_floats(std::size_t n) {
    need(n * sizeof(float));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, data_.data() + pos_ + i * sizeof(float), sizeof(float));
      out[i] = f;
    }
    pos_ += n * sizeof(float);
    return out;
  }
  bool at_end() const { return pos_ == data_.size(); }
  const std::string& source() const { return source_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw IoError("'" + source_ + "': truncated file");
  }
  std::string data_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file, then renames over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

}  // namespace birdfl::detail
