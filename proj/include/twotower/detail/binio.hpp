#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "twotower/common.hpp"

namespace twotower::detail {

// Little-endian framing for checkpoint and index files. Writes go to a
// temporary file that is renamed into place so readers never observe a
// partial file.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path)
      : path_(path), tmp_(path + ".tmp"), out_(tmp_, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + tmp_);
  }

  void u8(std::uint8_t v) { raw(&v, 1); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void i64(std::int64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void f32_array(const float* data, std::size_t count) { raw(data, count * 4); }

  void commit() {
    out_.flush();
    if (!out_) throw IoError("write failed for " + tmp_);
    out_.close();
    std::filesystem::rename(tmp_, path_);
  }

 private:
  void raw(const void* data, std::size_t size) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  }

  std::string path_;
  std::string tmp_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path);
  }

  std::uint8_t u8() { return read<std::uint8_t>(); }
  std::uint32_t u32() { return read<std::uint32_t>(); }
  std::uint64_t u64() { return read<std::uint64_t>(); }
  std::int64_t i64() { return read<std::int64_t>(); }
  float f32() { return read<float>(); }
  double f64() { return read<double>(); }
  std::string string() {
    std::uint32_t len = u32();
    if (len > (1u << 28)) throw ParseError(path_ + ": implausible string length");
    std::string s(len, '\0');
    raw(s.data(), len);
    return s;
  }
  void f32_array(float* data, std::size_t count) { raw(data, count * 4); }

 private:
  template <typename T>
  T read() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void raw(void* data, std::size_t size) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
    if (!in_) throw ParseError(path_ + ": truncated file");
  }

  std::string path_;
  std::ifstream in_;
};

}  // namespace twotower::detail
