#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "scenecomp/common.hpp"

namespace scenecomp::io {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; byte-swapped hosts are not supported");

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) SC_THROW(Error, "cannot open for write: " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) SC_THROW(Error, "write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) SC_THROW(LoadError, "cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return bytes;
}

// Append-only little-endian byte sink.
class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(uint16_t v) { raw(&v, 2); }
  void u32(uint32_t v) { raw(&v, 4); }
  void u64(uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void raw(const void* p, size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

// Bounds-checked little-endian reader over a byte string.
class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : buf_(bytes) {}
  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint16_t u16() { uint16_t v; std::memcpy(&v, take(2), 2); return v; }
  uint32_t u32() { uint32_t v; std::memcpy(&v, take(4), 4); return v; }
  uint64_t u64() { uint64_t v; std::memcpy(&v, take(8), 8); return v; }
  float f32() { float v; std::memcpy(&v, take(4), 4); return v; }
  double f64() { double v; std::memcpy(&v, take(8), 8); return v; }
  std::string str() {
    uint32_t n = u32();
    return std::string(take(n), n);
  }
  void raw(void* p, size_t n) { std::memcpy(p, take(n), n); }
  size_t offset() const { return pos_; }
  size_t remaining() const { return buf_.size() - pos_; }
  bool exhausted() const { return pos_ == buf_.size(); }

 private:
  const char* take(size_t n) {
    if (pos_ + n > buf_.size()) SC_THROW(LoadError, "truncated input (needed " + std::to_string(n) + " bytes)");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  const std::string& buf_;
  size_t pos_ = 0;
};

inline void write_f32_array(ByteWriter& w, const std::vector<float>& v) {
  w.raw(v.data(), v.size() * sizeof(float));
}

inline std::vector<float> doubles_to_f32(const std::vector<double>& v) {
  std::vector<float> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

}  // namespace scenecomp::io
