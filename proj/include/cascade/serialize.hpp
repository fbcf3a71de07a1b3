#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "cascade/error.hpp"

namespace cascade::io {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts need byte swaps");

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u8(std::ostream& os, std::uint8_t v) { write_bytes(os, &v, 1); }
inline void write_u16(std::ostream& os, std::uint16_t v) { write_bytes(os, &v, 2); }
inline void write_u32(std::ostream& os, std::uint32_t v) { write_bytes(os, &v, 4); }
inline void write_u64(std::ostream& os, std::uint64_t v) { write_bytes(os, &v, 8); }
inline void write_i32(std::ostream& os, std::int32_t v) { write_bytes(os, &v, 4); }
inline void write_f32(std::ostream& os, float v) { write_bytes(os, &v, 4); }
inline void write_f64(std::ostream& os, double v) { write_bytes(os, &v, 8); }

inline void write_f64_block(std::ostream& os, std::span<const double> v) {
  write_bytes(os, v.data(), v.size() * sizeof(double));
}

/// Reader that reports the byte offset of the first bad read.
class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::size_t offset() const { return offset_; }

  void read_bytes(void* p, std::size_t n, const char* what) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw FormatError(std::string("truncated file: expected ") + what +
                        " at byte offset " + std::to_string(offset_));
    }
    offset_ += n;
  }

  std::uint8_t read_u8(const char* what) {
    std::uint8_t v;
    read_bytes(&v, 1, what);
    return v;
  }
  std::uint16_t read_u16(const char* what) {
    std::uint16_t v;
    read_bytes(&v, 2, what);
    return v;
  }
  std::uint32_t read_u32(const char* what) {
    std::uint32_t v;
    read_bytes(&v, 4, what);
    return v;
  }
  std::uint64_t read_u64(const char* what) {
    std::uint64_t v;
    read_bytes(&v, 8, what);
    return v;
  }
  std::int32_t read_i32(const char* what) {
    std::int32_t v;
    read_bytes(&v, 4, what);
    return v;
  }
  float read_f32(const char* what) {
    float v;
    read_bytes(&v, 4, what);
    return v;
  }
  void read_f64_block(std::span<double> out, const char* what) {
    read_bytes(out.data(), out.size() * sizeof(double), what);
  }

  void expect_magic(const char magic[4], const char* format_name) {
    char buf[4];
    read_bytes(buf, 4, "magic");
    if (std::memcmp(buf, magic, 4) != 0) {
      throw FormatError(std::string("bad magic for ") + format_name +
                        " at byte offset 0");
    }
  }

  bool at_eof() {
    is_.peek();
    return is_.eof();
  }

 private:
  std::istream& is_;
  std::size_t offset_ = 0;
};

}  // namespace cascade::io
