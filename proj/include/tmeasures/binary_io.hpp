#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tmeasures/error.hpp"

namespace tmeasures::io {

inline std::uint32_t load_u32_be(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

inline std::uint32_t load_u32_le(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

inline std::uint64_t load_u64_le(const unsigned char* p) {
  return std::uint64_t{load_u32_le(p)} | (std::uint64_t{load_u32_le(p + 4)} << 32);
}

inline float load_f32_le(const unsigned char* p) { return std::bit_cast<float>(load_u32_le(p)); }

inline void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void append_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void append_f32_le(std::string& out, float v) { append_u32_le(out, std::bit_cast<std::uint32_t>(v)); }

// Reads exactly `count` bytes or throws truncated-file.
inline void read_exact(std::istream& in, unsigned char* dst, std::size_t count, const std::string& what) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) {
    throw Error("truncated-file", what);
  }
}

// Decodes little-endian f32 values into doubles.
inline void decode_f32_le(std::span<const unsigned char> bytes, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(load_f32_le(bytes.data() + 4 * i));
  }
}

}  // namespace tmeasures::io
