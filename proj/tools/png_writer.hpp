#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "tmeasures/error.hpp"

namespace tm_tool {

namespace detail {

inline void put_u32_be(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out += static_cast<char>((v >> s) & 0xff);
}

inline void put_chunk(std::string& out, const char* type, const std::string& data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  const std::string body = std::string(type, 4) + data;
  out += body;
  put_u32_be(out, static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace detail

/// 8-bit grayscale (channels = 1) or RGB (channels = 3) PNG, rows top to bottom.
inline void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height, std::size_t channels,
                      const std::vector<std::uint8_t>& pixels) {
  if (channels != 1 && channels != 3) throw tmeasures::Error("invalid-argument", "PNG output supports 1 or 3 channels");
  if (pixels.size() != width * height * channels) throw tmeasures::Error("shape-error", "pixel buffer does not match the image size");

  std::string raw;
  raw.reserve(height * (width * channels + 1));
  for (std::size_t y = 0; y < height; ++y) {
    raw += '\0';  // filter: none
    raw.append(reinterpret_cast<const char*>(pixels.data() + y * width * channels), width * channels);
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(packed_size, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_size, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), Z_BEST_COMPRESSION) != Z_OK) {
    throw tmeasures::Error("write-error", "zlib compression failed");
  }
  packed.resize(packed_size);

  std::string ihdr;
  detail::put_u32_be(ihdr, static_cast<std::uint32_t>(width));
  detail::put_u32_be(ihdr, static_cast<std::uint32_t>(height));
  ihdr += static_cast<char>(8);                         // bit depth
  ihdr += static_cast<char>(channels == 1 ? 0 : 2);     // color type
  ihdr += std::string(3, '\0');                         // compression, filter, interlace

  std::string png = "\x89PNG\r\n\x1a\n";
  detail::put_chunk(png, "IHDR", ihdr);
  detail::put_chunk(png, "IDAT", packed);
  detail::put_chunk(png, "IEND", "");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw tmeasures::Error("write-error", "cannot create '" + path.string() + "'");
  out.write(png.data(), static_cast<std::streamsize>(png.size()));
  if (!out) throw tmeasures::Error("write-error", "failed writing '" + path.string() + "'");
}

}  // namespace tm_tool
