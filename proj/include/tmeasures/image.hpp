#pragma once

#include <cstddef>
#include <vector>

#include "tmeasures/error.hpp"

namespace tmeasures {

/// Dense H×W×C image, channel-fastest.
template <typename T>
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<T> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, T fill = T{})
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  std::size_t index(std::size_t y, std::size_t x, std::size_t c) const { return (y * width + x) * channels + c; }
  T& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[index(y, x, c)]; }
  const T& at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[index(y, x, c)]; }

  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }

  bool operator==(const Image&) const = default;
};

using ImageF = Image<float>;

}  // namespace tmeasures
