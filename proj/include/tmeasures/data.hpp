#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tmeasures/binary_io.hpp"
#include "tmeasures/core.hpp"
#include "tmeasures/error.hpp"
#include "tmeasures/image.hpp"

namespace tmeasures {

/// n images of H×W×C 8-bit pixels, immutable after load.
struct Dataset {
  std::string name;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;

  std::size_t size() const {
    const std::size_t per = image_size();
    return per == 0 ? 0 : pixels.size() / per;
  }
  std::size_t image_size() const { return height * width * channels; }

  /// Image i scaled to [0, 1].
  ImageF image(std::size_t i) const {
    ImageF img(height, width, channels);
    const std::size_t per = image_size();
    for (std::size_t p = 0; p < per; ++p) img.pixels[p] = static_cast<float>(pixels[i * per + p]) / 255.0f;
    return img;
  }

  /// The first n samples.
  Dataset head(std::size_t n) const {
    if (n > size()) throw Error("invalid-argument", "requested " + std::to_string(n) + " samples from a dataset of " + std::to_string(size()));
    Dataset out{name, height, width, channels, {}, {}};
    out.pixels.assign(pixels.begin(), pixels.begin() + static_cast<std::ptrdiff_t>(n * image_size()));
    if (!labels.empty()) out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  bool operator==(const Dataset&) const = default;
};

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io-error", "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// MNIST IDX
// ---------------------------------------------------------------------------

/// Parses an IDX3 image file (magic 0x00000803) and, when given, the matching
/// IDX1 label file (magic 0x00000801).
inline Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path = {}) {
  const auto bytes = detail::read_file_bytes(images_path);
  if (bytes.size() < 16) throw Error("truncated-file", "IDX image header in '" + images_path.string() + "'");
  const std::uint32_t magic = io::load_u32_be(bytes.data());
  if (magic != 0x00000803u) throw Error("format-error", "bad IDX image magic in '" + images_path.string() + "'");
  const std::size_t n = io::load_u32_be(bytes.data() + 4);
  const std::size_t rows = io::load_u32_be(bytes.data() + 8);
  const std::size_t cols = io::load_u32_be(bytes.data() + 12);
  if (n == 0 || rows == 0 || cols == 0) throw Error("format-error", "empty IDX image dimensions");
  if (bytes.size() < 16 + n * rows * cols) throw Error("truncated-file", "IDX image payload in '" + images_path.string() + "'");

  Dataset ds;
  ds.name = "mnist";
  ds.height = rows;
  ds.width = cols;
  ds.channels = 1;
  ds.pixels.assign(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(16 + n * rows * cols));

  if (!labels_path.empty()) {
    const auto lb = detail::read_file_bytes(labels_path);
    if (lb.size() < 8) throw Error("truncated-file", "IDX label header in '" + labels_path.string() + "'");
    if (io::load_u32_be(lb.data()) != 0x00000801u) throw Error("format-error", "bad IDX label magic in '" + labels_path.string() + "'");
    const std::size_t count = io::load_u32_be(lb.data() + 4);
    if (count != n) throw Error("format-error", "label count does not match image count");
    if (lb.size() < 8 + count) throw Error("truncated-file", "IDX label payload in '" + labels_path.string() + "'");
    ds.labels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) ds.labels.push_back(lb[8 + i]);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary
// ---------------------------------------------------------------------------

/// Reads a CIFAR-10 binary batch: records of one label byte followed by
/// 3×1024 channel-planar pixel bytes. A directory argument loads
/// test_batch.bin from it (or from its cifar-10-batches-bin/ child).
inline Dataset load_cifar10_binary(const std::filesystem::path& path) {
  constexpr std::size_t side = 32;
  constexpr std::size_t plane = side * side;
  constexpr std::size_t record = 1 + 3 * plane;

  std::filesystem::path file = path;
  if (std::filesystem::is_directory(path)) {
    file = path / "test_batch.bin";
    if (!std::filesystem::exists(file)) file = path / "cifar-10-batches-bin" / "test_batch.bin";
  }
  const auto bytes = detail::read_file_bytes(file);
  if (bytes.empty() || bytes.size() % record != 0) {
    throw Error("format-error", "CIFAR-10 file size " + std::to_string(bytes.size()) + " is not a multiple of 3073");
  }
  const std::size_t n = bytes.size() / record;
  Dataset ds;
  ds.name = "cifar10";
  ds.height = side;
  ds.width = side;
  ds.channels = 3;
  ds.pixels.resize(n * plane * 3);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * record;
    ds.labels[i] = rec[0];
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < plane; ++p) ds.pixels[(i * plane + p) * 3 + c] = rec[1 + c * plane + p];
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic images
// ---------------------------------------------------------------------------

/// Seeded images mixing a random linear gradient, a few Gaussian blobs and
/// pixel noise.
inline Dataset synthetic_dataset(std::size_t n, std::size_t height, std::size_t width, std::size_t channels,
                                 std::uint64_t seed) {
  if (n == 0) throw Error("empty-dataset", "synthetic dataset needs at least one sample");
  if (height < 2 || width < 2 || channels < 1) throw Error("invalid-argument", "synthetic images must be at least 2×2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.04);

  Dataset ds;
  ds.name = "synthetic";
  ds.height = height;
  ds.width = width;
  ds.channels = channels;
  ds.pixels.resize(n * height * width * channels);
  ds.labels.resize(n);
  std::vector<double> field(height * width);
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = static_cast<int>(i % 10);
    for (std::size_t c = 0; c < channels; ++c) {
      const double angle = unit(rng) * 2.0 * 3.141592653589793;
      const double gain = 0.2 + 0.4 * unit(rng);
      const double base = 0.1 + 0.3 * unit(rng);
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const double u = static_cast<double>(x) / static_cast<double>(width - 1) - 0.5;
          const double v = static_cast<double>(y) / static_cast<double>(height - 1) - 0.5;
          field[y * width + x] = base + gain * (u * std::cos(angle) + v * std::sin(angle));
        }
      }
      const int blobs = 1 + static_cast<int>(unit(rng) * 3.0);
      for (int b = 0; b < blobs; ++b) {
        const double by = unit(rng) * static_cast<double>(height);
        const double bx = unit(rng) * static_cast<double>(width);
        const double radius = (0.08 + 0.2 * unit(rng)) * static_cast<double>(std::min(height, width));
        const double amp = 0.3 + 0.5 * unit(rng);
        for (std::size_t y = 0; y < height; ++y) {
          for (std::size_t x = 0; x < width; ++x) {
            const double d2 = (static_cast<double>(y) - by) * (static_cast<double>(y) - by) +
                              (static_cast<double>(x) - bx) * (static_cast<double>(x) - bx);
            field[y * width + x] += amp * std::exp(-d2 / (2.0 * radius * radius));
          }
        }
      }
      for (std::size_t p = 0; p < height * width; ++p) {
        const double value = std::clamp(field[p] + noise(rng), 0.0, 1.0);
        ds.pixels[(i * height * width + p) * channels + c] = static_cast<std::uint8_t>(std::lround(value * 255.0));
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Batch plans
// ---------------------------------------------------------------------------

enum class PassOrder { sample_major, transformation_major };

inline const char* to_string(PassOrder order) {
  return order == PassOrder::sample_major ? "sample_major" : "transformation_major";
}

inline PassOrder parse_pass_order(const std::string& s) {
  if (s == "sample_major") return PassOrder::sample_major;
  if (s == "transformation_major") return PassOrder::transformation_major;
  throw Error("format-error", "unknown record order '" + s + "'");
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Visiting order of one axis line for a given pass: pass 0 is the natural
/// order, later passes are seeded shuffles.
inline std::vector<std::size_t> axis_order(std::size_t length, std::size_t pass, std::size_t line, std::uint64_t seed) {
  std::vector<std::size_t> order(length);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (pass > 0) {
    std::mt19937_64 rng(mix_seed(mix_seed(seed, pass), line));
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

/// A batch of cells split into blocks; pairs are only formed within a block.
struct Batch {
  std::vector<Cell> cells;
  std::vector<std::size_t> block_starts;  // plus cells.size() as sentinel

  std::size_t block_count() const { return block_starts.size() - 1; }
};

/// Enumerates every (sample, transformation) pair once. Each line (a row in
/// sample-major order, a column in transformation-major order) is split into
/// blocks of at most batch_size cells, and whole blocks are packed into
/// batches of at most batch_size cells.
struct BatchPlan {
  std::size_t sample_count = 0;
  std::size_t transformation_count = 0;
  std::size_t batch_size = 1;
  PassOrder order = PassOrder::sample_major;
  std::size_t pass = 0;
  std::uint64_t seed = 0;

  template <typename Sink>
  void for_each_batch(Sink&& sink) const {
    if (batch_size == 0) throw Error("batch-too-small", "batch size must be positive");
    const bool rows = order == PassOrder::sample_major;
    const std::size_t lines = rows ? sample_count : transformation_count;
    const std::size_t length = rows ? transformation_count : sample_count;
    const std::size_t block = std::min(batch_size, length);
    Batch batch;
    batch.block_starts.push_back(0);
    auto flush = [&] {
      if (batch.cells.empty()) return;
      sink(static_cast<const Batch&>(batch));
      batch.cells.clear();
      batch.block_starts.assign(1, 0);
    };
    for (std::size_t line = 0; line < lines; ++line) {
      const auto along = axis_order(length, pass, line, seed);
      for (std::size_t start = 0; start < length; start += block) {
        const std::size_t end = std::min(start + block, length);
        if (batch.cells.size() + (end - start) > batch_size) flush();
        for (std::size_t p = start; p < end; ++p) {
          batch.cells.push_back(rows ? Cell{line, along[p]} : Cell{along[p], line});
        }
        batch.block_starts.push_back(batch.cells.size());
      }
    }
    flush();
  }
};

}  // namespace tmeasures
