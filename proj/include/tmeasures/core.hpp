#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "tmeasures/error.hpp"

namespace tmeasures {

// ---------------------------------------------------------------------------
// Activation manifest
// ---------------------------------------------------------------------------

enum class ActivationKind { scalar_vector, feature_map };

inline const char* to_string(ActivationKind kind) {
  return kind == ActivationKind::feature_map ? "feature-map" : "scalar-vector";
}

inline ActivationKind parse_activation_kind(const std::string& s) {
  if (s == "feature-map") return ActivationKind::feature_map;
  if (s == "scalar-vector") return ActivationKind::scalar_vector;
  throw Error("format-error", "unknown activation kind '" + s + "'");
}

/// One tapped tensor of the network. Feature maps have shape [H, W, C] and are
/// stored channel-fastest (HWC) inside a record.
struct ManifestEntry {
  std::string name;
  std::size_t layer_index = 0;
  std::vector<std::size_t> shape;
  ActivationKind kind = ActivationKind::scalar_vector;

  std::size_t size() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
  }

  /// Number of reported units: channels for a feature map, elements otherwise.
  std::size_t unit_count() const { return kind == ActivationKind::feature_map ? shape[2] : size(); }

  /// Spatial cells per unit (H·W for feature maps, 1 otherwise).
  std::size_t cells_per_unit() const { return kind == ActivationKind::feature_map ? shape[0] * shape[1] : 1; }

  bool operator==(const ManifestEntry&) const = default;
};

/// Scalar activation index of a (unit, cell) pair inside one entry, relative
/// to the entry's offset.
inline std::size_t cell_index(const ManifestEntry& entry, std::size_t unit, std::size_t cell) {
  if (entry.kind == ActivationKind::feature_map) return cell * entry.shape[2] + unit;
  return unit;
}

class ActivationManifest {
 public:
  ActivationManifest() = default;
  explicit ActivationManifest(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {
    validate();
    offsets_.reserve(entries_.size());
    std::size_t offset = 0;
    for (const auto& e : entries_) {
      offsets_.push_back(offset);
      offset += e.size();
    }
    total_ = offset;
  }

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const ManifestEntry& operator[](std::size_t i) const { return entries_[i]; }

  /// Offset of entry i in a flat record.
  std::size_t offset(std::size_t i) const { return offsets_[i]; }

  /// Total number of scalar activations k.
  std::size_t activation_count() const { return total_; }

  std::size_t unit_count() const {
    std::size_t units = 0;
    for (const auto& e : entries_) units += e.unit_count();
    return units;
  }

  bool operator==(const ActivationManifest& other) const { return entries_ == other.entries_; }

 private:
  void validate() const {
    std::unordered_set<std::string> names;
    std::size_t last_layer = 0;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      if (!names.insert(e.name).second) throw Error("manifest-error", "duplicate activation name '" + e.name + "'");
      if (i > 0 && e.layer_index < last_layer) {
        throw Error("manifest-error", "layer_index must be non-decreasing at '" + e.name + "'");
      }
      last_layer = e.layer_index;
      if (e.shape.empty()) throw Error("manifest-error", "empty shape for '" + e.name + "'");
      for (auto d : e.shape) {
        if (d == 0) throw Error("manifest-error", "zero dimension in '" + e.name + "'");
      }
      if (e.kind == ActivationKind::feature_map && e.shape.size() != 3) {
        throw Error("manifest-error", "feature map '" + e.name + "' must have shape [H, W, C]");
      }
    }
  }

  std::vector<ManifestEntry> entries_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

// ---------------------------------------------------------------------------
// ST cube
// ---------------------------------------------------------------------------

/// n samples × m transformations × k activations.
struct STShape {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t k = 0;

  std::size_t records() const { return n * m; }
  bool operator==(const STShape&) const = default;
};

/// Coordinates of one ST cell.
struct Cell {
  std::size_t sample = 0;
  std::size_t transformation = 0;
  bool operator==(const Cell&) const = default;
};

/// All activations for one (sample, transformation) pair.
struct STRecord {
  std::size_t sample_index = 0;
  std::size_t transformation_index = 0;
  std::vector<double> values;
};

// ---------------------------------------------------------------------------
// Accumulators
// ---------------------------------------------------------------------------

enum class VarianceDenominator { sample, population };

/// Welford running mean / variance, mergeable with the Chan et al. update.
class VarianceAccumulator {
 public:
  VarianceAccumulator() = default;
  VarianceAccumulator(std::uint64_t count, double mean, double m2) : count_(count), mean_(mean), m2_(m2) {}

  void update(double x) {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
    if (m2_ < 0.0) m2_ = 0.0;  // NaN passes through untouched
  }

  VarianceAccumulator& merge(const VarianceAccumulator& other) {
    if (other.count_ == 0) return *this;
    if (count_ == 0) {
      *this = other;
      return *this;
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(other.count_);
    const double n = na + nb;
    const double delta = other.mean_ - mean_;
    mean_ += delta * nb / n;
    m2_ += other.m2_ + delta * delta * na * nb / n;
    if (m2_ < 0.0) m2_ = 0.0;
    count_ += other.count_;
    return *this;
  }

  std::uint64_t count() const { return count_; }
  double mean() const { return mean_; }
  double m2() const { return m2_; }

  /// Sample variance (n−1) by default; population variance (n) on request.
  double variance(VarianceDenominator denominator = VarianceDenominator::sample) const {
    if (denominator == VarianceDenominator::population) {
      if (count_ < 1) throw Error("insufficient-count", "population variance needs at least one value");
      return m2_ / static_cast<double>(count_);
    }
    if (count_ < 2) throw Error("insufficient-count", "sample variance needs at least two values");
    return m2_ / static_cast<double>(count_ - 1);
  }

  double stddev(VarianceDenominator denominator = VarianceDenominator::sample) const {
    return std::sqrt(variance(denominator));
  }

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline VarianceAccumulator welford_update(VarianceAccumulator acc, double x) {
  acc.update(x);
  return acc;
}

inline VarianceAccumulator welford_merge(VarianceAccumulator a, const VarianceAccumulator& b) {
  a.merge(b);
  return a;
}

/// Sum of pairwise distances and the number of ordered pairs they came from.
struct DistanceAccumulator {
  std::uint64_t pair_count = 0;
  double distance_sum = 0.0;

  void add(double d, std::uint64_t pairs = 1) {
    distance_sum += d;
    pair_count += pairs;
  }

  DistanceAccumulator& merge(const DistanceAccumulator& other) {
    pair_count += other.pair_count;
    distance_sum += other.distance_sum;
    return *this;
  }

  double mean() const {
    if (pair_count == 0) throw Error("insufficient-count", "no pairs accumulated");
    return distance_sum / static_cast<double>(pair_count);
  }
};

// ---------------------------------------------------------------------------
// Distances
// ---------------------------------------------------------------------------

enum class DistanceKind { squared_euclidean, absolute };

inline double scalar_distance(DistanceKind kind, double a, double b) {
  const double d = a - b;
  return kind == DistanceKind::absolute ? std::abs(d) : d * d;
}

inline const char* to_string(DistanceKind kind) {
  return kind == DistanceKind::absolute ? "absolute" : "squared-euclidean";
}

inline DistanceKind parse_distance_kind(const std::string& s) {
  if (s == "squared-euclidean" || s == "sqeuclidean") return DistanceKind::squared_euclidean;
  if (s == "absolute") return DistanceKind::absolute;
  throw Error("invalid-argument", "unknown distance '" + s + "'");
}

/// Mean over all n² ordered pairs (diagonal included) of d(x_i, x_j).
template <typename Distance>
double mean_pairwise_distance(std::span<const double> values, Distance&& d) {
  if (values.empty()) throw Error("empty-vector", "mean pairwise distance of an empty vector");
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = 0; j < values.size(); ++j) sum += d(values[i], values[j]);
  }
  const double n = static_cast<double>(values.size());
  return sum / (n * n);
}

inline double mean_pairwise_distance(std::span<const double> values, DistanceKind kind) {
  return mean_pairwise_distance(values, [kind](double a, double b) { return scalar_distance(kind, a, b); });
}

}  // namespace tmeasures
