#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "tmeasures/core.hpp"
#include "tmeasures/data.hpp"
#include "tmeasures/error.hpp"

namespace tmeasures {

enum class NvAggregation { before, after };
enum class GoodfellowTail { upper, lower };

struct MeasureOptions {
  bool use_std_instead_of_variance = false;
  double dead_epsilon = 0.0;
  NvAggregation nv_aggregation = NvAggregation::before;
  double anova_alpha = 0.01;
  bool bonferroni = true;
  double goodfellow_alpha = 0.01;
  GoodfellowTail goodfellow_tail = GoodfellowTail::upper;
  double invp_proportion = 1.0;
  DistanceKind distance = DistanceKind::squared_euclidean;
  std::size_t distance_passes = 1;
  std::uint64_t shuffle_seed = 0;
  VarianceDenominator denominator = VarianceDenominator::sample;

  void validate() const {
    auto open_unit = [](double p) { return p > 0.0 && p < 1.0; };
    if (!open_unit(anova_alpha)) throw Error("invalid-argument", "anova alpha must lie in (0, 1)");
    if (!open_unit(goodfellow_alpha)) throw Error("invalid-argument", "goodfellow alpha must lie in (0, 1)");
    if (!(invp_proportion > 0.0 && invp_proportion <= 1.0)) throw Error("invalid-argument", "invp proportion must lie in (0, 1]");
    if (!(dead_epsilon >= 0.0)) throw Error("invalid-argument", "dead epsilon must be non-negative");
    if (distance_passes == 0) throw Error("invalid-argument", "distance passes must be positive");
  }
};

/// Value of one measure for one activation unit. +∞ is a valid in-band value;
/// invalid marks NaN inputs, dead units and undefined ratios.
struct MeasureValue {
  std::string activation_name;
  double value = 0.0;
  bool valid = true;
  std::map<std::string, double> details;

  static MeasureValue invalid(std::map<std::string, double> details = {}) {
    return {"", std::numeric_limits<double>::quiet_NaN(), false, std::move(details)};
  }
  bool is_infinite() const { return valid && std::isinf(value); }
  bool is_finite() const { return valid && std::isfinite(value); }
};

// ---------------------------------------------------------------------------
// Variance family
// ---------------------------------------------------------------------------

/// Var (or Std) of one accumulated line.
inline double line_spread(const VarianceAccumulator& acc, const MeasureOptions& opts) {
  const double var = acc.variance(opts.denominator);
  return opts.use_std_instead_of_variance ? std::sqrt(var) : var;
}

namespace detail {
inline double mean_line_spread(std::span<const VarianceAccumulator> lines, const MeasureOptions& opts,
                               const char* error_code) {
  if (lines.empty()) throw Error(error_code, "no accumulated lines");
  double total = 0.0;
  for (const auto& acc : lines) {
    if (acc.count() < 2) throw Error(error_code, "every line needs at least two values");
    total += line_spread(acc, opts);
  }
  return total / static_cast<double>(lines.size());
}
}  // namespace detail

/// Mean over samples of the variance across transformations (one accumulator per ST row).
inline double transformation_variance(std::span<const VarianceAccumulator> rows, const MeasureOptions& opts = {}) {
  return detail::mean_line_spread(rows, opts, "insufficient-transformations");
}

/// Mean over transformations of the variance across samples (one accumulator per ST column).
inline double sample_variance(std::span<const VarianceAccumulator> columns, const MeasureOptions& opts = {}) {
  return detail::mean_line_spread(columns, opts, "insufficient-samples");
}

/// numerator/denominator with the dead (both ≤ ε → 1) and unbounded
/// (denominator ≤ ε < numerator → +∞) conventions.
inline MeasureValue normalized_ratio(double numerator, double denominator, double epsilon, const char* num_key,
                                     const char* den_key) {
  std::map<std::string, double> details{{num_key, numerator}, {den_key, denominator}};
  if (std::isnan(numerator) || std::isnan(denominator)) return MeasureValue::invalid(std::move(details));
  double value = 0.0;
  if (denominator <= epsilon) {
    value = numerator <= epsilon ? 1.0 : std::numeric_limits<double>::infinity();
  } else {
    value = numerator / denominator;
  }
  return {"", value, true, std::move(details)};
}

inline MeasureValue normalized_variance(double tv, double sv, const MeasureOptions& opts = {}) {
  return normalized_ratio(tv, sv, opts.dead_epsilon, "tv", "sv");
}

inline MeasureValue normalized_distance(double td, double sd, const MeasureOptions& opts = {}) {
  return normalized_ratio(td, sd, opts.dead_epsilon, "td", "sd");
}

struct FeatureMapAggregate {
  double transformation = 0.0;  // TV_F or TD_F
  double sample = 0.0;          // SV_F or SD_F
  MeasureValue normalized;
};

/// Spatial aggregation of per-cell transformation/sample values. "before"
/// normalizes the spatial means; "after" averages the per-cell ratios.
inline FeatureMapAggregate aggregate_feature_map(std::span<const double> transformation, std::span<const double> sample,
                                                 const MeasureOptions& opts = {}, const char* num_key = "tv",
                                                 const char* den_key = "sv") {
  if (transformation.empty() || transformation.size() != sample.size()) {
    throw Error("shape-error", "feature map aggregation needs matching non-empty cell lists");
  }
  const double cells = static_cast<double>(transformation.size());
  FeatureMapAggregate out;
  for (std::size_t i = 0; i < transformation.size(); ++i) {
    out.transformation += transformation[i];
    out.sample += sample[i];
  }
  out.transformation /= cells;
  out.sample /= cells;
  if (opts.nv_aggregation == NvAggregation::before) {
    out.normalized = normalized_ratio(out.transformation, out.sample, opts.dead_epsilon, num_key, den_key);
    return out;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < transformation.size(); ++i) {
    const auto cell = normalized_ratio(transformation[i], sample[i], opts.dead_epsilon, num_key, den_key);
    if (!cell.valid) {
      out.normalized = MeasureValue::invalid({{num_key, out.transformation}, {den_key, out.sample}});
      return out;
    }
    total += cell.value;
  }
  out.normalized = {"", total / cells, true, {{num_key, out.transformation}, {den_key, out.sample}}};
  return out;
}

// ---------------------------------------------------------------------------
// In-memory ST matrix for a single activation
// ---------------------------------------------------------------------------

/// n×m matrix, row i = sample i, column j = transformation j.
struct STMatrix {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> values;

  STMatrix() = default;
  STMatrix(std::size_t rows, std::size_t cols, std::vector<double> v) : n(rows), m(cols), values(std::move(v)) {
    if (values.size() != n * m) throw Error("shape-error", "ST matrix data does not match n·m");
  }
  STMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    n = rows.size();
    m = n ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != m) throw Error("shape-error", "ragged ST matrix");
      values.insert(values.end(), r.begin(), r.end());
    }
  }

  double at(std::size_t i, std::size_t j) const { return values[i * m + j]; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * m, m}; }
  std::vector<double> column(std::size_t j) const {
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = at(i, j);
    return c;
  }
  STMatrix transposed() const {
    std::vector<double> t(n * m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) t[j * n + i] = at(i, j);
    return {m, n, std::move(t)};
  }

  std::vector<VarianceAccumulator> row_accumulators() const {
    std::vector<VarianceAccumulator> acc(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) acc[i].update(at(i, j));
    return acc;
  }
  std::vector<VarianceAccumulator> column_accumulators() const {
    std::vector<VarianceAccumulator> acc(m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) acc[j].update(at(i, j));
    return acc;
  }
};

inline double transformation_variance(const STMatrix& st, const MeasureOptions& opts = {}) {
  const auto rows = st.row_accumulators();
  return transformation_variance(rows, opts);
}

inline double sample_variance(const STMatrix& st, const MeasureOptions& opts = {}) {
  const auto cols = st.column_accumulators();
  return sample_variance(cols, opts);
}

// ---------------------------------------------------------------------------
// Distance family
// ---------------------------------------------------------------------------

/// Block estimate of the mean pairwise distance D over one axis line of
/// length L. Each pass visits the line in axis_order(pass) and chunks it into
/// blocks; only off-diagonal pairs inside a block are evaluated, and the
/// result is rescaled by (L−1)/L for the zero diagonal. A single block
/// covering the line gives the exact D.
template <typename PairDistance>
DistanceAccumulator block_pair_distances(std::size_t length, std::size_t block, std::size_t passes, std::uint64_t seed,
                                         std::size_t line, PairDistance&& pair) {
  if (block < 2) throw Error("batch-too-small", "distance blocks need at least two elements");
  DistanceAccumulator acc;
  const std::size_t width = std::min(block, length);
  for (std::size_t p = 0; p < passes; ++p) {
    const auto order = axis_order(length, p, line, seed);
    for (std::size_t start = 0; start < length; start += width) {
      const std::size_t end = std::min(start + width, length);
      for (std::size_t a = start; a < end; ++a) {
        for (std::size_t b = a + 1; b < end; ++b) acc.add(2.0 * pair(order[a], order[b]), 2);
      }
    }
  }
  return acc;
}

/// Converts pooled off-diagonal pair sums of lines of the given length into D.
inline double mean_distance_from_pairs(const DistanceAccumulator& acc, std::size_t length) {
  if (length < 2 || acc.pair_count == 0) return 0.0;
  const double l = static_cast<double>(length);
  return acc.mean() * (l - 1.0) / l;
}

enum class DistanceRole { transformation, sample };

struct DistanceSettings {
  std::size_t block_size = 0;  // 0: the whole axis
  std::size_t passes = 1;
  std::uint64_t seed = 0;
};

/// TD (rows) or SD (columns) of one scalar activation.
inline double distance_measure(const STMatrix& st, DistanceRole role, DistanceKind kind, DistanceSettings settings = {}) {
  const bool rows = role == DistanceRole::transformation;
  const std::size_t lines = rows ? st.n : st.m;
  const std::size_t length = rows ? st.m : st.n;
  const std::size_t block = settings.block_size == 0 ? length : settings.block_size;
  double total = 0.0;
  for (std::size_t line = 0; line < lines; ++line) {
    auto value = [&](std::size_t p) { return rows ? st.at(line, p) : st.at(p, line); };
    const auto acc = block_pair_distances(length, block, settings.passes, settings.seed, line,
                                          [&](std::size_t a, std::size_t b) { return scalar_distance(kind, value(a), value(b)); });
    total += mean_distance_from_pairs(acc, length);
  }
  return total / static_cast<double>(lines);
}

/// Default distance between two feature maps: mean squared elementwise difference.
inline double mean_squared_map_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("shape-error", "feature maps differ in shape");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

using FeatureMapDistance = std::function<double(std::span<const double>, std::span<const double>)>;

/// n×m grid of h×w maps: maps[i * m + j] is sample i under transformation j.
struct FeatureMapST {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::vector<double>> maps;

  const std::vector<double>& at(std::size_t i, std::size_t j) const { return maps[i * m + j]; }
};

inline double feature_map_distance_measure(const FeatureMapST& st, DistanceRole role, DistanceSettings settings = {},
                                           const FeatureMapDistance& d = mean_squared_map_distance) {
  if (st.maps.size() != st.n * st.m) throw Error("shape-error", "feature map ST does not hold n·m maps");
  for (const auto& map : st.maps) {
    if (map.size() != st.height * st.width) throw Error("shape-error", "feature maps must share shape h×w");
  }
  const bool rows = role == DistanceRole::transformation;
  const std::size_t lines = rows ? st.n : st.m;
  const std::size_t length = rows ? st.m : st.n;
  const std::size_t block = settings.block_size == 0 ? length : settings.block_size;
  double total = 0.0;
  for (std::size_t line = 0; line < lines; ++line) {
    auto map = [&](std::size_t p) -> const std::vector<double>& { return rows ? st.at(line, p) : st.at(p, line); };
    const auto acc = block_pair_distances(length, block, settings.passes, settings.seed, line,
                                          [&](std::size_t a, std::size_t b) { return d(map(a), map(b)); });
    total += mean_distance_from_pairs(acc, length);
  }
  return total / static_cast<double>(lines);
}

// ---------------------------------------------------------------------------
// ANOVA
// ---------------------------------------------------------------------------

/// Upper tail P(F > f) of the F(d1, d2) distribution.
inline double f_distribution_sf(double f, double d1, double d2) {
  if (std::isnan(f)) return std::numeric_limits<double>::quiet_NaN();
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return boost::math::ibeta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

struct AnovaResult {
  double f = 0.0;
  double p = 1.0;
  double ss_between = 0.0;
  double ss_within = 0.0;
  bool rejected = false;
};

/// Significance level after the optional Bonferroni division by the number of
/// simultaneously tested activations.
inline double anova_threshold(const MeasureOptions& opts, std::size_t tests) {
  return opts.bonferroni && tests > 0 ? opts.anova_alpha / static_cast<double>(tests) : opts.anova_alpha;
}

/// One-way ANOVA from per-group means (groups of equal size n) and the pooled
/// within-group sum of squares.
inline AnovaResult anova_from_summaries(std::span<const double> group_means, std::size_t group_size, double ss_within,
                                        double threshold) {
  const std::size_t m = group_means.size();
  if (m < 2) throw Error("insufficient-transformations", "ANOVA needs at least two groups");
  if (group_size < 2) throw Error("insufficient-samples", "ANOVA needs at least two observations per group");
  AnovaResult r;
  r.ss_within = ss_within;
  const bool all_equal = std::all_of(group_means.begin(), group_means.end(), [&](double v) { return v == group_means[0]; });
  if (!all_equal) {
    double grand = 0.0;
    for (double v : group_means) grand += v;
    grand /= static_cast<double>(m);
    for (double v : group_means) r.ss_between += (v - grand) * (v - grand);
    r.ss_between *= static_cast<double>(group_size);
  }
  if (std::isnan(r.ss_between) || std::isnan(ss_within)) {
    r.f = r.p = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const double d1 = static_cast<double>(m - 1);
  const double d2 = static_cast<double>(m * (group_size - 1));
  if (ss_within <= 0.0) {
    r.f = r.ss_between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.p = r.ss_between > 0.0 ? 0.0 : 1.0;
  } else {
    r.f = (r.ss_between / d1) / (ss_within / d2);
    r.p = f_distribution_sf(r.f, d1, d2);
  }
  r.rejected = r.p < threshold;
  return r;
}

/// Two-pass ANOVA over one activation's ST matrix: column means first, then
/// the within-group sum of squares.
inline AnovaResult anova_test(const STMatrix& st, double threshold) {
  std::vector<double> means(st.m, 0.0);
  for (std::size_t i = 0; i < st.n; ++i)
    for (std::size_t j = 0; j < st.m; ++j) means[j] += st.at(i, j);
  for (auto& v : means) v /= static_cast<double>(st.n);
  double ssw = 0.0;
  for (std::size_t i = 0; i < st.n; ++i)
    for (std::size_t j = 0; j < st.m; ++j) ssw += (st.at(i, j) - means[j]) * (st.at(i, j) - means[j]);
  return anova_from_summaries(means, st.n, ssw, threshold);
}

// ---------------------------------------------------------------------------
// Goodfellow
// ---------------------------------------------------------------------------

/// Threshold U such that a normal fit N(mean, sd) fires with probability alpha
/// (upper tail) or, for the literal lower-tail reading, P(a ≤ U) = alpha.
inline double goodfellow_threshold(double mean, double sd, double alpha, GoodfellowTail tail = GoodfellowTail::upper) {
  const boost::math::normal standard;
  const double z = boost::math::quantile(standard, tail == GoodfellowTail::upper ? 1.0 - alpha : alpha);
  return mean + sd * z;
}

struct GoodfellowCounts {
  std::uint64_t local_fires = 0;   // over every transformed version
  std::uint64_t local_total = 0;
  std::uint64_t global_fires = 0;  // over untransformed samples only
  std::uint64_t global_total = 0;
};

/// GF = Local / Global. Invalid when the unit is dead (sd = 0) or never fires globally.
inline MeasureValue goodfellow_value(const GoodfellowCounts& c, double sd, double threshold) {
  const double local = c.local_total ? static_cast<double>(c.local_fires) / static_cast<double>(c.local_total) : 0.0;
  const double global = c.global_total ? static_cast<double>(c.global_fires) / static_cast<double>(c.global_total) : 0.0;
  std::map<std::string, double> details{{"local", local}, {"global", global}, {"threshold", threshold}};
  if (!(sd > 0.0) || std::isnan(threshold) || global == 0.0) return MeasureValue::invalid(std::move(details));
  return {"", local / global, true, std::move(details)};
}

/// Goodfellow measure of one activation given its ST matrix; statistics come
/// from the untransformed column.
inline MeasureValue goodfellow_measure(const STMatrix& st, std::size_t identity_index, const MeasureOptions& opts = {}) {
  VarianceAccumulator base;
  for (std::size_t i = 0; i < st.n; ++i) base.update(st.at(i, identity_index));
  const double sd = st.n >= 2 ? base.stddev() : 0.0;
  const double u = goodfellow_threshold(base.mean(), sd, opts.goodfellow_alpha, opts.goodfellow_tail);
  GoodfellowCounts c;
  for (std::size_t i = 0; i < st.n; ++i) {
    for (std::size_t j = 0; j < st.m; ++j) {
      const bool fires = st.at(i, j) > u;
      c.local_fires += fires;
      ++c.local_total;
      if (j == identity_index) {
        c.global_fires += fires;
        ++c.global_total;
      }
    }
  }
  return goodfellow_value(c, sd, u);
}

/// Mean of the ⌈p·count⌉ largest values.
inline double invp_aggregate(std::vector<double> values, double proportion) {
  if (values.empty()) throw Error("empty-layer", "Invp of an empty layer");
  if (!(proportion > 0.0 && proportion <= 1.0)) throw Error("invalid-argument", "Invp proportion must lie in (0, 1]");
  const double raw = proportion * static_cast<double>(values.size());
  auto keep = static_cast<std::size_t>(std::ceil(raw - 1e-9 * raw));
  keep = std::clamp<std::size_t>(keep, 1, values.size());
  std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(keep), values.end(), std::greater<>{});
  double total = 0.0;
  for (std::size_t i = 0; i < keep; ++i) total += values[i];
  return total / static_cast<double>(keep);
}

// ---------------------------------------------------------------------------
// Variance of ReLU-family activation functions
// ---------------------------------------------------------------------------

enum class ActivationFamily { relu, leaky_relu, prelu, elu };

/// f(x) = x for x ≥ 0 and g(x) for x < 0 with x ≤ g(x) and |g(x)| ≤ |x|.
struct ScalarActivation {
  ActivationFamily family = ActivationFamily::relu;
  double alpha = 0.0;

  void validate() const {
    switch (family) {
      case ActivationFamily::relu: return;
      case ActivationFamily::leaky_relu:
      case ActivationFamily::prelu:
        if (!(alpha >= 0.0 && alpha < 1.0)) throw Error("precondition-violated", "slope must lie in [0, 1)");
        return;
      case ActivationFamily::elu:
        if (!(alpha > 0.0 && alpha <= 1.0)) throw Error("precondition-violated", "ELU alpha must lie in (0, 1]");
        return;
    }
  }

  double operator()(double x) const {
    if (x >= 0.0) return x;
    switch (family) {
      case ActivationFamily::relu: return 0.0;
      case ActivationFamily::leaky_relu:
      case ActivationFamily::prelu: return alpha * x;
      case ActivationFamily::elu: return alpha * std::expm1(x);
    }
    return x;
  }

  std::string name() const {
    switch (family) {
      case ActivationFamily::relu: return "relu";
      case ActivationFamily::leaky_relu: return "leaky-relu(" + std::to_string(alpha) + ")";
      case ActivationFamily::prelu: return "prelu(" + std::to_string(alpha) + ")";
      case ActivationFamily::elu: return "elu(" + std::to_string(alpha) + ")";
    }
    return "?";
  }
};

struct VarianceCheckReport {
  std::size_t distributions = 0;
  std::size_t variance_violations = 0;
  std::size_t mean_violations = 0;
  std::size_t second_moment_violations = 0;
  double max_variance_excess = -std::numeric_limits<double>::infinity();  // max of Var(f(x)) − Var(x)

  bool passed() const { return variance_violations == 0 && mean_violations == 0 && second_moment_violations == 0; }
};

/// Checks Var(f(x)) ≤ Var(x), E(f(x)) ≥ E(x) and E(f(x)²) ≤ E(x²) on every
/// empirical distribution; tolerance is relative to max(1, |reference|).
inline VarianceCheckReport check_variance_nonincreasing(const ScalarActivation& f,
                                                        const std::vector<std::vector<double>>& distributions,
                                                        double tolerance = 1e-12) {
  f.validate();
  auto beyond = [tolerance](double excess, double reference) {
    return excess > tolerance * std::max(1.0, std::abs(reference));
  };
  VarianceCheckReport report;
  for (const auto& xs : distributions) {
    if (xs.size() < 2) throw Error("invalid-argument", "each distribution needs at least two values");
    VarianceAccumulator in;
    VarianceAccumulator out;
    double sum_x = 0.0, sum_f = 0.0, sq_x = 0.0, sq_f = 0.0;
    for (double x : xs) {
      const double y = f(x);
      in.update(x);
      out.update(y);
      sum_x += x;
      sum_f += y;
      sq_x += x * x;
      sq_f += y * y;
    }
    const double excess = out.variance() - in.variance();
    report.max_variance_excess = std::max(report.max_variance_excess, excess);
    report.variance_violations += beyond(excess, in.variance());
    report.mean_violations += beyond((sum_x - sum_f) / static_cast<double>(xs.size()), sum_x / static_cast<double>(xs.size()));
    report.second_moment_violations += beyond((sq_f - sq_x) / static_cast<double>(xs.size()), sq_x / static_cast<double>(xs.size()));
    ++report.distributions;
  }
  return report;
}

}  // namespace tmeasures
