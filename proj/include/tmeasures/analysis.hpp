#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tmeasures/error.hpp"
#include "tmeasures/measures.hpp"
#include "tmeasures/report.hpp"

namespace tmeasures {

// ---------------------------------------------------------------------------
// k-sample Anderson-Darling
// ---------------------------------------------------------------------------

struct AndersonDarlingResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
  std::size_t permutations = 0;
};

namespace detail {

/// Pooled sample in sorted order with tie structure, reusable across label
/// permutations.
class PooledSample {
 public:
  explicit PooledSample(const std::vector<std::vector<double>>& groups) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      sizes_.push_back(groups[g].size());
      for (double v : groups[g]) items_.push_back({v, g});
    }
    std::sort(items_.begin(), items_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (i == 0 || items_[i].first != items_[i - 1].first) run_starts_.push_back(i);
      labels_.push_back(items_[i].second);
    }
    run_starts_.push_back(items_.size());
  }

  const std::vector<std::size_t>& labels() const { return labels_; }
  std::size_t distinct() const { return run_starts_.size() - 1; }

  /// Midrank A²akN for the given assignment of group labels to sorted positions.
  double statistic(const std::vector<std::size_t>& labels) const {
    const std::size_t k = sizes_.size();
    const double N = static_cast<double>(items_.size());
    std::vector<double> below(k, 0.0);  // observations of group i strictly below the current value
    std::vector<double> here(k, 0.0);
    double total = 0.0;
    std::vector<double> per_group(k, 0.0);
    for (std::size_t r = 0; r + 1 < run_starts_.size(); ++r) {
      const std::size_t s0 = run_starts_[r], s1 = run_starts_[r + 1];
      std::fill(here.begin(), here.end(), 0.0);
      for (std::size_t p = s0; p < s1; ++p) here[labels[p]] += 1.0;
      const double lj = static_cast<double>(s1 - s0);
      const double bj = static_cast<double>(s0) + lj / 2.0;
      const double denom = bj * (N - bj) - N * lj / 4.0;
      if (denom > 0.0) {
        for (std::size_t g = 0; g < k; ++g) {
          const double mij = below[g] + here[g] / 2.0;
          const double diff = N * mij - bj * static_cast<double>(sizes_[g]);
          per_group[g] += lj / N * diff * diff / denom;
        }
      }
      for (std::size_t g = 0; g < k; ++g) below[g] += here[g];
    }
    for (std::size_t g = 0; g < k; ++g) total += per_group[g] / static_cast<double>(sizes_[g]);
    return total * (N - 1.0) / N;
  }

 private:
  std::vector<std::pair<double, std::size_t>> items_;
  std::vector<std::size_t> labels_;
  std::vector<std::size_t> run_starts_;
  std::vector<std::size_t> sizes_;
};

}  // namespace detail

/// Rank-based k-sample Anderson-Darling test (midrank form, so ties are
/// handled) with a seeded permutation p-value (1 + #{A²* ≥ A²}) / (1 + P).
inline AndersonDarlingResult anderson_darling_k_sample(const std::vector<std::vector<double>>& groups, double alpha,
                                                       std::size_t permutations = 2000, std::uint64_t seed = 0) {
  if (groups.size() < 2) throw Error("invalid-argument", "Anderson-Darling needs at least two groups");
  for (const auto& g : groups) {
    if (g.size() < 2) throw Error("invalid-argument", "every Anderson-Darling group needs at least two values");
    for (double v : g)
      if (!std::isfinite(v)) throw Error("invalid-argument", "Anderson-Darling values must be finite");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("invalid-argument", "alpha must lie in (0, 1)");
  if (permutations < 2000) throw Error("invalid-argument", "at least 2000 permutations are required");

  const detail::PooledSample pooled(groups);
  AndersonDarlingResult out;
  out.permutations = permutations;
  if (pooled.distinct() == 1) return out;  // all values identical

  out.statistic = pooled.statistic(pooled.labels());
  const double tie_tolerance = 1e-12 * std::max(1.0, std::abs(out.statistic));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> labels = pooled.labels();
  std::size_t at_least = 0;
  for (std::size_t p = 0; p < permutations; ++p) {
    std::shuffle(labels.begin(), labels.end(), rng);
    if (pooled.statistic(labels) >= out.statistic - tie_tolerance) ++at_least;
  }
  out.p_value = static_cast<double>(1 + at_least) / static_cast<double>(1 + permutations);
  out.reject = out.p_value < alpha;
  return out;
}

// ---------------------------------------------------------------------------
// Per-layer stability across reports
// ---------------------------------------------------------------------------

struct LayerStability {
  std::size_t layer_index = 0;
  std::string layer_name;
  AndersonDarlingResult test;
  bool tested = false;  // false when some report has fewer than two finite values in the layer
};

/// Finite values of one measure grouped by layer.
inline std::vector<std::vector<double>> layer_values(const MeasureReport& report, const std::string& measure) {
  const auto& values = report.result(measure).values;
  const auto layers = unit_layers(report.manifest);
  std::vector<std::vector<double>> out;
  for (std::size_t u = 0; u < values.size(); ++u) {
    if (u == 0 || layers[u].layer_index != layers[u - 1].layer_index) out.emplace_back();
    if (values[u].is_finite()) out.back().push_back(values[u].value);
  }
  return out;
}

inline std::vector<LayerStability> stability_analysis(const std::vector<MeasureReport>& reports, const std::string& measure,
                                                      double alpha, std::size_t permutations = 2000,
                                                      std::uint64_t seed = 0) {
  if (reports.size() < 2) throw Error("invalid-argument", "stability analysis needs at least two reports");
  const auto structure = [&](const MeasureReport& r) {
    std::vector<std::pair<std::size_t, std::string>> s;
    for (const auto& l : layer_aggregate(r, measure)) s.emplace_back(l.layer_index, l.layer_name);
    return s;
  };
  const auto reference = structure(reports[0]);
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (structure(reports[i]) != reference) throw Error("layer-mismatch", "reports do not share the same layer structure");
  }
  std::vector<std::vector<std::vector<double>>> per_report;
  for (const auto& r : reports) per_report.push_back(layer_values(r, measure));

  std::vector<LayerStability> out;
  for (std::size_t l = 0; l < reference.size(); ++l) {
    LayerStability s{reference[l].first, reference[l].second, {}, false};
    std::vector<std::vector<double>> groups;
    bool enough = true;
    for (const auto& pr : per_report) {
      groups.push_back(pr[l]);
      enough = enough && pr[l].size() >= 2;
    }
    if (enough) {
      s.test = anderson_darling_k_sample(groups, alpha, permutations, mix_seed(seed, l));
      s.tested = true;
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convergence study
// ---------------------------------------------------------------------------

struct ConvergenceGrid {
  std::vector<std::size_t> sample_sizes;
  std::vector<std::size_t> transform_sizes;
  // [sample index][transform index], relative to the largest cell
  std::vector<std::vector<double>> mean_error;
  std::vector<std::vector<double>> median_error;

  /// Median error never increases when either axis grows.
  bool median_non_increasing() const {
    for (std::size_t s = 0; s < sample_sizes.size(); ++s)
      for (std::size_t t = 0; t < transform_sizes.size(); ++t) {
        if (s + 1 < sample_sizes.size() && median_error[s + 1][t] > median_error[s][t]) return false;
        if (t + 1 < transform_sizes.size() && median_error[s][t + 1] > median_error[s][t]) return false;
      }
    return true;
  }

  /// Median error of the non-reference cell closest to the reference.
  double largest_non_reference_median() const {
    const std::size_t S = sample_sizes.size(), T = transform_sizes.size();
    double best = std::numeric_limits<double>::infinity();
    if (S > 1) best = std::min(best, median_error[S - 2][T - 1]);
    if (T > 1) best = std::min(best, median_error[S - 1][T - 2]);
    return best;
  }
};

inline void validate_grid_axis(const std::vector<std::size_t>& axis, const char* name) {
  if (axis.empty()) throw Error("invalid-argument", std::string(name) + " grid is empty");
  for (std::size_t i = 0; i < axis.size(); ++i) {
    if (axis[i] < 2) throw Error("invalid-argument", std::string(name) + " grid values must be at least 2");
    if (i > 0 && axis[i] <= axis[i - 1]) throw Error("invalid-argument", std::string(name) + " grid must be sorted ascending");
  }
}

/// |v − v_ref| / max(|v_ref|, ε) per activation, over pairs where both are finite.
inline std::vector<double> relative_errors(const std::vector<MeasureValue>& values, const std::vector<MeasureValue>& reference,
                                           double epsilon = 1e-12) {
  if (values.size() != reference.size()) throw Error("shape-error", "convergence cells disagree on the activation count");
  std::vector<double> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].is_finite() || !reference[i].is_finite()) continue;
    out.push_back(std::abs(values[i].value - reference[i].value) / std::max(std::abs(reference[i].value), epsilon));
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return (*std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)) + hi) / 2.0;
}

using ConvergenceCell = std::function<std::vector<MeasureValue>(std::size_t samples, std::size_t transforms)>;

/// Runs every (samples, transforms) cell and measures its error against the
/// largest one.
inline ConvergenceGrid convergence_study(const std::vector<std::size_t>& sample_sizes,
                                         const std::vector<std::size_t>& transform_sizes, const ConvergenceCell& run) {
  validate_grid_axis(sample_sizes, "sample");
  validate_grid_axis(transform_sizes, "transform");
  if (sample_sizes.size() * transform_sizes.size() < 2) throw Error("invalid-argument", "need >= 2 cells");
  const std::size_t S = sample_sizes.size(), T = transform_sizes.size();
  std::vector<std::vector<std::vector<MeasureValue>>> cells(S, std::vector<std::vector<MeasureValue>>(T));
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t t = 0; t < T; ++t) cells[s][t] = run(sample_sizes[s], transform_sizes[t]);
  ConvergenceGrid grid{sample_sizes, transform_sizes, std::vector<std::vector<double>>(S, std::vector<double>(T)),
                       std::vector<std::vector<double>>(S, std::vector<double>(T))};
  const auto& reference = cells[S - 1][T - 1];
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t t = 0; t < T; ++t) {
      const auto errs = relative_errors(cells[s][t], reference);
      grid.mean_error[s][t] = errs.empty() ? std::numeric_limits<double>::quiet_NaN()
                                           : std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
      grid.median_error[s][t] = median(errs);
    }
  return grid;
}

inline std::string convergence_csv(const ConvergenceGrid& grid) {
  std::string out = "samples,transformations,mean_relative_error,median_relative_error\n";
  for (std::size_t s = 0; s < grid.sample_sizes.size(); ++s)
    for (std::size_t t = 0; t < grid.transform_sizes.size(); ++t) {
      out += std::to_string(grid.sample_sizes[s]) + ',' + std::to_string(grid.transform_sizes[t]) + ',' +
             format_real(grid.mean_error[s][t]) + ',' + format_real(grid.median_error[s][t]) + '\n';
    }
  return out;
}

}  // namespace tmeasures
