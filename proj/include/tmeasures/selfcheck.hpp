#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tmeasures/core.hpp"
#include "tmeasures/error.hpp"
#include "tmeasures/measures.hpp"

namespace tmeasures {

struct SuiteResult {
  std::string suite;
  bool passed = true;
  std::string failed_property;
  std::string detail;
};

struct SelfcheckOptions {
  std::uint64_t seed = 0;
  bool inject_fault = false;  // perturbs every suite so it must fail
};

inline const std::vector<std::string>& selfcheck_suites() {
  static const std::vector<std::string> names{"eq12", "activation-variance", "welford", "anova"};
  return names;
}

namespace detail {

inline double relative_gap(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-30); }

inline long double two_pass_variance(const std::vector<double>& xs, bool population) {
  long double mean = 0.0L;
  for (double x : xs) mean += x;
  mean /= static_cast<long double>(xs.size());
  long double ss = 0.0L;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<long double>(population ? xs.size() : xs.size() - 1);
}

inline SuiteResult suite_eq12(const SelfcheckOptions& o) {
  SuiteResult r{"eq12", true, "", ""};
  std::mt19937_64 rng(mix_seed(o.seed, 12));
  std::uniform_int_distribution<std::size_t> len(2, 64);
  std::normal_distribution<double> normal(0.0, 1.0);
  MeasureOptions pop;
  pop.denominator = VarianceDenominator::population;
  const double fault = o.inject_fault ? 1e-3 : 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = len(rng), m = len(rng);
    std::vector<double> v(n * m);
    for (auto& x : v) x = normal(rng) * 3.0 + 1.0;
    const STMatrix st(n, m, v);
    const double td = distance_measure(st, DistanceRole::transformation, DistanceKind::squared_euclidean) + fault;
    const double sd = distance_measure(st, DistanceRole::sample, DistanceKind::squared_euclidean);
    const double tv = transformation_variance(st, pop), sv = sample_variance(st, pop);
    if (relative_gap(td, 2.0 * tv) > 1e-9) {
      r = {"eq12", false, "td-equals-twice-population-tv", "trial " + std::to_string(trial)};
      return r;
    }
    const double nd = normalized_distance(td, sd).value, nv = normalized_variance(tv, sv).value;
    if (relative_gap(nd, nv) > 1e-9) {
      r = {"eq12", false, "nd-equals-population-nv", "trial " + std::to_string(trial)};
      return r;
    }
  }
  r.detail = "200 random ST matrices";
  return r;
}

inline std::vector<std::vector<double>> mixture_distributions(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> family(0, 2);
  std::uniform_int_distribution<std::size_t> size(2, 200);
  std::uniform_real_distribution<double> loc(-3.0, 3.0), spread(0.05, 4.0);
  std::vector<std::vector<double>> out;
  for (std::size_t d = 0; d < count; ++d) {
    std::vector<double> xs(size(rng));
    const double mu = loc(rng), s = spread(rng);
    switch (family(rng)) {
      case 0: {
        std::normal_distribution<double> g(mu, s);
        for (auto& x : xs) x = g(rng);
        break;
      }
      case 1: {
        std::uniform_real_distribution<double> u(mu - s, mu + s);
        for (auto& x : xs) x = u(rng);
        break;
      }
      default: {
        std::normal_distribution<double> a(mu - s, s / 3.0), b(mu + s, s / 3.0);
        std::bernoulli_distribution pick(0.5);
        for (auto& x : xs) x = pick(rng) ? a(rng) : b(rng);
      }
    }
    out.push_back(std::move(xs));
  }
  return out;
}

inline SuiteResult suite_activation_variance(const SelfcheckOptions& o) {
  const auto dists = mixture_distributions(1000, mix_seed(o.seed, 1));
  const std::vector<ScalarActivation> fns{{ActivationFamily::relu, 0.0},
                                          {ActivationFamily::leaky_relu, 0.1},
                                          {ActivationFamily::prelu, 0.5},
                                          {ActivationFamily::elu, 1.0}};
  // The injected fault demands a strict variance decrease, which identity-like
  // behaviour on non-negative inputs cannot meet.
  const double tolerance = o.inject_fault ? -1e-3 : 1e-12;
  for (const auto& f : fns) {
    const auto rep = check_variance_nonincreasing(f, dists, tolerance);
    if (rep.variance_violations) return {"activation-variance", false, "variance-nonincreasing", f.name()};
    if (rep.mean_violations) return {"activation-variance", false, "mean-nondecreasing", f.name()};
    if (rep.second_moment_violations) return {"activation-variance", false, "second-moment-nonincreasing", f.name()};
  }
  return {"activation-variance", true, "", "1000 distributions x 4 functions"};
}

inline SuiteResult suite_welford(const SelfcheckOptions& o) {
  std::mt19937_64 rng(mix_seed(o.seed, 2));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> exponent(-6.0, 6.0);
  const double scale = std::pow(10.0, exponent(rng));
  std::vector<double> xs(100000);
  for (auto& x : xs) x = normal(rng) * scale + scale * 0.5;
  VarianceAccumulator acc;
  for (double x : xs) acc.update(x);
  const double reference = static_cast<double>(two_pass_variance(xs, false));
  const double streamed = acc.variance() * (o.inject_fault ? 1.001 : 1.0);
  if (relative_gap(streamed, reference) > 1e-10) return {"welford", false, "streaming-matches-two-pass", ""};
  std::vector<VarianceAccumulator> parts(8);
  for (std::size_t i = 0; i < xs.size(); ++i) parts[(i * 8) / xs.size()].update(xs[i]);
  VarianceAccumulator merged;
  for (std::size_t p = 8; p-- > 0;) merged.merge(parts[p]);
  if (relative_gap(merged.variance(), reference) > 1e-9) return {"welford", false, "merge-matches-sequential", ""};
  return {"welford", true, "", "1e5 values"};
}

inline SuiteResult suite_anova(const SelfcheckOptions& o) {
  std::mt19937_64 rng(mix_seed(o.seed, 3));
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = 30, m = 30, trials = 10000;
  std::size_t rejections = 0;
  std::vector<double> v(n * m);
  for (std::size_t t = 0; t < trials; ++t) {
    for (auto& x : v) x = normal(rng);
    if (o.inject_fault) v[0] += 40.0;
    rejections += anova_test(STMatrix(n, m, v), 0.01).rejected;
  }
  const double rate = static_cast<double>(rejections) / static_cast<double>(trials);
  if (std::abs(rate - 0.01) > 0.005) return {"anova", false, "null-rejection-rate", "rate " + std::to_string(rate)};
  return {"anova", true, "", "null rejection rate " + std::to_string(rate)};
}

}  // namespace detail

inline SuiteResult run_selfcheck_suite(const std::string& name, const SelfcheckOptions& o = {}) {
  if (name == "eq12") return detail::suite_eq12(o);
  if (name == "activation-variance") return detail::suite_activation_variance(o);
  if (name == "welford") return detail::suite_welford(o);
  if (name == "anova") return detail::suite_anova(o);
  throw Error("invalid-argument", "unknown selfcheck suite '" + name + "'");
}

}  // namespace tmeasures
