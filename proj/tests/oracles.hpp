#pragma once

// Reference computations written from the definitions, deliberately naive and
// sharing no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace oracle {

inline long double mean(const std::vector<double>& xs) {
  long double s = 0.0L;
  for (double x : xs) s += x;
  return s / static_cast<long double>(xs.size());
}

inline double variance(const std::vector<double>& xs, bool population = false) {
  const long double mu = mean(xs);
  long double ss = 0.0L;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return static_cast<double>(ss / static_cast<long double>(population ? xs.size() : xs.size() - 1));
}

/// Row-major n×m matrix helpers.
inline std::vector<double> row(const std::vector<double>& st, std::size_t m, std::size_t i) {
  return {st.begin() + static_cast<std::ptrdiff_t>(i * m), st.begin() + static_cast<std::ptrdiff_t>((i + 1) * m)};
}
inline std::vector<double> col(const std::vector<double>& st, std::size_t n, std::size_t m, std::size_t j) {
  std::vector<double> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back(st[i * m + j]);
  return c;
}

inline double tv(const std::vector<double>& st, std::size_t n, std::size_t m, bool population = false) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += variance(row(st, m, i), population);
  return s / static_cast<double>(n);
}
inline double sv(const std::vector<double>& st, std::size_t n, std::size_t m, bool population = false) {
  double s = 0.0;
  for (std::size_t j = 0; j < m; ++j) s += variance(col(st, n, m, j), population);
  return s / static_cast<double>(m);
}

/// Σᵢ Σⱼ d(xᵢ, xⱼ) / n² over the full matrix.
inline double full_pairwise(const std::vector<double>& xs, const std::function<double(double, double)>& d) {
  long double s = 0.0L;
  for (double a : xs)
    for (double b : xs) s += d(a, b);
  return static_cast<double>(s / static_cast<long double>(xs.size() * xs.size()));
}
inline double sq(double a, double b) { return (a - b) * (a - b); }

/// P(F > f) for F(d1, d2) by tanh-sinh quadrature of the Beta(d2/2, d1/2)
/// density on [0, z], z = d2 / (d2 + d1 f). Endpoint distances are formed
/// analytically so the singular endpoints keep full precision.
inline double f_sf_quadrature(double f, double d1, double d2) {
  const double a = d2 / 2.0, b = d1 / 2.0;
  const double z = d2 / (d2 + d1 * f);
  const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  const double h = 1.0 / 128.0;
  const double pi = 3.14159265358979323846;
  long double total = 0.0L;
  for (int k = -640; k <= 640; ++k) {
    const double t = k * h;
    const double s = pi / 2.0 * std::sinh(t);
    const double e = std::exp(-2.0 * s);
    const double x = z / (1.0 + e);        // distance from 0
    const double gap = z * e / (1.0 + e);  // distance from z
    const double one_minus_x = (1.0 - z) + gap;
    if (x <= 0.0 || one_minus_x <= 0.0) continue;
    const double dxdt = z * 2.0 * (pi / 2.0 * std::cosh(t)) * e / ((1.0 + e) * (1.0 + e));
    if (!(dxdt > 0.0) || !std::isfinite(dxdt)) continue;
    const double log_density = (a - 1.0) * std::log(x) + (b - 1.0) * std::log(one_minus_x) - log_beta;
    total += static_cast<long double>(std::exp(log_density) * dxdt);
  }
  return static_cast<double>(total * h);
}

/// Upper-tail probability of the standard normal via erfc.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

/// Textbook one-way ANOVA F with groups as columns.
inline double anova_f(const std::vector<double>& st, std::size_t n, std::size_t m) {
  const double grand = static_cast<double>(mean(st));
  double ssb = 0.0, ssw = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const auto c = col(st, n, m, j);
    const double mu = static_cast<double>(mean(c));
    ssb += static_cast<double>(n) * (mu - grand) * (mu - grand);
    for (double x : c) ssw += (x - mu) * (x - mu);
  }
  return (ssb / static_cast<double>(m - 1)) / (ssw / static_cast<double>(m * (n - 1)));
}

/// Top ⌈p·n⌉ mean by full sort.
inline double top_mean(std::vector<double> v, std::size_t keep) {
  std::sort(v.rbegin(), v.rend());
  double s = 0.0;
  for (std::size_t i = 0; i < keep; ++i) s += v[i];
  return s / static_cast<double>(keep);
}

/// Midrank k-sample Anderson-Darling A²akN evaluated straight from its
/// definition with explicit counting over the distinct pooled values.
inline double ad_midrank(const std::vector<std::vector<double>>& groups) {
  std::vector<double> pooled;
  for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> distinct = pooled;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const double N = static_cast<double>(pooled.size());
  double sum = 0.0;
  for (const auto& g : groups) {
    const double ni = static_cast<double>(g.size());
    double inner = 0.0;
    for (double zj : distinct) {
      double lj = 0.0, below_all = 0.0, below_i = 0.0, eq_i = 0.0;
      for (double x : pooled) {
        lj += x == zj;
        below_all += x < zj;
      }
      for (double x : g) {
        below_i += x < zj;
        eq_i += x == zj;
      }
      const double mij = below_i + eq_i / 2.0;
      const double bj = below_all + lj / 2.0;
      const double denom = bj * (N - bj) - N * lj / 4.0;
      if (denom <= 0.0) continue;
      inner += lj / N * std::pow(N * mij - bj * ni, 2) / denom;
    }
    sum += inner / ni;
  }
  return sum * (N - 1.0) / N;
}

/// Direct 3×3 convolution (zero "same" padding) on HWC data with OIHW weights.
inline std::vector<double> conv3x3_same(const std::vector<double>& in, std::size_t h, std::size_t w, std::size_t ci,
                                        const std::vector<float>& k, const std::vector<float>& bias, std::size_t co) {
  std::vector<double> out(h * w * co);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t o = 0; o < co; ++o) {
        double acc = bias[o];
        for (std::size_t c = 0; c < ci; ++c)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
              acc += static_cast<double>(k[((o * ci + c) * 3 + static_cast<std::size_t>(dy + 1)) * 3 + static_cast<std::size_t>(dx + 1)]) *
                     in[(static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)) * ci + c];
            }
        out[(y * w + x) * co + o] = acc;
      }
  return out;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto dir = std::filesystem::temp_directory_path() / ("tm-" + tag + "-" + std::to_string(rng() % 1000000000));
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
