// Acceptance checks 1-12. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails or overruns its time limit.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "../oracles.hpp"
#include "tmeasures/tmeasures.hpp"

using namespace tmeasures;

namespace {

const std::filesystem::path fixtures{TM_FIXTURE_DIR};

struct Outcome {
  bool ok = true;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double limit_s;
  std::function<Outcome()> check;
};

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "none";
}

/// Counts the largest request and cumulative records of a wrapped provider.
class Instrumented : public ActivationProvider {
 public:
  explicit Instrumented(ActivationProvider& p) : p_(p) {}
  const ActivationManifest& manifest() const override { return p_.manifest(); }
  STShape shape() const override { return p_.shape(); }
  std::size_t identity_index() const override { return p_.identity_index(); }
  void fetch(std::span<const Cell> cells, std::span<STRecord> out, const WorkerPool& pool) override {
    largest = std::max(largest, cells.size());
    total += cells.size();
    p_.fetch(cells, out, pool);
  }
  std::size_t largest = 0, total = 0;

 private:
  ActivationProvider& p_;
};

// ---------------------------------------------------------------------------

Outcome c1_worked_st() {
  DumpProvider dump(fixtures / "worked_st.stdump");
  const auto r = run_measure(dump, {MeasureId::tv, MeasureId::sv, MeasureId::nv}, {});
  const double tv = r.result("tv").values[0].value, sv = r.result("sv").values[0].value, nv = r.result("nv").values[0].value;
  return {std::abs(tv - 1) <= 1e-12 && std::abs(sv - 0.5) <= 1e-12 && std::abs(nv - 2) <= 1e-12, fmt("TV=%.17g SV=%.17g NV=%.17g", tv, sv, nv)};
}

Outcome c2_eq12() {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> len(2, 64);
  std::normal_distribution<double> g(0.0, 3.0);
  MeasureOptions pop;
  pop.denominator = VarianceDenominator::population;
  double worst_td = 0, worst_nd = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = len(rng), m = len(rng);
    std::vector<double> v(n * m);
    for (auto& x : v) x = g(rng);
    const STMatrix st(n, m, v);
    const double td = distance_measure(st, DistanceRole::transformation, DistanceKind::squared_euclidean);
    const double sd = distance_measure(st, DistanceRole::sample, DistanceKind::squared_euclidean);
    const double tv = transformation_variance(st, pop), sv = sample_variance(st, pop);
    worst_td = std::max({worst_td, rel(td, 2 * tv), rel(sd, 2 * sv)});
    worst_nd = std::max(worst_nd, rel(normalized_distance(td, sd).value, normalized_variance(tv, sv).value));
  }
  // The engine's unbatched path on one more random cube.
  ActivationManifest man({{"a", 0, {5}, ActivationKind::scalar_vector}});
  std::vector<double> cube(17 * 9 * 5);
  for (auto& x : cube) x = g(rng);
  CubeProvider p(man, 17, 9, cube);
  RunConfig c;
  c.batch_size = 17;
  c.options = pop;
  const auto r = run_measure(p, {MeasureId::nd, MeasureId::nv}, c);
  for (std::size_t a = 0; a < 5; ++a) worst_nd = std::max(worst_nd, rel(r.result("nd").values[a].value, r.result("nv").values[a].value));
  return {worst_td <= 1e-9 && worst_nd <= 1e-9, fmt("max rel TD/2TV %.3g, ND/NV %.3g", worst_td, worst_nd)};
}

Outcome c3_welford() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> expo(-6, 6);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = (sign(rng) ? -1 : 1) * std::pow(10.0, expo(rng));
  VarianceAccumulator acc;
  for (double x : xs) acc.update(x);
  const double two_pass = oracle::variance(xs);
  const double stream_err = rel(acc.variance(), two_pass);
  double merge_err = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> cuts{0, xs.size()};
    std::uniform_int_distribution<std::size_t> pos(0, xs.size());
    for (int i = 0; i < 7; ++i) cuts.push_back(pos(rng));
    std::sort(cuts.begin(), cuts.end());
    std::vector<VarianceAccumulator> parts(8);
    for (std::size_t b = 0; b < 8; ++b)
      for (std::size_t i = cuts[b]; i < cuts[b + 1]; ++i) parts[b].update(xs[i]);
    std::shuffle(parts.begin(), parts.end(), rng);
    VarianceAccumulator merged;
    for (const auto& p : parts) merged.merge(p);
    merge_err = std::max(merge_err, rel(merged.variance(), two_pass));
  }
  return {stream_err <= 1e-10 && merge_err <= 1e-9, fmt("stream rel %.3g, 8-way merge rel %.3g", stream_err, merge_err)};
}

Outcome c4_exact_invariance() {
  const std::size_t side = 12, px = side * side;
  using namespace layers;
  const NetworkSpec spec{{side, side, 1}, {flatten(), dense(2)}};
  WeightBundle w = random_init(spec, 0);
  auto& d = w.layers[1];
  std::fill(d.kernel.begin(), d.kernel.end(), 0.0f);
  std::fill(d.bias.begin(), d.bias.end(), 0.0f);
  for (std::size_t i = 0; i < px; ++i) d.kernel[i] = 1.0f / static_cast<float>(px);  // unit 0: global mean
  d.kernel[px + 0] = 1.0f;                                                            // unit 1: pixel (0, 0)
  auto net = std::make_shared<const Network>(spec, w);
  ModelProvider p(net, synthetic_dataset(40, side, side, 1, 4), rotation_set(4));
  const auto r = run_measure(p, {MeasureId::nv}, {});
  const double mean_nv = r.result("nv").values[0].value, corner_nv = r.result("nv").values[1].value;
  return {std::abs(mean_nv) <= 1e-9 && corner_nv > 0.1, fmt("NV(mean)=%.3g NV(corner)=%.3g", mean_nv, corner_nv)};
}

Outcome c5_anova() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::vector<double> v(900);
  std::size_t rejected = 0;
  for (int t = 0; t < 10000; ++t) {
    for (auto& x : v) x = g(rng);
    rejected += anova_test(STMatrix(30, 30, v), 0.01).rejected;
  }
  const double rate = rejected / 1e4;
  std::normal_distribution<double> tight(0.0, 0.01);
  std::size_t separated = 0;
  for (int t = 0; t < 100; ++t) {
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t j = 0; j < 30; ++j) v[i * 30 + j] = 10.0 * static_cast<double>(j) + tight(rng);
    separated += anova_test(STMatrix(30, 30, v), 0.01).rejected;
  }
  return {std::abs(rate - 0.01) <= 0.005 && separated == 100, fmt("null rate %.4f, separated %g/100", rate, static_cast<double>(separated))};
}

Outcome c6_goodfellow() {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  const std::size_t n = 1000, m = 25;
  std::vector<double> inv(n * m), id_only(n * m, -5.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = g(rng);
    for (std::size_t j = 0; j < m; ++j) inv[i * m + j] = x;
    id_only[i * m] = x;  // other transformations never reach the threshold
  }
  const auto a = goodfellow_measure(STMatrix(n, m, inv), 0);
  const auto b = goodfellow_measure(STMatrix(n, m, id_only), 0);
  const double invp = invp_aggregate({4, 1, 3, 2}, 0.5);
  const bool ok = a.valid && b.valid && std::abs(a.value - 1) <= 1e-9 && std::abs(b.value - 0.04) <= 1e-9 && invp == 3.5;
  return {ok, fmt("GF(invariant)=%.12g GF(identity-only)=%.12g Invp=%.17g", a.value, b.value, invp)};
}

Outcome c7_activation_variance() {
  const auto dists = detail::mixture_distributions(1000, 7);
  std::size_t violations = 0;
  double worst = -INFINITY;
  for (const auto& f : {ScalarActivation{ActivationFamily::relu, 0.0}, ScalarActivation{ActivationFamily::leaky_relu, 0.1},
                        ScalarActivation{ActivationFamily::prelu, 0.5}, ScalarActivation{ActivationFamily::elu, 1.0}}) {
    const auto r = check_variance_nonincreasing(f, dists, 1e-12);
    violations += r.variance_violations + r.mean_violations + r.second_moment_violations;
    worst = std::max(worst, r.max_variance_excess);
  }
  return {violations == 0, fmt("violations %g, max Var(f(x))-Var(x) %.3g", static_cast<double>(violations), worst)};
}

Outcome c8_memory() {
  const bool fig = estimate_memory(1'000'000, 8) == 32'000'000u && estimate_memory(10'000'000, 512) == 20'480'000'000u;
  ActivationManifest man({{"a", 0, {16}, ActivationKind::scalar_vector}});
  GeneratorProvider gen(man, 100, 100, [](const Cell& c, std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(0.1 * c.sample * (i + 1)) + 0.01 * c.transformation;
  });
  Instrumented p(gen);
  RunConfig c;
  c.batch_size = 32;
  RunStats stats;
  run_measure(p, {MeasureId::nv, MeasureId::nd, MeasureId::anova, MeasureId::goodfellow}, c, &stats);
  const bool ok = fig && stats.peak_retained_records <= 32 && p.largest <= 32 && p.total == 2 * 10000;
  return {ok, fmt("peak retained %g records, largest request %g, fetched %g", static_cast<double>(stats.peak_retained_records),
                  static_cast<double>(p.largest), static_cast<double>(p.total))};
}

Outcome c9_convergence() {
  const TensorShape input{28, 28, 1};
  const auto spec = simple_conv(input, 8, 64);
  auto net = std::make_shared<const Network>(spec, random_init(spec, 9));
  const Dataset data = synthetic_dataset(500, 28, 28, 1, 9);
  RunConfig c;
  c.batch_size = 64;
  c.jobs = default_worker_count();
  const auto grid = convergence_study({24, 96, 384}, {4, 8, 16, 24}, [&](std::size_t s, std::size_t t) {
    ModelProvider p(net, data.head(s), rotation_set(t));
    return run_measure(p, {MeasureId::nv}, c).result("nv").values;
  });
  std::ostringstream os;
  for (std::size_t s = 0; s < 3; ++s) {
    os << (s ? "; " : "") << grid.sample_sizes[s] << ":";
    for (std::size_t t = 0; t < 4; ++t) os << ' ' << fmt("%.4f", grid.median_error[s][t]);
  }
  const double nearest = grid.largest_non_reference_median();
  os << " | nearest " << fmt("%.4f", nearest);
  return {grid.median_non_increasing() && nearest < 0.15, os.str()};
}

std::vector<double> layer_means(const MeasureReport& r) {
  std::vector<double> out;
  for (const auto& l : r.result("nv").layers) out.push_back(l.valid ? l.mean : NAN);
  return out;
}

Outcome c10_stability() {
  const TensorShape input{28, 28, 1};
  const auto spec = simple_conv(input, 8, 64);
  const Dataset data = synthetic_dataset(96, 28, 28, 1, 10);
  RunConfig c;
  c.jobs = default_worker_count();
  auto report_for = [&](std::uint64_t seed) {
    auto net = std::make_shared<const Network>(spec, random_init(spec, seed));
    ModelProvider p(net, data, rotation_set(16));
    return run_measure(p, {MeasureId::nv}, c);
  };
  std::vector<std::vector<double>> means;
  std::vector<MeasureReport> reports;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    reports.push_back(report_for(seed));
    means.push_back(layer_means(reports.back()));
  }
  double worst_cv = 0;
  for (std::size_t l = 0; l < means[0].size(); ++l) {
    std::vector<double> xs;
    for (const auto& m : means) xs.push_back(m[l]);
    const double mu = static_cast<double>(oracle::mean(xs));
    worst_cv = std::max(worst_cv, std::sqrt(oracle::variance(xs)) / std::abs(mu));
  }
  const auto again = report_for(1);
  const auto layers = stability_analysis({reports[0], again}, "nv", 0.01, 2000, 10);
  std::size_t rejected = 0, tested = 0;
  for (const auto& l : layers) {
    tested += l.tested;
    rejected += l.tested && l.test.reject;
  }
  return {worst_cv < 0.5 && rejected == 0 && tested > 0,
          fmt("max per-layer CV %.3f, same-seed AD rejections %g of %g layers", worst_cv, static_cast<double>(rejected),
              static_cast<double>(tested))};
}

Outcome c11_ad() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  std::size_t rejected = 0;
  std::vector<std::vector<double>> groups(5, std::vector<double>(50));
  for (std::uint64_t t = 0; t < 1000; ++t) {
    for (auto& grp : groups)
      for (auto& x : grp) x = g(rng);
    rejected += anderson_darling_k_sample(groups, 0.01, 2000, t).reject;
  }
  const double rate = rejected / 1000.0;
  std::vector<double> a(50), b(50);
  for (auto& x : a) x = g(rng);
  for (auto& x : b) x = 10 + g(rng);
  const auto sep = anderson_darling_k_sample({a, b}, 0.01, 2000, 1);
  return {std::abs(rate - 0.01) <= 0.01 && sep.p_value < 0.001, fmt("null rate %.3f, separated p %.3g", rate, sep.p_value)};
}

Outcome c12_formats() {
  const auto dir = oracle::scratch_dir("acceptance");
  bool ok = true;
  std::string detail;
  for (const char* name : {"worked_st.stdump", "small.stdump", "small_tmajor.stdump"}) {
    StDumpReader reader(fixtures / name);
    StDumpWriter writer(dir / name, reader.header());
    STRecord r;
    while (reader.next(r)) writer.write(r);
    writer.close();
    if (oracle::read_bytes(dir / name) != oracle::read_bytes(fixtures / name)) ok = false, detail += std::string(name) + " differs; ";
  }
  for (const char* name : {"dense.nnw", "conv.nnw"}) {
    const auto bytes = oracle::read_bytes(fixtures / name);
    const auto [spec, w] = decode_nnw(bytes);
    if (encode_nnw(spec, w) != bytes) ok = false, detail += std::string(name) + " differs; ";
  }
  auto dump = oracle::read_bytes(fixtures / "small.stdump");
  auto bad = dump;
  bad[0] = 'X';
  oracle::write_bytes(dir / "magic.stdump", bad);
  oracle::write_bytes(dir / "short.stdump", dump.substr(0, dump.size() - 3));
  const auto nnw = oracle::read_bytes(fixtures / "conv.nnw");
  auto bad_nnw = nnw;
  bad_nnw[0] = 'X';
  const std::string codes[4] = {error_code([&] { StDumpReader r(dir / "magic.stdump"); }),
                                error_code([&] { StDumpReader r(dir / "short.stdump"); }),
                                error_code([&] { decode_nnw(bad_nnw); }),
                                error_code([&] { decode_nnw(nnw.substr(0, nnw.size() - 5)); })};
  ok = ok && codes[0] == "format-error" && codes[1] == "truncated-file" && codes[2] == "format-error" && codes[3] == "truncated-file";
  detail += "errors: " + codes[0] + ", " + codes[1] + ", " + codes[2] + ", " + codes[3];
  std::filesystem::remove_all(dir);
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "worked ST oracle", 1, c1_worked_st},
      {2, "distance/variance equivalence", 5, c2_eq12},
      {3, "Welford fidelity", 5, c3_welford},
      {4, "exact-invariance zero", 10, c4_exact_invariance},
      {5, "ANOVA calibration", 60, c5_anova},
      {6, "Goodfellow sanity", 5, c6_goodfellow},
      {7, "activation variance suite", 30, c7_activation_variance},
      {8, "memory budget", 30, c8_memory},
      {9, "convergence analogue", 600, c9_convergence},
      {10, "stability analogue", 600, c10_stability},
      {11, "AD calibration", 300, c11_ad},
      {12, "format golden files", 1, c12_formats},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.ok && in_time;
    failures += !pass;
    std::printf("%s C%d %s: %s [%.2fs / limit %gs%s]\n", pass ? "PASS" : "FAIL", c.id, c.title, o.detail.c_str(), secs, c.limit_s,
                in_time ? "" : ", over time");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failures, only.empty() ? criteria.size() : only.size());
  return failures == 0 ? 0 : 1;
}
