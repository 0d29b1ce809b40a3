#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmeasures/core.hpp"
#include "tmeasures/data.hpp"
#include "tmeasures/error.hpp"
#include "tmeasures/measures.hpp"
#include "tmeasures/report.hpp"

namespace tmeasures {

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

/// Fork-join helper. Ranges are split into contiguous, equally sized slices so
/// a slice's work never depends on the worker count.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers = 1) : workers_(std::max<std::size_t>(1, workers)) {}

  std::size_t size() const { return workers_; }

  /// Calls fn(begin, end) over a partition of [0, count).
  template <typename Fn>
  void parallel_for(std::size_t count, Fn&& fn, std::size_t min_chunk = 1) const {
    const std::size_t shards = std::min(workers_, std::max<std::size_t>(1, count / std::max<std::size_t>(1, min_chunk)));
    if (shards <= 1) {
      if (count > 0) fn(std::size_t{0}, count);
      return;
    }
    std::vector<std::thread> threads;
    std::exception_ptr failure;
    std::mutex guard;
    threads.reserve(shards - 1);
    auto run = [&](std::size_t s) {
      const std::size_t begin = count * s / shards;
      const std::size_t end = count * (s + 1) / shards;
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard lock(guard);
        if (!failure) failure = std::current_exception();
      }
    };
    for (std::size_t s = 1; s < shards; ++s) threads.emplace_back(run, s);
    run(0);
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
  }

 private:
  std::size_t workers_;
};

inline std::size_t default_worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

/// Source of ST records. fetch fills out[i] with the activations of cells[i].
class ActivationProvider {
 public:
  virtual ~ActivationProvider() = default;
  virtual const ActivationManifest& manifest() const = 0;
  virtual STShape shape() const = 0;
  virtual std::size_t identity_index() const { return 0; }
  /// Order in which records can be streamed without random access, if any.
  virtual std::optional<PassOrder> native_order() const { return std::nullopt; }
  virtual void fetch(std::span<const Cell> cells, std::span<STRecord> out, const WorkerPool& pool) = 0;
  virtual nlohmann::json provenance() const { return nlohmann::json::object(); }
};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class MeasureId { tv, sv, nv, td, sd, nd, anova, goodfellow };

inline const char* to_string(MeasureId id) {
  switch (id) {
    case MeasureId::tv: return "tv";
    case MeasureId::sv: return "sv";
    case MeasureId::nv: return "nv";
    case MeasureId::td: return "td";
    case MeasureId::sd: return "sd";
    case MeasureId::nd: return "nd";
    case MeasureId::anova: return "anova";
    case MeasureId::goodfellow: return "goodfellow";
  }
  return "?";
}

inline MeasureId parse_measure_id(const std::string& s) {
  for (auto id : {MeasureId::tv, MeasureId::sv, MeasureId::nv, MeasureId::td, MeasureId::sd, MeasureId::nd,
                  MeasureId::anova, MeasureId::goodfellow}) {
    if (s == to_string(id)) return id;
  }
  throw Error("invalid-argument", "unknown measure '" + s + "'");
}

inline std::vector<MeasureId> parse_measure_list(const std::string& csv) {
  std::vector<MeasureId> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const auto item = csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto id = parse_measure_id(item);
    if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Peak activation storage of one batch: k 32-bit values for each of b records.
inline std::uint64_t estimate_memory(std::uint64_t k, std::uint64_t b) { return 4 * k * b; }

struct RunConfig {
  std::size_t batch_size = 64;
  std::optional<std::uint64_t> memory_budget_bytes;
  std::size_t jobs = 1;
  bool deterministic = false;
  MeasureOptions options;
};

struct SweepStats {
  PassOrder order = PassOrder::sample_major;
  std::size_t pass = 0;
  std::size_t provider_invocations = 0;
  std::size_t batches = 0;
};

struct RunStats {
  std::vector<SweepStats> sweeps;
  std::size_t peak_retained_records = 0;
};

namespace detail {

inline bool contains(const std::vector<MeasureId>& ids, MeasureId id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

/// Row (or column) accumulators that exist only while their line is open.
struct OpenLines {
  struct Line {
    std::vector<VarianceAccumulator> acc;
    std::size_t seen = 0;
  };
  std::map<std::size_t, Line> lines;
};

}  // namespace detail

/// Streams the provider's ST cube through every accumulator the requested
/// measures need and assembles the report. Two physical sweeps at most for
/// the variance family, plus one pair of sweeps per extra distance pass.
inline MeasureReport run_measure(ActivationProvider& provider, const std::vector<MeasureId>& measures,
                                 const RunConfig& config, RunStats* stats_out = nullptr) {
  using detail::contains;
  const MeasureOptions& opts = config.options;
  opts.validate();
  if (measures.empty()) throw Error("invalid-argument", "no measures requested");
  const STShape shape = provider.shape();
  const ActivationManifest& manifest = provider.manifest();
  const std::size_t n = shape.n, m = shape.m, k = shape.k;
  if (k == 0 || manifest.activation_count() != k) throw Error("shape-error", "provider manifest does not match k");
  if (m < 2) throw Error("insufficient-transformations", "at least two transformations are required");
  if (n < 2) throw Error("insufficient-samples", "at least two samples are required");
  const std::size_t b = config.batch_size;
  if (b == 0) throw Error("batch-too-small", "batch size must be positive");

  const bool want_tv = contains(measures, MeasureId::tv) || contains(measures, MeasureId::nv);
  const bool want_sv = contains(measures, MeasureId::sv) || contains(measures, MeasureId::nv);
  const bool want_td = contains(measures, MeasureId::td) || contains(measures, MeasureId::nd);
  const bool want_sd = contains(measures, MeasureId::sd) || contains(measures, MeasureId::nd);
  const bool want_anova = contains(measures, MeasureId::anova);
  const bool want_gf = contains(measures, MeasureId::goodfellow);
  if ((want_td || want_sd) && b < 2) throw Error("batch-too-small", "distance measures need a batch size of at least 2");
  if (config.memory_budget_bytes && estimate_memory(k, b) > *config.memory_budget_bytes) {
    throw Error("memory-budget-exceeded", "batch of " + std::to_string(b) + " records of " + std::to_string(k) +
                                              " activations needs " + std::to_string(estimate_memory(k, b)) + " bytes");
  }
  const std::size_t identity = provider.identity_index();
  if (want_gf && identity >= m) throw Error("missing-identity", "identity transformation index out of range");

  const WorkerPool pool(config.deterministic ? 1 : config.jobs);
  RunStats stats;

  // Accumulator state, indexed by scalar activation.
  std::vector<double> tv_sum(want_tv ? k : 0, 0.0);
  std::vector<VarianceAccumulator> sv_cols(want_sv ? m * k : 0);
  std::vector<DistanceAccumulator> td_acc(want_td ? k : 0), sd_acc(want_sd ? k : 0);
  std::vector<double> anova_sums(want_anova ? m * k : 0, 0.0), anova_ssw(want_anova ? k : 0, 0.0);
  std::vector<VarianceAccumulator> gf_base(want_gf ? k : 0);
  std::vector<double> gf_threshold(want_gf ? k : 0, 0.0);
  std::vector<std::uint32_t> gf_local(want_gf ? k : 0, 0), gf_global(want_gf ? k : 0, 0);
  detail::OpenLines open_rows;

  std::vector<STRecord> records;
  records.reserve(b);

  struct SweepPlan {
    PassOrder order;
    std::size_t pass;
    bool tv = false, td = false, sv = false, sd = false, anova1 = false, anova2 = false, gf1 = false, gf2 = false;
  };

  auto sweep = [&](const SweepPlan& plan, const std::function<void(const Batch&, std::span<const STRecord>)>& consume) {
    SweepStats s{plan.order, plan.pass, 0, 0};
    BatchPlan bp{n, m, b, plan.order, plan.pass, opts.shuffle_seed};
    bp.for_each_batch([&](const Batch& batch) {
      records.resize(batch.cells.size());
      stats.peak_retained_records = std::max(stats.peak_retained_records, records.size());
      try {
        provider.fetch(batch.cells, records, pool);
      } catch (const Error& e) {
        const auto& c = batch.cells.front();
        throw Error(e.code(), std::string(e.what()) + " (batch starting at sample " + std::to_string(c.sample) +
                                  ", transformation " + std::to_string(c.transformation) + ")");
      }
      for (std::size_t r = 0; r < records.size(); ++r) {
        if (records[r].values.size() != k) throw Error("shape-error", "provider returned a record of the wrong size");
      }
      s.provider_invocations += batch.cells.size();
      ++s.batches;
      consume(batch, records);
    });
    stats.sweeps.push_back(s);
  };

  auto pair_distances = [&](const Batch& batch, std::span<const STRecord> recs, std::vector<DistanceAccumulator>& acc,
                            std::size_t lo, std::size_t hi) {
    for (std::size_t blk = 0; blk < batch.block_count(); ++blk) {
      const std::size_t s0 = batch.block_starts[blk], s1 = batch.block_starts[blk + 1];
      for (std::size_t a = s0; a < s1; ++a) {
        const double* xa = recs[a].values.data();
        for (std::size_t c = a + 1; c < s1; ++c) {
          const double* xc = recs[c].values.data();
          if (opts.distance == DistanceKind::squared_euclidean) {
            for (std::size_t i = lo; i < hi; ++i) {
              const double d = xa[i] - xc[i];
              acc[i].distance_sum += 2.0 * d * d;
            }
          } else {
            for (std::size_t i = lo; i < hi; ++i) acc[i].distance_sum += 2.0 * std::abs(xa[i] - xc[i]);
          }
        }
      }
    }
  };
  auto count_pairs = [](const Batch& batch, std::vector<DistanceAccumulator>& acc) {
    std::uint64_t pairs = 0;
    for (std::size_t blk = 0; blk < batch.block_count(); ++blk) {
      const std::uint64_t len = batch.block_starts[blk + 1] - batch.block_starts[blk];
      pairs += len * (len - 1);
    }
    for (auto& a : acc) a.pair_count += pairs;
  };

  auto run_plan = [&](const SweepPlan& plan) {
    sweep(plan, [&](const Batch& batch, std::span<const STRecord> recs) {
      // Line bookkeeping is serial; the per-activation work below is sharded.
      std::vector<detail::OpenLines::Line*> row_of(plan.tv ? recs.size() : 0);
      if (plan.tv) {
        for (std::size_t r = 0; r < recs.size(); ++r) {
          auto& line = open_rows.lines[recs[r].sample_index];
          if (line.acc.empty()) line.acc.resize(k);
          row_of[r] = &line;
        }
      }
      pool.parallel_for(k, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = 0; r < recs.size(); ++r) {
          const auto& rec = recs[r];
          const double* x = rec.values.data();
          const std::size_t j = rec.transformation_index;
          if (plan.tv) {
            auto* acc = row_of[r]->acc.data();
            for (std::size_t i = lo; i < hi; ++i) acc[i].update(x[i]);
          }
          if (plan.sv) {
            auto* acc = sv_cols.data() + j * k;
            for (std::size_t i = lo; i < hi; ++i) acc[i].update(x[i]);
          }
          if (plan.anova1) {
            double* sums = anova_sums.data() + j * k;
            for (std::size_t i = lo; i < hi; ++i) sums[i] += x[i];
          }
          if (plan.anova2) {
            const double* sums = anova_sums.data() + j * k;
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t i = lo; i < hi; ++i) {
              const double d = x[i] - sums[i] * inv_n;
              anova_ssw[i] += d * d;
            }
          }
          if (plan.gf1 && j == identity) {
            for (std::size_t i = lo; i < hi; ++i) gf_base[i].update(x[i]);
          }
          if (plan.gf2) {
            for (std::size_t i = lo; i < hi; ++i) {
              const bool fires = x[i] > gf_threshold[i];
              gf_local[i] += fires;
              if (j == identity) gf_global[i] += fires;
            }
          }
        }
        if (plan.td) pair_distances(batch, recs, td_acc, lo, hi);
        if (plan.sd) pair_distances(batch, recs, sd_acc, lo, hi);
      }, 256);
      if (plan.td) count_pairs(batch, td_acc);
      if (plan.sd) count_pairs(batch, sd_acc);
      if (plan.tv) {
        for (std::size_t r = 0; r < recs.size(); ++r) {
          auto it = open_rows.lines.find(recs[r].sample_index);
          if (it == open_rows.lines.end() || ++it->second.seen < m) continue;
          const auto& acc = it->second.acc;
          pool.parallel_for(k, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) tv_sum[i] += line_spread(acc[i], opts);
          }, 256);
          open_rows.lines.erase(it);
        }
      }
    });
  };

  const auto native = provider.native_order();
  SweepPlan first{want_td ? PassOrder::sample_major : native.value_or(PassOrder::sample_major), 0};
  first.tv = want_tv;
  first.td = want_td;
  first.anova1 = want_anova;
  first.gf1 = want_gf;
  SweepPlan second{want_sd ? PassOrder::transformation_major : native.value_or(PassOrder::transformation_major), 0};
  second.sv = want_sv;
  second.sd = want_sd;
  second.anova2 = want_anova;
  second.gf2 = want_gf;

  if (first.tv || first.td || first.anova1 || first.gf1) run_plan(first);
  if (!open_rows.lines.empty()) throw Error("internal-error", "rows left open after a full sweep");
  if (want_gf) {
    for (std::size_t i = 0; i < k; ++i) {
      const double sd = gf_base[i].stddev();
      gf_threshold[i] = goodfellow_threshold(gf_base[i].mean(), sd, opts.goodfellow_alpha, opts.goodfellow_tail);
    }
  }
  if (second.sv || second.sd || second.anova2 || second.gf2) run_plan(second);
  for (std::size_t p = 1; p < opts.distance_passes; ++p) {
    if (want_td) {
      SweepPlan extra{PassOrder::sample_major, p};
      extra.td = true;
      run_plan(extra);
    }
    if (want_sd) {
      SweepPlan extra{PassOrder::transformation_major, p};
      extra.sd = true;
      run_plan(extra);
    }
  }

  // Per-scalar results.
  std::vector<double> tv(want_tv ? k : 0), sv(want_sv ? k : 0), td(want_td ? k : 0), sd(want_sd ? k : 0);
  for (std::size_t i = 0; i < tv.size(); ++i) tv[i] = tv_sum[i] / static_cast<double>(n);
  for (std::size_t i = 0; i < sv.size(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) total += line_spread(sv_cols[j * k + i], opts);
    sv[i] = total / static_cast<double>(m);
  }
  for (std::size_t i = 0; i < td.size(); ++i) td[i] = mean_distance_from_pairs(td_acc[i], m);
  for (std::size_t i = 0; i < sd.size(); ++i) sd[i] = mean_distance_from_pairs(sd_acc[i], n);

  std::vector<AnovaResult> anova(want_anova ? k : 0);
  if (want_anova) {
    const double threshold = anova_threshold(opts, k);
    std::vector<double> means(m);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < m; ++j) means[j] = anova_sums[j * k + i] / static_cast<double>(n);
      anova[i] = anova_from_summaries(means, n, anova_ssw[i], threshold);
    }
  }
  std::vector<MeasureValue> gf(want_gf ? k : 0);
  for (std::size_t i = 0; i < gf.size(); ++i) {
    const GoodfellowCounts c{gf_local[i], n * m, gf_global[i], n};
    gf[i] = goodfellow_value(c, gf_base[i].stddev(), gf_threshold[i]);
  }

  // Unit assembly.
  MeasureReport report;
  report.manifest = manifest;
  report.st_shape = shape;
  report.options = options_to_json(opts);
  report.options["batch_size"] = b;
  report.provenance = provider.provenance();

  auto plain = [](double v) { return MeasureValue{"", v, !std::isnan(v), {}}; };

  for (auto id : measures) {
    MeasureResult result;
    result.measure = to_string(id);
    for (std::size_t e = 0; e < manifest.size(); ++e) {
      const auto& entry = manifest[e];
      const std::size_t base = manifest.offset(e);
      const std::size_t cells = entry.cells_per_unit();
      for (std::size_t u = 0; u < entry.unit_count(); ++u) {
        std::vector<std::size_t> idx(cells);
        for (std::size_t c = 0; c < cells; ++c) idx[c] = base + cell_index(entry, u, c);
        auto gather = [&](const std::vector<double>& src) {
          std::vector<double> out(cells);
          for (std::size_t c = 0; c < cells; ++c) out[c] = src[idx[c]];
          return out;
        };
        auto spatial_mean = [&](const std::vector<double>& src) {
          double total = 0.0;
          for (auto i : idx) total += src[i];
          return total / static_cast<double>(cells);
        };
        MeasureValue v;
        switch (id) {
          case MeasureId::tv: v = plain(spatial_mean(tv)); break;
          case MeasureId::sv: v = plain(spatial_mean(sv)); break;
          case MeasureId::td: v = plain(spatial_mean(td)); break;
          case MeasureId::sd: v = plain(spatial_mean(sd)); break;
          case MeasureId::nv:
            v = cells == 1 ? normalized_variance(tv[idx[0]], sv[idx[0]], opts)
                           : aggregate_feature_map(gather(tv), gather(sv), opts, "tv", "sv").normalized;
            break;
          case MeasureId::nd:
            v = cells == 1 ? normalized_distance(td[idx[0]], sd[idx[0]], opts)
                           : aggregate_feature_map(gather(td), gather(sd), opts, "td", "sd").normalized;
            break;
          case MeasureId::anova: {
            if (cells == 1) {
              const auto& a = anova[idx[0]];
              v = std::isnan(a.p) ? MeasureValue::invalid()
                                  : MeasureValue{"", a.rejected ? 1.0 : 0.0, true, {{"f", a.f}, {"p", a.p}}};
            } else {
              double rejected = 0.0;
              std::size_t ok = 0;
              for (auto i : idx) {
                if (std::isnan(anova[i].p)) continue;
                ++ok;
                rejected += anova[i].rejected ? 1.0 : 0.0;
              }
              v = ok == 0 ? MeasureValue::invalid() : MeasureValue{"", rejected / static_cast<double>(ok), true, {{"cells", static_cast<double>(ok)}}};
            }
            break;
          }
          case MeasureId::goodfellow: {
            if (cells == 1) {
              v = gf[idx[0]];
            } else {
              double total = 0.0;
              std::size_t ok = 0;
              for (auto i : idx) {
                if (!gf[i].valid) continue;
                ++ok;
                total += gf[i].value;
              }
              v = ok == 0 ? MeasureValue::invalid() : MeasureValue{"", total / static_cast<double>(ok), true, {{"cells", static_cast<double>(ok)}}};
            }
            break;
          }
        }
        v.activation_name = unit_name(entry, u);
        result.values.push_back(std::move(v));
      }
    }
    result.layers = layer_aggregate(manifest, result.values);
    if (id == MeasureId::goodfellow) {
      std::vector<double> deepest;
      const std::size_t last_layer = manifest.entries().back().layer_index;
      const auto layers = unit_layers(manifest);
      for (std::size_t u = 0; u < result.values.size(); ++u) {
        if (layers[u].layer_index == last_layer && result.values[u].is_finite()) deepest.push_back(result.values[u].value);
      }
      if (!deepest.empty()) result.invp = invp_aggregate(deepest, opts.invp_proportion);
    }
    report.results.push_back(std::move(result));
  }
  if (stats_out) *stats_out = std::move(stats);
  return report;
}

}  // namespace tmeasures
