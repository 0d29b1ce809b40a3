// tm: measure the invariance of network activations to input transformations.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "png_writer.hpp"
#include "tmeasures/tmeasures.hpp"

namespace fs = std::filesystem;
using namespace tmeasures;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SourceArgs {
  std::string model;
  std::string dataset;
  std::string data_dir;
  std::string dump;
  std::string transforms = "rotation:25";
  std::size_t samples = 385;
  std::uint64_t seed = 0;
  std::size_t filters = 16;
  std::size_t hidden = 64;
};

struct RunArgs {
  std::string measures = "nv";
  std::size_t batch = 64;
  std::size_t jobs = default_worker_count();
  bool deterministic = false;
  double gf_alpha = 0.01;
  std::string gf_tail = "upper";
  double anova_alpha = 0.01;
  bool no_bonferroni = false;
  double dead_epsilon = 0.0;
  bool use_std = false;
  std::string nv_aggregation = "before";
  std::string distance = "squared-euclidean";
  std::size_t distance_passes = 1;
  double invp = 1.0;
  std::optional<std::uint64_t> memory_budget;
  std::string variance_denominator = "sample";
};

void add_data_flags(CLI::App* cmd, SourceArgs& a) {
  cmd->add_option("--dataset", a.dataset, "mnist, cifar10 or synthetic")->check(CLI::IsMember({"mnist", "cifar10", "synthetic"}));
  cmd->add_option("--data-dir", a.data_dir, "dataset directory (default: $TM_DATA_DIR)");
  cmd->add_option("--transforms", a.transforms, "rotation:<m> | scale:<factors> | translation:<f1,f2,..> | file:<path>")
      ->capture_default_str();
  cmd->add_option("--samples", a.samples, "number of test samples")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "seed for initialization, synthetic data and shuffles")->capture_default_str();
}

void add_model_flags(CLI::App* cmd, SourceArgs& a) {
  cmd->add_option("--model", a.model, "NNW weight file, or 'simpleconv' for a seeded random network");
  cmd->add_option("--filters", a.filters, "first-layer filters of the simpleconv network")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--hidden", a.hidden, "hidden units of the simpleconv network")->capture_default_str()->check(CLI::PositiveNumber);
}

void add_run_flags(CLI::App* cmd, RunArgs& r) {
  cmd->add_option("--batch", r.batch, "records per batch")->capture_default_str();
  cmd->add_option("--jobs", r.jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_flag("--deterministic", r.deterministic, "single worker, fixed iteration order");
  cmd->add_option("--gf-alpha", r.gf_alpha, "Goodfellow firing probability")->capture_default_str();
  cmd->add_option("--gf-tail", r.gf_tail, "Goodfellow threshold tail")->check(CLI::IsMember({"upper", "lower"}))->capture_default_str();
  cmd->add_option("--anova-alpha", r.anova_alpha, "ANOVA significance level")->capture_default_str();
  cmd->add_flag("--no-bonferroni", r.no_bonferroni, "do not divide the ANOVA level by the number of activations");
  cmd->add_option("--dead-epsilon", r.dead_epsilon, "tolerance for zero variance")->capture_default_str();
  cmd->add_flag("--use-std", r.use_std, "use standard deviations instead of variances");
  cmd->add_option("--nv-aggregation", r.nv_aggregation, "feature map aggregation")
      ->check(CLI::IsMember({"before", "after"}))->capture_default_str();
  cmd->add_option("--distance", r.distance, "distance for TD/SD/ND")
      ->check(CLI::IsMember({"squared-euclidean", "absolute"}))->capture_default_str();
  cmd->add_option("--distance-passes", r.distance_passes, "shuffled passes of the block approximation")
      ->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--invp", r.invp, "Invp top proportion")->capture_default_str();
  cmd->add_option("--memory-budget", r.memory_budget, "maximum bytes of activation records per batch");
  cmd->add_option("--variance-denominator", r.variance_denominator, "sample (n-1) or population (n)")
      ->check(CLI::IsMember({"sample", "population"}))->capture_default_str();
}

RunConfig make_run_config(const RunArgs& r, std::uint64_t seed) {
  RunConfig c;
  c.batch_size = r.batch;
  c.memory_budget_bytes = r.memory_budget;
  c.jobs = r.jobs;
  c.deterministic = r.deterministic;
  auto& o = c.options;
  o.use_std_instead_of_variance = r.use_std;
  o.dead_epsilon = r.dead_epsilon;
  o.nv_aggregation = r.nv_aggregation == "after" ? NvAggregation::after : NvAggregation::before;
  o.anova_alpha = r.anova_alpha;
  o.bonferroni = !r.no_bonferroni;
  o.goodfellow_alpha = r.gf_alpha;
  o.goodfellow_tail = r.gf_tail == "lower" ? GoodfellowTail::lower : GoodfellowTail::upper;
  o.invp_proportion = r.invp;
  o.distance = parse_distance_kind(r.distance);
  o.distance_passes = r.distance_passes;
  o.shuffle_seed = seed;
  o.denominator = r.variance_denominator == "population" ? VarianceDenominator::population : VarianceDenominator::sample;
  try {
    o.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

std::vector<MeasureId> parse_measures(const std::string& s) {
  try {
    return parse_measure_list(s);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

TransformationSet parse_transforms(const std::string& s) {
  try {
    return parse_transformation_set(s);
  } catch (const Error& e) {
    if (e.code() == "io-error") throw;
    throw UsageError(e.what());
  }
}

fs::path resolve_data_dir(const SourceArgs& a) {
  if (!a.data_dir.empty()) return a.data_dir;
  if (const char* env = std::getenv("TM_DATA_DIR"); env && *env) return env;
  throw UsageError("--dataset " + a.dataset + " needs --data-dir or TM_DATA_DIR");
}

Dataset load_dataset(const SourceArgs& a, std::size_t count, const TensorShape& synthetic_shape) {
  if (a.dataset == "synthetic") return synthetic_dataset(count, synthetic_shape.height, synthetic_shape.width, synthetic_shape.channels, a.seed);
  const fs::path dir = resolve_data_dir(a);
  Dataset ds;
  if (a.dataset == "mnist") {
    fs::path images = dir / "t10k-images-idx3-ubyte";
    if (!fs::exists(images)) images = dir / "t10k-images.idx3-ubyte";
    fs::path labels = dir / "t10k-labels-idx1-ubyte";
    if (!fs::exists(labels)) labels = dir / "t10k-labels.idx1-ubyte";
    ds = load_mnist_idx(images, fs::exists(labels) ? labels : fs::path{});
  } else {
    ds = load_cifar10_binary(dir);
  }
  return ds.head(count);
}

struct Model {
  std::shared_ptr<const Network> network;
  std::string id;
};

Model load_model(const SourceArgs& a, const TensorShape& input) {
  if (a.model == "simpleconv") {
    auto spec = simple_conv(input, a.filters, a.hidden);
    auto weights = random_init(spec, a.seed);
    return {std::make_shared<const Network>(spec, weights), "simpleconv(seed=" + std::to_string(a.seed) + ")"};
  }
  auto [spec, weights] = read_nnw(a.model);
  return {std::make_shared<const Network>(spec, weights), fs::path(a.model).filename().string()};
}

TensorShape dataset_input_shape(const SourceArgs& a) {
  if (a.model != "simpleconv" && a.dataset == "synthetic") return read_nnw(a.model).first.input;
  if (a.dataset == "cifar10") return {32, 32, 3};
  return {28, 28, 1};
}

void require_model_source(const SourceArgs& a) {
  if (a.model.empty() || a.dataset.empty()) throw UsageError("specify --model together with --dataset");
}

std::unique_ptr<ActivationProvider> make_provider(const SourceArgs& a, std::size_t samples, const TransformationSet& transforms) {
  const TensorShape input = dataset_input_shape(a);
  Dataset ds = load_dataset(a, samples, input);
  Model model = load_model(a, {ds.height, ds.width, ds.channels});
  return std::make_unique<ModelProvider>(model.network, std::move(ds), transforms, model.id);
}

void print_layers(const MeasureReport& report) {
  std::cout << "measure\tlayer\tname\tmean\tvalid\tinf\tinvalid\n";
  for (const auto& r : report.results) {
    for (const auto& l : r.layers) {
      std::cout << r.measure << '\t' << l.layer_index << '\t' << l.layer_name << '\t' << (l.valid ? format_real(l.mean) : "invalid")
                << '\t' << l.valid_count << '\t' << l.infinity_count << '\t' << l.invalid_count << '\n';
    }
    if (r.invp) std::cout << r.measure << "\tinvp\t" << format_real(*r.invp) << '\n';
  }
}

// ---------------------------------------------------------------------------

int cmd_measure(const SourceArgs& a, const RunArgs& r, const std::string& output, const std::string& csv,
                const std::string& heatmap, const std::string& layer_plot) {
  const bool model_source = !a.model.empty() || !a.dataset.empty();
  if (model_source && !a.dump.empty()) throw UsageError("--dump conflicts with --model/--dataset; choose one source");
  if (!model_source && a.dump.empty()) throw UsageError("specify --dump or --model with --dataset");
  const auto measures = parse_measures(r.measures);
  const RunConfig config = make_run_config(r, a.seed);

  std::unique_ptr<ActivationProvider> provider;
  if (!a.dump.empty()) {
    provider = std::make_unique<DumpProvider>(a.dump);
  } else {
    require_model_source(a);
    provider = make_provider(a, a.samples, parse_transforms(a.transforms));
  }
  MeasureReport report = run_measure(*provider, measures, config);
  report.provenance["seed"] = a.seed;
  write_text_file(output, serialize_json(report));
  if (!csv.empty()) write_text_file(csv, serialize_csv(report));
  const std::string first = to_string(measures.front());
  if (!heatmap.empty()) render_heatmap(report, first, heatmap);
  if (!layer_plot.empty()) render_layer_plot(report, first, layer_plot);
  print_layers(report);
  return 0;
}

int cmd_converge(const SourceArgs& a, const RunArgs& r, std::vector<std::size_t> sample_grid, std::vector<std::size_t> transform_grid,
                 const std::string& family, const std::string& output, const std::string& heatmap) {
  require_model_source(a);
  try {
    validate_grid_axis(sample_grid, "sample");
    validate_grid_axis(transform_grid, "transform");
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (sample_grid.size() * transform_grid.size() < 2) throw UsageError("need >= 2 cells in the convergence grid");
  if (family == "scale") {
    for (auto t : transform_grid)
      if (t % 3 != 1) throw UsageError("scale sets have 3*factors+1 transformations; " + std::to_string(t) + " is not of that form");
  }
  const auto measures = parse_measures(r.measures);
  if (measures.size() != 1) throw UsageError("converge takes exactly one measure");
  const RunConfig config = make_run_config(r, a.seed);

  const TensorShape input = dataset_input_shape(a);
  const Dataset full = load_dataset(a, sample_grid.back(), input);
  const Model model = load_model(a, {full.height, full.width, full.channels});
  const std::string id = to_string(measures.front());
  const auto grid = convergence_study(sample_grid, transform_grid, [&](std::size_t s, std::size_t t) {
    const auto set = family == "scale" ? scale_set((t - 1) / 3) : rotation_set(t);
    ModelProvider provider(model.network, full.head(s), set, model.id);
    std::cerr << "cell samples=" << s << " transformations=" << t << '\n';
    return run_measure(provider, measures, config).result(id).values;
  });
  write_text_file(output, convergence_csv(grid));
  if (!heatmap.empty()) write_text_file(heatmap, grid_svg(grid));
  std::cout << "samples\ttransformations\tmean_error\tmedian_error\n";
  for (std::size_t s = 0; s < grid.sample_sizes.size(); ++s)
    for (std::size_t t = 0; t < grid.transform_sizes.size(); ++t)
      std::cout << grid.sample_sizes[s] << '\t' << grid.transform_sizes[t] << '\t' << format_real(grid.mean_error[s][t]) << '\t'
                << format_real(grid.median_error[s][t]) << '\n';
  std::cout << "median error non-increasing along both axes: " << (grid.median_non_increasing() ? "yes" : "no") << '\n';
  return 0;
}

int cmd_stability(const std::vector<std::string>& paths, double alpha, const std::string& measure, std::size_t permutations,
                  std::uint64_t seed, const std::string& output) {
  if (paths.size() < 2) throw UsageError("stability needs at least two reports");
  std::vector<MeasureReport> reports;
  for (const auto& p : paths) reports.push_back(load_report(p));
  for (const auto& rep : reports)
    if (!rep.has(measure)) throw UsageError("a report lacks measure '" + measure + "'");
  std::vector<LayerStability> layers;
  try {
    layers = stability_analysis(reports, measure, alpha, permutations, seed);
  } catch (const Error& e) {
    if (e.code() == "layer-mismatch" || e.code() == "invalid-argument") throw UsageError(e.what());
    throw;
  }
  nlohmann::json out = nlohmann::json::array();
  std::cout << "layer\tname\tstatistic\tp\treject\n";
  for (const auto& l : layers) {
    std::cout << l.layer_index << '\t' << l.layer_name << '\t';
    if (!l.tested) {
      std::cout << "-\t-\tuntested\n";
      out.push_back({{"layer_index", l.layer_index}, {"layer_name", l.layer_name}, {"tested", false}});
      continue;
    }
    std::cout << format_real(l.test.statistic) << '\t' << format_real(l.test.p_value) << '\t' << (l.test.reject ? "true" : "false") << '\n';
    out.push_back({{"layer_index", l.layer_index},
                   {"layer_name", l.layer_name},
                   {"tested", true},
                   {"statistic", l.test.statistic},
                   {"p_value", l.test.p_value},
                   {"reject", l.test.reject},
                   {"permutations", l.test.permutations}});
  }
  if (!output.empty()) {
    write_text_file(output, nlohmann::json{{"measure", measure}, {"alpha", alpha}, {"reports", paths}, {"layers", out}}.dump(1) + "\n");
  }
  return 0;
}

int cmd_selfcheck(std::vector<std::string> suites, std::uint64_t seed, bool inject_fault) {
  if (suites.empty()) suites = selfcheck_suites();
  SelfcheckOptions o{seed, inject_fault};
  bool ok = true;
  for (const auto& s : suites) {
    const auto r = run_selfcheck_suite(s, o);
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.suite;
    if (!r.passed) std::cout << ": " << r.failed_property;
    if (!r.detail.empty()) std::cout << " (" << r.detail << ")";
    std::cout << '\n';
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int cmd_dump_transformed(const SourceArgs& a, const std::string& output) {
  if (a.dataset.empty()) throw UsageError("dump-transformed needs --dataset");
  const auto set = parse_transforms(a.transforms);
  const Dataset ds = load_dataset(a, a.samples, a.dataset == "cifar10" ? TensorShape{32, 32, 3} : TensorShape{28, 28, 1});
  const std::size_t h = ds.height, w = ds.width, c = ds.channels, pad = 2;
  const std::size_t cols = set.size(), rows = ds.size();
  const std::size_t W = cols * (w + pad) + pad, H = rows * (h + pad) + pad;
  std::vector<std::uint8_t> canvas(W * H * c, 255);
  for (std::size_t i = 0; i < rows; ++i) {
    const ImageF src = ds.image(i);
    for (std::size_t j = 0; j < cols; ++j) {
      const ImageF img = apply(set[j], src);
      const std::size_t oy = pad + i * (h + pad), ox = pad + j * (w + pad);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const float v = std::clamp(img.at(y, x, ch), 0.0f, 1.0f);
            canvas[((oy + y) * W + ox + x) * c + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
          }
    }
  }
  tm_tool::write_png(output, W, H, c, canvas);
  std::cout << "wrote " << rows << " x " << cols << " grid to " << output << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tm: invariance measures for neural network activations"};
  app.require_subcommand(1);

  SourceArgs source;
  RunArgs run;

  std::string output, csv, heatmap, layer_plot;
  auto* measure = app.add_subcommand("measure", "compute measures and write a report");
  add_model_flags(measure, source);
  add_data_flags(measure, source);
  measure->add_option("--dump", source.dump, "STDUMP activation file");
  measure->add_option("--measure", run.measures, "comma-separated: tv,sv,nv,td,sd,nd,anova,goodfellow")->capture_default_str();
  measure->add_option("--output", output, "report JSON path")->required();
  measure->add_option("--csv", csv, "CSV report path");
  measure->add_option("--heatmap", heatmap, "SVG heatmap path");
  measure->add_option("--layer-plot", layer_plot, "SVG per-layer plot path");
  add_run_flags(measure, run);

  std::vector<std::size_t> sample_grid{24, 96, 384}, transform_grid{4, 8, 16, 24};
  std::string family = "rotation", grid_output, grid_heatmap;
  auto* converge = app.add_subcommand("converge", "relative error of a measure over sample and transformation counts");
  add_model_flags(converge, source);
  add_data_flags(converge, source);
  converge->add_option("--sample-grid", sample_grid, "ascending sample counts")->delimiter(',');
  converge->add_option("--transform-grid", transform_grid, "ascending transformation counts")->delimiter(',');
  converge->add_option("--family", family, "transformation family")->check(CLI::IsMember({"rotation", "scale"}))->capture_default_str();
  converge->add_option("--measure", run.measures, "measure to study")->capture_default_str();
  converge->add_option("--output", grid_output, "grid CSV path")->required();
  converge->add_option("--heatmap", grid_heatmap, "grid SVG path");
  add_run_flags(converge, run);

  std::vector<std::string> report_paths;
  double alpha = 0.01;
  std::string stability_measure = "nv", stability_output;
  std::size_t permutations = 2000;
  std::uint64_t stability_seed = 0;
  auto* stability = app.add_subcommand("stability", "per-layer Anderson-Darling comparison of reports");
  stability->add_option("reports", report_paths, "report JSON files")->required();
  stability->add_option("--alpha", alpha, "significance level")->capture_default_str();
  stability->add_option("--measure", stability_measure, "measure to compare")->capture_default_str();
  stability->add_option("--permutations", permutations, "permutations for the p-value")->capture_default_str()->check(CLI::Range(2000, 100000000));
  stability->add_option("--seed", stability_seed, "permutation seed")->capture_default_str();
  stability->add_option("--output", stability_output, "result JSON path");

  std::vector<std::string> suites;
  std::uint64_t selfcheck_seed = 0;
  bool inject_fault = false;
  auto* selfcheck = app.add_subcommand("selfcheck", "run the built-in property suites");
  selfcheck->add_option("--suite", suites, "suite to run (repeatable)")->check(CLI::IsMember(selfcheck_suites()));
  selfcheck->add_option("--seed", selfcheck_seed, "seed for the randomized suites")->capture_default_str();
#ifdef TM_ENABLE_FAULT_INJECTION
  selfcheck->add_flag("--inject-fault", inject_fault, "corrupt every suite (test build only)");
#endif

  std::string png_output;
  SourceArgs png_source;
  png_source.samples = 4;
  png_source.transforms = "rotation:8";
  auto* dump_transformed = app.add_subcommand("dump-transformed", "write transformed samples as a PNG grid");
  add_data_flags(dump_transformed, png_source);
  dump_transformed->add_option("--output", png_output, "PNG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*measure) return cmd_measure(source, run, output, csv, heatmap, layer_plot);
    if (*converge) return cmd_converge(source, run, sample_grid, transform_grid, family, grid_output, grid_heatmap);
    if (*stability) return cmd_stability(report_paths, alpha, stability_measure, permutations, stability_seed, stability_output);
    if (*selfcheck) return cmd_selfcheck(suites, selfcheck_seed, inject_fault);
    if (*dump_transformed) return cmd_dump_transformed(png_source, png_output);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << "run 'tm --help' for usage\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
