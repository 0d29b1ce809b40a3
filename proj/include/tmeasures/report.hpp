#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmeasures/core.hpp"
#include "tmeasures/error.hpp"
#include "tmeasures/measures.hpp"
#include "tmeasures/stdump.hpp"

namespace tmeasures {

inline constexpr const char* kReportSchema = "tm-report/1";

/// Per-layer mean excluding +∞ and invalid values, which are only counted.
struct LayerSummary {
  std::size_t layer_index = 0;
  std::string layer_name;
  double mean = std::numeric_limits<double>::quiet_NaN();
  bool valid = false;
  std::size_t valid_count = 0;
  std::size_t infinity_count = 0;
  std::size_t invalid_count = 0;
};

struct MeasureResult {
  std::string measure;
  std::vector<MeasureValue> values;  // one per unit, manifest order
  std::vector<LayerSummary> layers;
  std::optional<double> invp;
};

struct MeasureReport {
  ActivationManifest manifest;
  STShape st_shape;
  std::vector<MeasureResult> results;
  nlohmann::json options = nlohmann::json::object();
  nlohmann::json provenance = nlohmann::json::object();

  const MeasureResult& result(const std::string& id) const {
    for (const auto& r : results)
      if (r.measure == id) return r;
    throw Error("invalid-argument", "report has no measure '" + id + "'");
  }
  bool has(const std::string& id) const {
    for (const auto& r : results)
      if (r.measure == id) return true;
    return false;
  }
};

/// Name of unit u of an entry: "conv2d_0[3]".
inline std::string unit_name(const ManifestEntry& e, std::size_t unit) {
  return e.name + "[" + std::to_string(unit) + "]";
}

/// Layer of every unit, in manifest order.
struct UnitLayer {
  std::size_t layer_index;
  std::string layer_name;
};

inline std::vector<UnitLayer> unit_layers(const ActivationManifest& manifest) {
  std::vector<UnitLayer> out;
  out.reserve(manifest.unit_count());
  std::map<std::size_t, std::string> first_name;
  for (const auto& e : manifest.entries()) first_name.try_emplace(e.layer_index, e.name);
  for (const auto& e : manifest.entries()) {
    for (std::size_t u = 0; u < e.unit_count(); ++u) out.push_back({e.layer_index, first_name[e.layer_index]});
  }
  return out;
}

inline std::vector<LayerSummary> layer_aggregate(const ActivationManifest& manifest, const std::vector<MeasureValue>& values) {
  const auto layers = unit_layers(manifest);
  if (layers.size() != values.size()) throw Error("shape-error", "value count does not match the manifest's units");
  std::vector<LayerSummary> out;
  std::vector<double> sums;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (out.empty() || out.back().layer_index != layers[i].layer_index) {
      out.push_back({layers[i].layer_index, layers[i].layer_name});
      sums.push_back(0.0);
    }
    auto& s = out.back();
    const auto& v = values[i];
    if (!v.valid || std::isnan(v.value)) {
      ++s.invalid_count;
    } else if (std::isinf(v.value)) {
      ++s.infinity_count;
    } else {
      ++s.valid_count;
      sums.back() += v.value;
    }
  }
  for (std::size_t l = 0; l < out.size(); ++l) {
    if (out[l].valid_count > 0) {
      out[l].mean = sums[l] / static_cast<double>(out[l].valid_count);
      out[l].valid = true;
    }
  }
  return out;
}

inline std::vector<LayerSummary> layer_aggregate(const MeasureReport& report, const std::string& measure) {
  return layer_aggregate(report.manifest, report.result(measure).values);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json encode_real(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double decode_real(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw Error("format-error", "unexpected real token '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace detail

inline nlohmann::json options_to_json(const MeasureOptions& o) {
  return {{"use_std_instead_of_variance", o.use_std_instead_of_variance},
          {"dead_epsilon", o.dead_epsilon},
          {"nv_aggregation", o.nv_aggregation == NvAggregation::before ? "before" : "after"},
          {"anova_alpha", o.anova_alpha},
          {"bonferroni", o.bonferroni},
          {"goodfellow_alpha", o.goodfellow_alpha},
          {"goodfellow_tail", o.goodfellow_tail == GoodfellowTail::upper ? "upper" : "lower"},
          {"invp_proportion", o.invp_proportion},
          {"distance", to_string(o.distance)},
          {"distance_passes", o.distance_passes},
          {"shuffle_seed", o.shuffle_seed},
          {"variance_denominator", o.denominator == VarianceDenominator::sample ? "sample" : "population"}};
}

inline nlohmann::json report_to_json(const MeasureReport& report) {
  nlohmann::json measures = nlohmann::json::array();
  for (const auto& r : report.results) {
    nlohmann::json values = nlohmann::json::array();
    for (const auto& v : r.values) {
      nlohmann::json details = nlohmann::json::object();
      for (const auto& [key, d] : v.details) details[key] = detail::encode_real(d);
      values.push_back({{"name", v.activation_name}, {"value", v.valid ? detail::encode_real(v.value) : nlohmann::json(nullptr)},
                        {"details", details}});
    }
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : r.layers) {
      layers.push_back({{"layer_index", l.layer_index},
                        {"layer_name", l.layer_name},
                        {"mean", l.valid ? detail::encode_real(l.mean) : nlohmann::json(nullptr)},
                        {"valid_count", l.valid_count},
                        {"infinity_count", l.infinity_count},
                        {"invalid_count", l.invalid_count}});
    }
    nlohmann::json m{{"id", r.measure}, {"values", values}, {"layers", layers}};
    m["invp"] = r.invp ? detail::encode_real(*r.invp) : nlohmann::json(nullptr);
    measures.push_back(std::move(m));
  }
  return {{"schema", kReportSchema},
          {"manifest", manifest_to_json(report.manifest)},
          {"st_shape", {{"n", report.st_shape.n}, {"m", report.st_shape.m}, {"k", report.st_shape.k}}},
          {"options", report.options},
          {"provenance", report.provenance},
          {"measures", measures}};
}

inline MeasureReport report_from_json(const nlohmann::json& j) {
  MeasureReport report;
  try {
    if (j.at("schema").get<std::string>() != kReportSchema) throw Error("format-error", "unsupported report schema");
    report.manifest = manifest_from_json(j.at("manifest"));
    const auto& s = j.at("st_shape");
    report.st_shape = {s.at("n").get<std::size_t>(), s.at("m").get<std::size_t>(), s.at("k").get<std::size_t>()};
    report.options = j.at("options");
    report.provenance = j.at("provenance");
    for (const auto& mj : j.at("measures")) {
      MeasureResult r;
      r.measure = mj.at("id").get<std::string>();
      for (const auto& vj : mj.at("values")) {
        MeasureValue v;
        v.activation_name = vj.at("name").get<std::string>();
        v.value = detail::decode_real(vj.at("value"));
        v.valid = !vj.at("value").is_null();
        for (const auto& [key, d] : vj.at("details").items()) v.details[key] = detail::decode_real(d);
        r.values.push_back(std::move(v));
      }
      for (const auto& lj : mj.at("layers")) {
        LayerSummary l;
        l.layer_index = lj.at("layer_index").get<std::size_t>();
        l.layer_name = lj.at("layer_name").get<std::string>();
        l.valid = !lj.at("mean").is_null();
        l.mean = detail::decode_real(lj.at("mean"));
        l.valid_count = lj.at("valid_count").get<std::size_t>();
        l.infinity_count = lj.at("infinity_count").get<std::size_t>();
        l.invalid_count = lj.at("invalid_count").get<std::size_t>();
        r.layers.push_back(std::move(l));
      }
      if (!mj.at("invp").is_null()) r.invp = detail::decode_real(mj.at("invp"));
      report.results.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("format-error", std::string("malformed report: ") + e.what());
  }
  return report;
}

inline void require_nonempty(const MeasureReport& report) {
  bool any = false;
  for (const auto& r : report.results) any = any || !r.values.empty();
  if (!any) throw Error("empty-report", "report holds no measure values");
}

inline std::string serialize_json(const MeasureReport& report) {
  require_nonempty(report);
  return report_to_json(report).dump(1) + "\n";
}

inline MeasureReport parse_report(const std::string& text) {
  try {
    return report_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("format-error", std::string("report is not valid JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string format_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

namespace detail {
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}
}  // namespace detail

inline std::string serialize_csv(const MeasureReport& report) {
  require_nonempty(report);
  const auto layers = unit_layers(report.manifest);
  std::string out = "layer_index,layer_name,activation_name,measure,value\n";
  for (const auto& r : report.results) {
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      const auto& v = r.values[i];
      out += std::to_string(layers[i].layer_index) + ',' + detail::csv_field(layers[i].layer_name) + ',' +
             detail::csv_field(v.activation_name) + ',' + r.measure + ',';
      if (v.valid && !std::isnan(v.value)) out += format_real(v.value);
      out += '\n';
    }
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write-error", "cannot create '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw Error("write-error", "failed writing '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io-error", "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline MeasureReport load_report(const std::filesystem::path& path) { return parse_report(read_text_file(path)); }

}  // namespace tmeasures
