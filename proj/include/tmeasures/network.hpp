#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmeasures/binary_io.hpp"
#include "tmeasures/core.hpp"
#include "tmeasures/error.hpp"
#include "tmeasures/image.hpp"

namespace tmeasures {

enum class LayerType { conv2d, maxpool2d, dense, activation, flatten };
enum class ActivationFunction { elu, relu, softmax };
enum class Padding { same, valid };

struct LayerSpec {
  LayerType type = LayerType::flatten;
  std::size_t units = 0;  // output channels (conv2d) or features (dense)
  Padding padding = Padding::same;
  ActivationFunction function = ActivationFunction::elu;

  bool operator==(const LayerSpec&) const = default;
};

namespace layers {
inline LayerSpec conv2d(std::size_t out_channels, Padding padding = Padding::same) {
  return {LayerType::conv2d, out_channels, padding, ActivationFunction::elu};
}
inline LayerSpec maxpool2d() { return {LayerType::maxpool2d}; }
inline LayerSpec dense(std::size_t out_features) { return {LayerType::dense, out_features}; }
inline LayerSpec elu() { return {LayerType::activation, 0, Padding::same, ActivationFunction::elu}; }
inline LayerSpec relu() { return {LayerType::activation, 0, Padding::same, ActivationFunction::relu}; }
inline LayerSpec softmax() { return {LayerType::activation, 0, Padding::same, ActivationFunction::softmax}; }
inline LayerSpec flatten() { return {LayerType::flatten}; }
}  // namespace layers

/// H×W×C for spatial tensors; flat vectors use (1, 1, size) with spatial=false.
struct TensorShape {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;
  bool spatial = true;

  std::size_t size() const { return height * width * channels; }
  bool operator==(const TensorShape&) const = default;
};

inline const char* layer_type_name(const LayerSpec& l) {
  switch (l.type) {
    case LayerType::conv2d: return "conv2d";
    case LayerType::maxpool2d: return "maxpool2d";
    case LayerType::dense: return "dense";
    case LayerType::flatten: return "flatten";
    case LayerType::activation:
      switch (l.function) {
        case ActivationFunction::elu: return "elu";
        case ActivationFunction::relu: return "relu";
        case ActivationFunction::softmax: return "softmax";
      }
  }
  return "unknown";
}

struct NetworkSpec {
  TensorShape input;
  std::vector<LayerSpec> layers;

  /// Output shape of every layer; throws shape-error on inconsistent stacks.
  std::vector<TensorShape> output_shapes() const {
    if (!input.spatial || input.size() == 0) throw Error("shape-error", "network input must be a non-empty H×W×C image");
    std::vector<TensorShape> out;
    TensorShape cur = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      const std::string where = " at layer " + std::to_string(i) + " (" + layer_type_name(l) + ")";
      switch (l.type) {
        case LayerType::conv2d:
          if (!cur.spatial) throw Error("shape-error", "conv2d needs a spatial input" + where);
          if (l.units == 0) throw Error("shape-error", "conv2d needs output channels" + where);
          if (l.padding == Padding::valid) {
            if (cur.height < 3 || cur.width < 3) throw Error("shape-error", "input smaller than the 3×3 kernel" + where);
            cur.height -= 2;
            cur.width -= 2;
          }
          cur.channels = l.units;
          break;
        case LayerType::maxpool2d:
          if (!cur.spatial || cur.height < 2 || cur.width < 2) throw Error("shape-error", "maxpool2d needs a spatial input of at least 2×2" + where);
          cur.height /= 2;
          cur.width /= 2;
          break;
        case LayerType::dense:
          if (l.units == 0) throw Error("shape-error", "dense needs output features" + where);
          cur = TensorShape{1, 1, l.units, false};
          break;
        case LayerType::flatten:
          cur = TensorShape{1, 1, cur.size(), false};
          break;
        case LayerType::activation:
          if (l.function == ActivationFunction::softmax && i + 1 != layers.size()) {
            throw Error("shape-error", "softmax must be the terminal layer" + where);
          }
          break;
      }
      out.push_back(cur);
    }
    return out;
  }

  bool operator==(const NetworkSpec&) const = default;
};

/// Convolution-pool stack in the style of SimpleConv, with a configurable
/// base filter count.
inline NetworkSpec simple_conv(TensorShape input, std::size_t filters = 16, std::size_t hidden = 64,
                               std::size_t classes = 10) {
  using namespace layers;
  return NetworkSpec{input,
                     {conv2d(filters), elu(), conv2d(filters), elu(), maxpool2d(), conv2d(2 * filters), elu(),
                      conv2d(2 * filters), elu(), maxpool2d(), conv2d(4 * filters), elu(), maxpool2d(), flatten(),
                      dense(hidden), elu(), dense(classes), softmax()}};
}

/// Kernels are laid out [out][in][3][3] for conv2d and [out][in] for dense;
/// dense inputs are flattened channel-major (C, H, W).
struct LayerWeights {
  std::vector<float> kernel;
  std::vector<float> bias;
  bool operator==(const LayerWeights&) const = default;
};

struct WeightBundle {
  std::vector<LayerWeights> layers;
  bool operator==(const WeightBundle&) const = default;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> expected_blob_sizes(const LayerSpec& l, const TensorShape& in) {
  switch (l.type) {
    case LayerType::conv2d: return {l.units * in.channels * 9, l.units};
    case LayerType::dense: return {l.units * in.size(), l.units};
    default: return {0, 0};
  }
}

inline std::size_t fan_in(const LayerSpec& l, const TensorShape& in) {
  return l.type == LayerType::conv2d ? in.channels * 9 : in.size();
}

}  // namespace detail

inline void validate_weights(const NetworkSpec& spec, const WeightBundle& weights) {
  const auto shapes = spec.output_shapes();
  if (weights.layers.size() != spec.layers.size()) throw Error("shape-error", "weight bundle has the wrong number of layers");
  TensorShape in = spec.input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto [k, b] = detail::expected_blob_sizes(spec.layers[i], in);
    if (weights.layers[i].kernel.size() != k || weights.layers[i].bias.size() != b) {
      throw Error("shape-error", "weight blob size mismatch at layer " + std::to_string(i));
    }
    in = shapes[i];
  }
}

/// Fan-in scaled uniform kernels in ±sqrt(6 / fan_in), biases in ±1/sqrt(fan_in).
inline WeightBundle random_init(const NetworkSpec& spec, std::uint64_t seed) {
  const auto shapes = spec.output_shapes();
  std::mt19937_64 rng(seed);
  WeightBundle bundle;
  TensorShape in = spec.input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const auto [k, b] = detail::expected_blob_sizes(l, in);
    LayerWeights lw;
    if (k > 0) {
      const double fan = static_cast<double>(detail::fan_in(l, in));
      std::uniform_real_distribution<float> kernel(-static_cast<float>(std::sqrt(6.0 / fan)),
                                                   static_cast<float>(std::sqrt(6.0 / fan)));
      std::uniform_real_distribution<float> bias(-static_cast<float>(1.0 / std::sqrt(fan)),
                                                 static_cast<float>(1.0 / std::sqrt(fan)));
      lw.kernel.resize(k);
      for (auto& v : lw.kernel) v = kernel(rng);
      lw.bias.resize(b);
      for (auto& v : lw.bias) v = bias(rng);
    }
    bundle.layers.push_back(std::move(lw));
    in = shapes[i];
  }
  return bundle;
}

/// Which intermediate tensors are exposed as activations.
struct TapPolicy {
  bool post_activation = true;
  bool post_conv = true;
  bool post_pool = true;
  bool post_dense = true;
  bool exclude_reshapes = true;

  bool taps(const LayerSpec& l) const {
    switch (l.type) {
      case LayerType::conv2d: return post_conv;
      case LayerType::maxpool2d: return post_pool;
      case LayerType::dense: return post_dense;
      case LayerType::activation: return post_activation;
      case LayerType::flatten: return !exclude_reshapes;
    }
    return false;
  }

  void validate() const {
    if (!(post_activation || post_conv || post_pool || post_dense || !exclude_reshapes)) {
      throw Error("invalid-argument", "tap policy enables no activations");
    }
  }
};

inline ActivationManifest tap_manifest(const NetworkSpec& spec, const TapPolicy& policy) {
  policy.validate();
  const auto shapes = spec.output_shapes();
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!policy.taps(spec.layers[i])) continue;
    const auto& s = shapes[i];
    ManifestEntry e;
    e.name = std::string(layer_type_name(spec.layers[i])) + "_" + std::to_string(i);
    e.layer_index = entries.size();
    if (s.spatial) {
      e.kind = ActivationKind::feature_map;
      e.shape = {s.height, s.width, s.channels};
    } else {
      e.kind = ActivationKind::scalar_vector;
      e.shape = {s.channels};
    }
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw Error("invalid-argument", "tap policy selects no layer of this network");
  return ActivationManifest(std::move(entries));
}

/// Forward-only sequential network. Immutable after construction, so
/// concurrent forward passes on different inputs are safe.
class Network {
 public:
  Network(NetworkSpec spec, WeightBundle weights, TapPolicy policy = {})
      : spec_(std::move(spec)), weights_(std::move(weights)), policy_(policy) {
    validate_weights(spec_, weights_);
    shapes_ = spec_.output_shapes();
    manifest_ = tap_manifest(spec_, policy_);
    // Reorder conv kernels to [ky][kx][in][out] so the inner loop runs over
    // output channels.
    TensorShape in = spec_.input;
    conv_kernels_.resize(spec_.layers.size());
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      if (spec_.layers[i].type == LayerType::conv2d) {
        const std::size_t co = spec_.layers[i].units;
        const std::size_t ci = in.channels;
        auto& dst = conv_kernels_[i];
        dst.resize(co * ci * 9);
        const auto& src = weights_.layers[i].kernel;
        for (std::size_t o = 0; o < co; ++o)
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t k = 0; k < 9; ++k) dst[(k * ci + c) * co + o] = src[(o * ci + c) * 9 + k];
      }
      in = shapes_[i];
    }
  }

  const NetworkSpec& spec() const { return spec_; }
  const WeightBundle& weights() const { return weights_; }
  const ActivationManifest& manifest() const { return manifest_; }

  /// Runs the network on input and writes every tapped tensor, in manifest
  /// order, into taps (size k).
  void forward(const ImageF& input, std::span<double> taps) const {
    if (input.height != spec_.input.height || input.width != spec_.input.width || input.channels != spec_.input.channels) {
      throw Error("shape-error", "input image does not match the network input shape");
    }
    if (taps.size() != manifest_.activation_count()) throw Error("shape-error", "tap buffer has the wrong size");
    std::vector<float> cur(input.pixels);
    std::vector<float> next;
    TensorShape shape = spec_.input;
    std::size_t tap_offset = 0;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const auto& l = spec_.layers[i];
      const TensorShape& out_shape = shapes_[i];
      switch (l.type) {
        case LayerType::conv2d: conv(i, cur, shape, out_shape, next); break;
        case LayerType::maxpool2d: maxpool(cur, shape, out_shape, next); break;
        case LayerType::dense: dense(i, cur, shape, next); break;
        case LayerType::flatten: to_channel_major(cur, shape, next); break;
        case LayerType::activation: activate(l.function, cur, next); break;
      }
      std::swap(cur, next);
      shape = out_shape;
      if (policy_.taps(l)) {
        for (std::size_t p = 0; p < cur.size(); ++p) taps[tap_offset + p] = static_cast<double>(cur[p]);
        tap_offset += cur.size();
      }
    }
  }

  std::vector<double> forward(const ImageF& input) const {
    std::vector<double> taps(manifest_.activation_count());
    forward(input, taps);
    return taps;
  }

 private:
  void conv(std::size_t layer, const std::vector<float>& in, const TensorShape& is, const TensorShape& os,
            std::vector<float>& out) const {
    const std::size_t ci = is.channels;
    const std::size_t co = os.channels;
    const auto& kernel = conv_kernels_[layer];
    const auto& bias = weights_.layers[layer].bias;
    const std::ptrdiff_t pad = spec_.layers[layer].padding == Padding::same ? 1 : 0;
    const auto ih = static_cast<std::ptrdiff_t>(is.height);
    const auto iw = static_cast<std::ptrdiff_t>(is.width);
    out.assign(os.size(), 0.0f);
    std::vector<double> acc(co);
    for (std::size_t oy = 0; oy < os.height; ++oy) {
      for (std::size_t ox = 0; ox < os.width; ++ox) {
        for (std::size_t o = 0; o < co; ++o) acc[o] = bias[o];
        for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy) + ky - pad;
          if (y < 0 || y >= ih) continue;
          for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox) + kx - pad;
            if (x < 0 || x >= iw) continue;
            const float* src = &in[(static_cast<std::size_t>(y) * is.width + static_cast<std::size_t>(x)) * ci];
            const float* w = &kernel[static_cast<std::size_t>(ky * 3 + kx) * ci * co];
            for (std::size_t c = 0; c < ci; ++c) {
              const double v = src[c];
              const float* wc = w + c * co;
              for (std::size_t o = 0; o < co; ++o) acc[o] += v * static_cast<double>(wc[o]);
            }
          }
        }
        float* dst = &out[(oy * os.width + ox) * co];
        for (std::size_t o = 0; o < co; ++o) dst[o] = static_cast<float>(acc[o]);
      }
    }
  }

  static void maxpool(const std::vector<float>& in, const TensorShape& is, const TensorShape& os, std::vector<float>& out) {
    out.assign(os.size(), 0.0f);
    const std::size_t c = is.channels;
    for (std::size_t y = 0; y < os.height; ++y) {
      for (std::size_t x = 0; x < os.width; ++x) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          float best = -std::numeric_limits<float>::infinity();
          bool nan = false;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const float v = in[((2 * y + dy) * is.width + (2 * x + dx)) * c + ch];
              nan = nan || std::isnan(v);
              best = std::max(best, v);
            }
          }
          out[(y * os.width + x) * c + ch] = nan ? std::numeric_limits<float>::quiet_NaN() : best;
        }
      }
    }
  }

  static void to_channel_major(const std::vector<float>& in, const TensorShape& is, std::vector<float>& out) {
    out.resize(in.size());
    if (!is.spatial) {
      std::copy(in.begin(), in.end(), out.begin());
      return;
    }
    const std::size_t hw = is.height * is.width;
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t c = 0; c < is.channels; ++c) out[c * hw + p] = in[p * is.channels + c];
  }

  void dense(std::size_t layer, const std::vector<float>& in, const TensorShape& is, std::vector<float>& out) const {
    std::vector<float> flat;
    to_channel_major(in, is, flat);
    const auto& w = weights_.layers[layer].kernel;
    const auto& b = weights_.layers[layer].bias;
    const std::size_t n_in = flat.size();
    const std::size_t n_out = spec_.layers[layer].units;
    out.assign(n_out, 0.0f);
    for (std::size_t o = 0; o < n_out; ++o) {
      double acc = b[o];
      const float* row = &w[o * n_in];
      for (std::size_t i = 0; i < n_in; ++i) acc += static_cast<double>(row[i]) * static_cast<double>(flat[i]);
      out[o] = static_cast<float>(acc);
    }
  }

  static void activate(ActivationFunction f, const std::vector<float>& in, std::vector<float>& out) {
    out.resize(in.size());
    switch (f) {
      case ActivationFunction::elu:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] >= 0.0f ? in[i] : std::expm1(in[i]);
        break;
      case ActivationFunction::relu:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0f ? in[i] : (std::isnan(in[i]) ? in[i] : 0.0f);
        break;
      case ActivationFunction::softmax: {
        double mx = -std::numeric_limits<double>::infinity();
        for (float v : in) mx = std::max(mx, static_cast<double>(v));
        double total = 0.0;
        std::vector<double> e(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) total += e[i] = std::exp(static_cast<double>(in[i]) - mx);
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = static_cast<float>(e[i] / total);
        break;
      }
    }
  }

  NetworkSpec spec_;
  WeightBundle weights_;
  TapPolicy policy_;
  std::vector<TensorShape> shapes_;
  ActivationManifest manifest_;
  std::vector<std::vector<float>> conv_kernels_;
};

// ---------------------------------------------------------------------------
// NNW v1: "NNW1" | u64 LE manifest length | JSON manifest | f32 LE blobs
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json layer_to_json(const LayerSpec& l) {
  switch (l.type) {
    case LayerType::conv2d:
      return {{"type", "conv2d"}, {"out_channels", l.units}, {"kernel", std::vector<int>{3, 3}}, {"stride", 1},
              {"padding", l.padding == Padding::same ? "same" : "valid"}};
    case LayerType::maxpool2d: return {{"type", "maxpool2d"}, {"kernel", std::vector<int>{2, 2}}, {"stride", 2}};
    case LayerType::dense: return {{"type", "dense"}, {"out_features", l.units}};
    case LayerType::flatten: return {{"type", "flatten"}};
    case LayerType::activation: return {{"type", "activation"}, {"function", layer_type_name(l)}};
  }
  return {};
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "conv2d") {
    if (j.value("kernel", std::vector<int>{3, 3}) != std::vector<int>{3, 3} || j.value("stride", 1) != 1) {
      throw Error("unsupported-layer", "conv2d supports only 3×3 kernels with stride 1");
    }
    const std::string padding = j.value("padding", std::string("same"));
    if (padding != "same" && padding != "valid") throw Error("unsupported-layer", "conv2d padding '" + padding + "'");
    return layers::conv2d(j.at("out_channels").get<std::size_t>(), padding == "same" ? Padding::same : Padding::valid);
  }
  if (type == "maxpool2d") {
    if (j.value("kernel", std::vector<int>{2, 2}) != std::vector<int>{2, 2} || j.value("stride", 2) != 2) {
      throw Error("unsupported-layer", "maxpool2d supports only 2×2 windows with stride 2");
    }
    return layers::maxpool2d();
  }
  if (type == "dense") return layers::dense(j.at("out_features").get<std::size_t>());
  if (type == "flatten") return layers::flatten();
  if (type == "activation") {
    const std::string f = j.at("function").get<std::string>();
    if (f == "elu") return layers::elu();
    if (f == "relu") return layers::relu();
    if (f == "softmax") return layers::softmax();
    throw Error("unsupported-layer", "activation '" + f + "'");
  }
  throw Error("unsupported-layer", "layer type '" + type + "'");
}

}  // namespace detail

inline std::string encode_nnw(const NetworkSpec& spec, const WeightBundle& weights) {
  validate_weights(spec, weights);
  nlohmann::json manifest;
  manifest["input_shape"] = std::vector<std::size_t>{spec.input.height, spec.input.width, spec.input.channels};
  manifest["layers"] = nlohmann::json::array();
  manifest["blobs"] = nlohmann::json::array();
  const auto shapes = spec.output_shapes();
  std::string blobs;
  TensorShape in = spec.input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    manifest["layers"].push_back(detail::layer_to_json(spec.layers[i]));
    const auto& lw = weights.layers[i];
    if (!lw.kernel.empty()) {
      const auto& l = spec.layers[i];
      std::vector<std::size_t> kshape = l.type == LayerType::conv2d ? std::vector<std::size_t>{l.units, in.channels, 3, 3}
                                                                    : std::vector<std::size_t>{l.units, in.size()};
      manifest["blobs"].push_back({{"layer", i}, {"name", "kernel"}, {"offset", blobs.size()}, {"count", lw.kernel.size()}, {"shape", kshape}});
      for (float v : lw.kernel) io::append_f32_le(blobs, v);
      manifest["blobs"].push_back({{"layer", i}, {"name", "bias"}, {"offset", blobs.size()}, {"count", lw.bias.size()}, {"shape", std::vector<std::size_t>{lw.bias.size()}}});
      for (float v : lw.bias) io::append_f32_le(blobs, v);
    }
    in = shapes[i];
  }
  const std::string text = manifest.dump();
  std::string out = "NNW1";
  io::append_u64_le(out, text.size());
  out += text;
  out += blobs;
  return out;
}

inline std::pair<NetworkSpec, WeightBundle> decode_nnw(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4) throw Error("truncated-file", "NNW header");
  if (bytes.compare(0, 4, "NNW1") != 0) throw Error("format-error", "bad NNW magic");
  if (bytes.size() < 12) throw Error("truncated-file", "NNW header");
  const std::uint64_t len = io::load_u64_le(p + 4);
  if (bytes.size() - 12 < len) throw Error("truncated-file", "NNW manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw Error("format-error", std::string("NNW manifest is not valid JSON: ") + e.what());
  }
  const std::size_t blob_base = 12 + len;
  const std::size_t blob_bytes = bytes.size() - blob_base;

  NetworkSpec spec;
  WeightBundle weights;
  try {
    const auto shape = manifest.at("input_shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw Error("format-error", "input_shape must be [H, W, C]");
    spec.input = TensorShape{shape[0], shape[1], shape[2], true};
    for (const auto& lj : manifest.at("layers")) spec.layers.push_back(detail::layer_from_json(lj));
    weights.layers.resize(spec.layers.size());
    std::size_t consumed = 0;
    for (const auto& bj : manifest.at("blobs")) {
      const auto layer = bj.at("layer").get<std::size_t>();
      const auto name = bj.at("name").get<std::string>();
      const auto offset = bj.at("offset").get<std::size_t>();
      const auto count = bj.at("count").get<std::size_t>();
      if (layer >= spec.layers.size()) throw Error("format-error", "blob refers to a missing layer");
      if (offset + 4 * count > blob_bytes) throw Error("truncated-file", "NNW blob data");
      std::vector<float> values(count);
      for (std::size_t i = 0; i < count; ++i) values[i] = io::load_f32_le(p + blob_base + offset + 4 * i);
      if (name == "kernel") weights.layers[layer].kernel = std::move(values);
      else if (name == "bias") weights.layers[layer].bias = std::move(values);
      else throw Error("format-error", "unknown blob '" + name + "'");
      consumed = std::max(consumed, offset + 4 * count);
    }
    if (consumed != blob_bytes) throw Error("format-error", "NNW has trailing bytes after the last blob");
  } catch (const nlohmann::json::exception& e) {
    throw Error("format-error", std::string("malformed NNW manifest: ") + e.what());
  }
  try {
    validate_weights(spec, weights);
  } catch (const Error& e) {
    throw Error("format-error", e.what());
  }
  return {std::move(spec), std::move(weights)};
}

inline void write_nnw(const std::filesystem::path& path, const NetworkSpec& spec, const WeightBundle& weights) {
  const auto bytes = encode_nnw(spec, weights);
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write-error", "cannot write '" + path.string() + "'");
}

inline std::pair<NetworkSpec, WeightBundle> read_nnw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io-error", "cannot open '" + path.string() + "'");
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_nnw(bytes);
}

}  // namespace tmeasures
