#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "tmeasures/network.hpp"
#include "tmeasures/transforms.hpp"

using namespace tmeasures;

namespace {

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "none";
}

WeightBundle zero_weights(const NetworkSpec& spec) {
  auto w = random_init(spec, 1);
  for (auto& l : w.layers) {
    std::fill(l.kernel.begin(), l.kernel.end(), 0.0f);
    std::fill(l.bias.begin(), l.bias.end(), 0.0f);
  }
  return w;
}

ImageF random_input(const TensorShape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageF img(s.height, s.width, s.channels);
  for (auto& p : img.pixels) p = u(rng);
  return img;
}

}  // namespace

TEST(Forward, ZeroWeightsGiveZeroTaps) {
  const auto spec = simple_conv({28, 28, 1}, 4, 8);
  Network net(spec, zero_weights(spec));
  const auto taps = net.forward(random_input(spec.input, 3));
  const auto& man = net.manifest();
  for (std::size_t e = 0; e < man.size(); ++e) {
    if (man[e].name.rfind("softmax", 0) == 0) continue;  // uniform 0.1 by construction
    for (std::size_t i = 0; i < man[e].size(); ++i) EXPECT_EQ(taps[man.offset(e) + i], 0.0) << man[e].name;
  }
}

TEST(Forward, DenseAffineArithmetic) {
  NetworkSpec spec{{1, 1, 1}, {layers::flatten(), layers::dense(1)}};
  WeightBundle w;
  w.layers = {{}, {{2.0f}, {1.0f}}};
  Network net(spec, w);
  ImageF in(1, 1, 1, 3.0f);
  const auto taps = net.forward(in);
  ASSERT_EQ(taps.size(), 1u);
  EXPECT_EQ(taps[0], 7.0);
}

TEST(Forward, ManifestCountMatchesShapeArithmetic) {
  for (std::size_t f : {2u, 8u, 16u}) {
    const std::size_t h = 32;
    const auto spec = simple_conv({28, 28, 1}, f, h);
    Network net(spec, random_init(spec, f));
    const std::size_t expected = 4 * 784 * f + 196 * f + 4 * 392 * f + 98 * f + 2 * 196 * f + 36 * f + 2 * h + 20;
    EXPECT_EQ(net.manifest().activation_count(), expected);
    EXPECT_EQ(net.manifest().size(), 17u);  // every layer except flatten
    for (const auto& e : net.manifest().entries()) EXPECT_EQ(e.name.find("flatten"), std::string::npos);
  }
}

TEST(Forward, TapPolicySelectsLayers) {
  const auto spec = simple_conv({16, 16, 1}, 2, 4);
  TapPolicy only_pool{false, false, true, false, true};
  Network net(spec, random_init(spec, 1), only_pool);
  EXPECT_EQ(net.manifest().size(), 3u);
  for (const auto& e : net.manifest().entries()) EXPECT_EQ(e.kind, ActivationKind::feature_map);
  TapPolicy with_reshape;
  with_reshape.exclude_reshapes = false;
  Network all(spec, random_init(spec, 1), with_reshape);
  EXPECT_EQ(all.manifest().size(), 18u);
  TapPolicy none{false, false, false, false, true};
  EXPECT_EQ(error_code([&] { Network bad(spec, random_init(spec, 1), none); }), "invalid-argument");
}

TEST(Forward, ConvolutionMatchesDirectOracle) {
  NetworkSpec spec{{5, 6, 2}, {layers::conv2d(3)}};
  const auto w = random_init(spec, 4);
  Network net(spec, w);
  const auto in = random_input(spec.input, 5);
  const std::vector<double> x(in.pixels.begin(), in.pixels.end());
  const auto ref = oracle::conv3x3_same(x, 5, 6, 2, w.layers[0].kernel, w.layers[0].bias, 3);
  const auto taps = net.forward(in);
  ASSERT_EQ(taps.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(taps[i], ref[i], 1e-6);
}

TEST(Forward, ValidPaddingShrinksMaps) {
  NetworkSpec spec{{6, 6, 1}, {layers::conv2d(2, Padding::valid)}};
  Network net(spec, random_init(spec, 1));
  EXPECT_EQ(net.manifest()[0].shape, (std::vector<std::size_t>{4, 4, 2}));
}

TEST(Forward, MaxPoolAndActivations) {
  NetworkSpec spec{{2, 2, 1}, {layers::maxpool2d()}};
  Network pool(spec, random_init(spec, 0));
  ImageF in(2, 2, 1);
  in.pixels = {0.1f, -0.5f, 0.9f, 0.3f};
  EXPECT_FLOAT_EQ(static_cast<float>(pool.forward(in)[0]), 0.9f);

  NetworkSpec act{{2, 2, 1}, {layers::elu()}};
  Network elu(act, random_init(act, 0));
  const auto e = elu.forward(in);
  EXPECT_FLOAT_EQ(static_cast<float>(e[1]), std::expm1(-0.5f));
  EXPECT_FLOAT_EQ(static_cast<float>(e[0]), 0.1f);

  NetworkSpec r{{2, 2, 1}, {layers::relu()}};
  Network relu(r, random_init(r, 0));
  EXPECT_EQ(relu.forward(in)[1], 0.0);
}

TEST(Forward, SoftmaxSumsToOne) {
  const auto spec = simple_conv({16, 16, 1}, 2, 8);
  Network net(spec, random_init(spec, 2));
  const auto taps = net.forward(random_input(spec.input, 1));
  const auto& last = net.manifest().entries().back();
  double s = 0.0;
  for (std::size_t i = 0; i < last.size(); ++i) s += taps[net.manifest().offset(net.manifest().size() - 1) + i];
  EXPECT_NEAR(s, 1.0, 1e-6);
}

TEST(Forward, InputShapeMismatchErrors) {
  const auto spec = simple_conv({16, 16, 1}, 2, 8);
  Network net(spec, random_init(spec, 2));
  EXPECT_EQ(error_code([&] { net.forward(ImageF(16, 16, 3)); }), "shape-error");
}

TEST(Forward, InconsistentSpecsAreShapeErrors) {
  NetworkSpec soft{{4, 4, 1}, {layers::softmax(), layers::flatten()}};
  EXPECT_EQ(error_code([&] { soft.output_shapes(); }), "shape-error");
  NetworkSpec conv_after_dense{{4, 4, 1}, {layers::flatten(), layers::dense(3), layers::conv2d(2)}};
  EXPECT_EQ(error_code([&] { conv_after_dense.output_shapes(); }), "shape-error");
  NetworkSpec spec{{4, 4, 1}, {layers::conv2d(2)}};
  auto w = random_init(spec, 0);
  w.layers[0].bias.pop_back();
  EXPECT_EQ(error_code([&] { Network net(spec, w); }), "shape-error");
}

TEST(Forward, DeterministicAndOrderIndependent) {
  const auto spec = simple_conv({28, 28, 1}, 4, 16);
  Network net(spec, random_init(spec, 9));
  const auto a = random_input(spec.input, 1), b = random_input(spec.input, 2);
  const auto fa = net.forward(a);
  net.forward(b);
  EXPECT_EQ(net.forward(a), fa);
}

TEST(Forward, NaNInputPropagatesToTaps) {
  NetworkSpec spec{{4, 4, 1}, {layers::conv2d(2), layers::relu(), layers::maxpool2d()}};
  Network net(spec, random_init(spec, 1));
  ImageF in(4, 4, 1, 0.5f);
  in.pixels[0] = std::nanf("");
  const auto taps = net.forward(in);
  bool any_nan = false;
  for (double v : taps) any_nan = any_nan || std::isnan(v);
  EXPECT_TRUE(any_nan);
}

TEST(RandomInit, SameSeedSameBundle) {
  const auto spec = simple_conv({28, 28, 1}, 4, 16);
  EXPECT_EQ(random_init(spec, 5), random_init(spec, 5));
  EXPECT_NE(random_init(spec, 5), random_init(spec, 6));
}

TEST(RandomInit, FanInBound) {
  const auto spec = simple_conv({28, 28, 1}, 4, 16);
  const auto w = random_init(spec, 3);
  const auto shapes = spec.output_shapes();
  TensorShape in = spec.input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (l.type == LayerType::conv2d || l.type == LayerType::dense) {
      const double fan = l.type == LayerType::conv2d ? 9.0 * in.channels : static_cast<double>(in.size());
      const double bound = std::sqrt(6.0 / fan);
      for (float v : w.layers[i].kernel) EXPECT_LE(std::abs(v), bound);
    } else {
      EXPECT_TRUE(w.layers[i].kernel.empty());
    }
    in = shapes[i];
  }
}

TEST(Nnw, EncodeDecodeRoundTrip) {
  const auto spec = simple_conv({28, 28, 1}, 4, 16);
  const auto w = random_init(spec, 8);
  const auto bytes = encode_nnw(spec, w);
  EXPECT_EQ(bytes.substr(0, 4), "NNW1");
  const auto [spec2, w2] = decode_nnw(bytes);
  EXPECT_EQ(spec2, spec);
  EXPECT_EQ(w2, w);
  EXPECT_EQ(encode_nnw(spec2, w2), bytes);
}

TEST(Nnw, FileRoundTrip) {
  const auto dir = oracle::scratch_dir("nnw");
  NetworkSpec spec{{8, 8, 3}, {layers::conv2d(2, Padding::valid), layers::relu(), layers::maxpool2d(), layers::flatten(),
                              layers::dense(4), layers::softmax()}};
  const auto w = random_init(spec, 1);
  write_nnw(dir / "m.nnw", spec, w);
  const auto [s2, w2] = read_nnw(dir / "m.nnw");
  EXPECT_EQ(s2, spec);
  EXPECT_EQ(w2, w);
  std::filesystem::remove_all(dir);
}

namespace {

std::string nnw_from_json(const std::string& json, const std::string& blobs = "") {
  std::string out = "NNW1";
  std::uint64_t n = json.size();
  for (int i = 0; i < 8; ++i) out += static_cast<char>((n >> (8 * i)) & 0xff);
  return out + json + blobs;
}

}  // namespace

TEST(Nnw, CorruptionErrors) {
  const auto spec = simple_conv({16, 16, 1}, 2, 4);
  const auto bytes = encode_nnw(spec, random_init(spec, 1));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_EQ(error_code([&] { decode_nnw(bad_magic); }), "format-error");
  EXPECT_EQ(error_code([&] { decode_nnw(bytes.substr(0, 2)); }), "truncated-file");
  EXPECT_EQ(error_code([&] { decode_nnw(bytes.substr(0, 40)); }), "truncated-file");
  EXPECT_EQ(error_code([&] { decode_nnw(bytes.substr(0, bytes.size() - 4)); }), "truncated-file");
  EXPECT_EQ(error_code([&] { decode_nnw(bytes + "abcd"); }), "format-error");
}

TEST(Nnw, UnsupportedLayerIsNamed) {
  const std::string json = R"({"blobs":[],"input_shape":[4,4,1],"layers":[{"type":"dropout"}]})";
  try {
    decode_nnw(nnw_from_json(json));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "unsupported-layer");
    EXPECT_NE(std::string(e.what()).find("dropout"), std::string::npos);
  }
  const std::string stride = R"({"blobs":[],"input_shape":[4,4,1],"layers":[{"type":"maxpool2d","kernel":[3,3],"stride":2}]})";
  EXPECT_EQ(error_code([&] { decode_nnw(nnw_from_json(stride)); }), "unsupported-layer");
  const std::string tanh = R"({"blobs":[],"input_shape":[4,4,1],"layers":[{"type":"activation","function":"tanh"}]})";
  EXPECT_EQ(error_code([&] { decode_nnw(nnw_from_json(tanh)); }), "unsupported-layer");
}

TEST(Nnw, BlobSizeMismatchIsFormatError) {
  const std::string json =
      R"({"blobs":[{"count":1,"layer":1,"name":"kernel","offset":0,"shape":[1,1]}],"input_shape":[1,1,1],"layers":[{"type":"flatten"},{"type":"dense","out_features":1}]})";
  EXPECT_EQ(error_code([&] { decode_nnw(nnw_from_json(json, std::string(4, '\0'))); }), "format-error");
}
