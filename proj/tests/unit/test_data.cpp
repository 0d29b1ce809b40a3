#include <gtest/gtest.h>

#include <map>
#include <set>

#include "oracles.hpp"
#include "tmeasures/data.hpp"

using namespace tmeasures;

namespace {

std::string be32(std::uint32_t v) {
  std::string s;
  for (int shift = 24; shift >= 0; shift -= 8) s += static_cast<char>((v >> shift) & 0xff);
  return s;
}

std::string idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols, std::size_t payload) {
  std::string s = be32(magic) + be32(n) + be32(rows) + be32(cols);
  for (std::size_t i = 0; i < payload; ++i) s += static_cast<char>(i * 7 % 256);
  return s;
}

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "none";
}

class DataFiles : public ::testing::Test {
 protected:
  void SetUp() override { dir = oracle::scratch_dir("data"); }
  void TearDown() override { std::filesystem::remove_all(dir); }
  std::filesystem::path dir;
};

}  // namespace

TEST_F(DataFiles, MnistImagesAndLabels) {
  oracle::write_bytes(dir / "img", idx_images(0x803, 3, 28, 28, 3 * 784));
  oracle::write_bytes(dir / "lbl", be32(0x801) + be32(3) + std::string("\x07\x02\x01", 3));
  const auto ds = load_mnist_idx(dir / "img", dir / "lbl");
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.height, 28u);
  EXPECT_EQ(ds.width, 28u);
  EXPECT_EQ(ds.channels, 1u);
  EXPECT_EQ(ds.labels, (std::vector<int>{7, 2, 1}));
  EXPECT_EQ(ds.pixels[785], static_cast<std::uint8_t>(785 * 7 % 256));
  EXPECT_EQ(load_mnist_idx(dir / "img", dir / "lbl"), ds);
}

TEST_F(DataFiles, MnistWrongMagicIsFormatError) {
  oracle::write_bytes(dir / "img", idx_images(0x801, 1, 28, 28, 784));
  EXPECT_EQ(error_code([&] { load_mnist_idx(dir / "img"); }), "format-error");
}

TEST_F(DataFiles, MnistZeroLengthIsTruncated) {
  oracle::write_bytes(dir / "img", "");
  EXPECT_EQ(error_code([&] { load_mnist_idx(dir / "img"); }), "truncated-file");
}

TEST_F(DataFiles, MnistShortPayloadIsTruncated) {
  oracle::write_bytes(dir / "img", idx_images(0x803, 2, 28, 28, 784 + 100));
  EXPECT_EQ(error_code([&] { load_mnist_idx(dir / "img"); }), "truncated-file");
}

TEST_F(DataFiles, MnistLabelErrors) {
  oracle::write_bytes(dir / "img", idx_images(0x803, 2, 28, 28, 2 * 784));
  oracle::write_bytes(dir / "bad", be32(0x803) + be32(2) + "ab");
  EXPECT_EQ(error_code([&] { load_mnist_idx(dir / "img", dir / "bad"); }), "format-error");
  oracle::write_bytes(dir / "short", be32(0x801) + be32(2) + "a");
  EXPECT_EQ(error_code([&] { load_mnist_idx(dir / "img", dir / "short"); }), "truncated-file");
}

TEST_F(DataFiles, MissingFileIsIoError) {
  EXPECT_EQ(error_code([&] { load_mnist_idx(dir / "absent"); }), "io-error");
}

TEST_F(DataFiles, CifarSingleRecord) {
  std::string rec(3073, '\0');
  rec[0] = 6;
  rec[1 + 5] = 10;            // R at pixel 5
  rec[1 + 1024 + 5] = 20;     // G
  rec[1 + 2048 + 5] = 30;     // B
  oracle::write_bytes(dir / "test_batch.bin", rec);
  const auto ds = load_cifar10_binary(dir);
  EXPECT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.height, 32u);
  EXPECT_EQ(ds.channels, 3u);
  EXPECT_EQ(ds.labels, std::vector<int>{6});
  EXPECT_EQ(ds.pixels[5 * 3 + 0], 10);
  EXPECT_EQ(ds.pixels[5 * 3 + 1], 20);
  EXPECT_EQ(ds.pixels[5 * 3 + 2], 30);
}

TEST_F(DataFiles, CifarRecordCountFromSize) {
  oracle::write_bytes(dir / "b.bin", std::string(3 * 3073, '\x01'));
  EXPECT_EQ(load_cifar10_binary(dir / "b.bin").size(), 3u);
}

TEST_F(DataFiles, CifarPartialRecordIsFormatError) {
  oracle::write_bytes(dir / "b.bin", std::string(3072, '\0'));
  EXPECT_EQ(error_code([&] { load_cifar10_binary(dir / "b.bin"); }), "format-error");
}

TEST(Synthetic, IsDeterministic) {
  EXPECT_EQ(synthetic_dataset(8, 28, 28, 1, 7), synthetic_dataset(8, 28, 28, 1, 7));
  EXPECT_NE(synthetic_dataset(8, 28, 28, 1, 7), synthetic_dataset(8, 28, 28, 1, 8));
}

TEST(Synthetic, EmptyDatasetErrors) {
  EXPECT_EQ(error_code([] { synthetic_dataset(0, 28, 28, 1, 0); }), "empty-dataset");
}

TEST(Synthetic, ImagesAreNotConstant) {
  const auto ds = synthetic_dataset(2, 28, 28, 1, 3);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto img = ds.image(i);
    std::vector<double> px(img.pixels.begin(), img.pixels.end());
    EXPECT_GT(oracle::variance(px), 0.0);
  }
}

TEST(Synthetic, ImageScalesToUnitRange) {
  const auto ds = synthetic_dataset(3, 8, 8, 3, 1);
  const auto img = ds.image(2);
  for (std::size_t p = 0; p < img.pixels.size(); ++p) {
    EXPECT_FLOAT_EQ(img.pixels[p], ds.pixels[2 * 192 + p] / 255.0f);
  }
}

TEST(Dataset, HeadKeepsPrefix) {
  const auto ds = synthetic_dataset(5, 4, 4, 1, 2);
  const auto h = ds.head(2);
  EXPECT_EQ(h.size(), 2u);
  EXPECT_TRUE(std::equal(h.pixels.begin(), h.pixels.end(), ds.pixels.begin()));
  EXPECT_EQ(error_code([&] { ds.head(6); }), "invalid-argument");
}

namespace {

std::vector<Batch> collect(const BatchPlan& plan) {
  std::vector<Batch> out;
  plan.for_each_batch([&](const Batch& b) { out.push_back(b); });
  return out;
}

}  // namespace

TEST(BatchPlan, VisitsEveryPairOnceInBothOrders) {
  for (auto order : {PassOrder::sample_major, PassOrder::transformation_major}) {
    for (std::size_t b : {1u, 2u, 3u, 7u, 64u}) {
      for (std::size_t pass : {0u, 2u}) {
        BatchPlan plan{5, 4, b, order, pass, 9};
        std::map<std::pair<std::size_t, std::size_t>, int> seen;
        for (const auto& batch : collect(plan)) {
          EXPECT_LE(batch.cells.size(), b);
          for (const auto& c : batch.cells) ++seen[{c.sample, c.transformation}];
        }
        EXPECT_EQ(seen.size(), 20u);
        for (const auto& [cell, count] : seen) EXPECT_EQ(count, 1);
      }
    }
  }
}

TEST(BatchPlan, SampleMajorEmitsRowsContiguously) {
  BatchPlan plan{3, 4, 64, PassOrder::sample_major};
  std::vector<Cell> cells;
  for (const auto& batch : collect(plan)) cells.insert(cells.end(), batch.cells.begin(), batch.cells.end());
  ASSERT_EQ(cells.size(), 12u);
  for (std::size_t idx = 0; idx < 12; ++idx) {
    EXPECT_EQ(cells[idx].sample, idx / 4);
    EXPECT_EQ(cells[idx].transformation, idx % 4);
  }
}

TEST(BatchPlan, TransformationMajorEmitsColumnsContiguously) {
  BatchPlan plan{3, 4, 5, PassOrder::transformation_major};
  std::vector<Cell> cells;
  for (const auto& batch : collect(plan)) cells.insert(cells.end(), batch.cells.begin(), batch.cells.end());
  for (std::size_t idx = 0; idx < 12; ++idx) {
    EXPECT_EQ(cells[idx].transformation, idx / 3);
    EXPECT_EQ(cells[idx].sample, idx % 3);
  }
}

TEST(BatchPlan, BlocksStayWithinOneLine) {
  BatchPlan plan{4, 10, 4, PassOrder::sample_major};
  for (const auto& batch : collect(plan)) {
    for (std::size_t blk = 0; blk < batch.block_count(); ++blk) {
      const auto s = batch.block_starts[blk], e = batch.block_starts[blk + 1];
      EXPECT_LE(e - s, 4u);
      for (std::size_t p = s; p < e; ++p) EXPECT_EQ(batch.cells[p].sample, batch.cells[s].sample);
    }
  }
}

TEST(BatchPlan, ZeroBatchErrors) {
  BatchPlan plan{2, 2, 0};
  EXPECT_EQ(error_code([&] { plan.for_each_batch([](const Batch&) {}); }), "batch-too-small");
}

TEST(AxisOrder, FirstPassIsNaturalLaterPassesArePermutations) {
  const auto p0 = axis_order(10, 0, 3, 5);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(p0[i], i);
  const auto p1 = axis_order(10, 1, 3, 5);
  EXPECT_EQ(std::set<std::size_t>(p1.begin(), p1.end()).size(), 10u);
  EXPECT_EQ(p1, axis_order(10, 1, 3, 5));
  EXPECT_NE(p1, axis_order(10, 2, 3, 5));
  EXPECT_NE(p1, axis_order(10, 1, 4, 5));
}
