// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "hfo/data.hpp"
#include "hfo/error.hpp"

namespace hfo {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("hfo_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

std::vector<std::uint8_t> concat(std::initializer_list<std::vector<std::uint8_t>> parts) {
  std::vector<std::uint8_t> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::vector<double> sorted_rows(const Batch& b) {
  std::vector<double> out = b.inputs.data;
  std::sort(out.begin(), out.end());
  return out;
}

TEST(LoadIdx, HandBuiltPair) {
  TempDir dir;
  const std::vector<std::uint8_t> pixels{0, 255, 51, 102, 7, 8, 9, 10};
  write_bytes(dir.path() / "img", concat({be32(0x803), be32(2), be32(2), be32(2), pixels}));
  write_bytes(dir.path() / "lab", concat({be32(0x801), be32(2), {3, 1}}));
  const Dataset d = load_idx(dir.path() / "img", dir.path() / "lab");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.features(), 4u);
  EXPECT_EQ(d.num_classes, 4u);
  EXPECT_EQ(d.labels, (std::vector<std::uint32_t>{3, 1}));
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    EXPECT_EQ(d.inputs.data[i], pixels[i] / 255.0);
  }
}

TEST(LoadIdx, Errors) {
  TempDir dir;
  const auto img = concat({be32(0x803), be32(2), be32(1), be32(2), {1, 2, 3, 4}});
  write_bytes(dir.path() / "img", img);
  write_bytes(dir.path() / "lab", concat({be32(0x801), be32(2), {0, 1}}));
  write_bytes(dir.path() / "lab_as_img", concat({be32(0x803), be32(2), {0, 1}}));
  write_bytes(dir.path() / "lab3", concat({be32(0x801), be32(3), {0, 1, 2}}));
  write_bytes(dir.path() / "img_short", concat({be32(0x803), be32(2), be32(1), be32(2), {1, 2}}));

  EXPECT_THROW(load_idx(dir.path() / "img", dir.path() / "lab_as_img"), FormatError);
  EXPECT_THROW(load_idx(dir.path() / "lab", dir.path() / "lab"), FormatError);
  EXPECT_THROW(load_idx(dir.path() / "img", dir.path() / "lab3"), ConsistencyError);
  EXPECT_THROW(load_idx(dir.path() / "img_short", dir.path() / "lab"), IoError);
  EXPECT_THROW(load_idx(dir.path() / "missing", dir.path() / "lab"), IoError);
}

TEST(LoadIdx, RoundTripByteValued) {
  TempDir dir;
  Dataset d;
  d.inputs = Matrix(3, 6);
  for (std::size_t i = 0; i < d.inputs.data.size(); ++i) {
    d.inputs.data[i] = static_cast<double>((i * 37) % 256) / 255.0;
  }
  d.labels = {2, 0, 1};
  d.num_classes = 3;
  write_idx(d, 2, 3, dir.path() / "i", dir.path() / "l");
  const Dataset back = load_idx(dir.path() / "i", dir.path() / "l");
  EXPECT_EQ(back.inputs, d.inputs);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.num_classes, 3u);
}

TEST(Synthetic, DeterministicBalancedSeparable) {
  const Dataset a = synthetic_classification(5, 103, 8, 10, 0.3);
  const Dataset b = synthetic_classification(5, 103, 8, 10, 0.3);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.num_classes, 10u);

  std::vector<std::size_t> hist(10);
  for (auto y : a.labels) ++hist[y];
  const auto [lo, hi] = std::minmax_element(hist.begin(), hist.end());
  EXPECT_LE(*hi - *lo, 1u);

  // Noise-free samples sit on their class centers, so nearest center is exact.
  const Dataset clean = synthetic_classification(6, 60, 5, 4, 0.0);
  std::vector<std::vector<double>> centers(4);
  for (std::size_t s = 0; s < clean.size(); ++s) {
    centers[clean.labels[s]].assign(clean.inputs.row(s), clean.inputs.row(s) + 5);
  }
  std::size_t wrong = 0;
  for (std::size_t s = 0; s < clean.size(); ++s) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < 4; ++c) {
      double dist = 0.0;
      for (std::size_t i = 0; i < 5; ++i) {
        const double diff = clean.inputs(s, i) - centers[c][i];
        dist += diff * diff;
      }
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    if (best != clean.labels[s]) ++wrong;
  }
  EXPECT_EQ(wrong, 0u);
}

TEST(Split, SizesUnionDeterminism) {
  Dataset d = synthetic_classification(7, 10, 3, 2, 0.5);
  const auto [train, test] = split(d, 0.7, 11);
  EXPECT_EQ(train.size(), 7u);
  EXPECT_EQ(test.size(), 3u);
  Batch both;
  both.inputs = Matrix(10, 3);
  std::copy(train.inputs.data.begin(), train.inputs.data.end(), both.inputs.data.begin());
  std::copy(test.inputs.data.begin(), test.inputs.data.end(),
            both.inputs.data.begin() + static_cast<std::ptrdiff_t>(train.inputs.data.size()));
  EXPECT_EQ(sorted_rows(both), sorted_rows(d));

  const auto again = split(d, 0.7, 11);
  EXPECT_EQ(again.first.inputs, train.inputs);
  const auto other = split(d, 0.7, 12);
  EXPECT_NE(other.first.inputs, train.inputs);

  EXPECT_THROW(split(d, 0.01, 1), ConfigError);
  EXPECT_THROW(split(d, 1.0, 1), ConfigError);
}

TEST(Sampling, PermutationsAndIndices) {
  Rng rng(3);
  const auto idx = sample_indices(50, 50, rng);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 50u);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = sample_indices(40, 13, rng);
    ASSERT_EQ(s.size(), 13u);
    EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 13u);
    EXPECT_LT(*std::max_element(s.begin(), s.end()), 40u);
  }
  EXPECT_THROW(sample_indices(5, 6, rng), ConfigError);
  EXPECT_THROW(sample_indices(5, 0, rng), ConfigError);

  Rng r1(9), r2(9), r3(10);
  EXPECT_EQ(permutation(20, r1), permutation(20, r2));
  EXPECT_NE(permutation(20, r1), permutation(20, r3));
}

TEST(Sampling, MinibatchRows) {
  const Dataset d = synthetic_classification(8, 30, 4, 3, 0.2);
  Rng rng(1);
  const Batch all = sample_minibatch(d, 30, rng);
  EXPECT_EQ(sorted_rows(all), sorted_rows(d));
  const Batch one = sample_minibatch(d, 1, rng);
  EXPECT_EQ(one.size(), 1u);
  EXPECT_LT(one.labels[0], 3u);
  EXPECT_THROW(sample_minibatch(d, 31, rng), ConfigError);
}

}  // namespace
}  // namespace hfo
