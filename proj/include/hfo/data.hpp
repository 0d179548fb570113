// SPDX-License-Identifier: Apache-2.0
//
// Datasets: MNIST IDX files, a synthetic Gaussian-cluster generator, seeded
// splits and mini-batch sampling.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "hfo/model.hpp"

namespace hfo {

using Rng = std::mt19937_64;

struct Dataset : Batch {
  std::size_t num_classes = 0;

  std::size_t features() const { return inputs.cols; }
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX image/label file pair. Pixels are scaled to [0,1] by /255.
/// Throws IoError (missing/truncated), FormatError (bad magic) or
/// ConsistencyError (image and label counts disagree).
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

/// Writes a dataset as an IDX pair. Inputs are quantized to bytes by
/// round(255 x); `rows * cols` must equal the feature count.
void write_idx(const Dataset& data, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

/// Class centers on the unit sphere plus isotropic Gaussian noise. Labels are
/// balanced within one sample per class.
Dataset synthetic_classification(std::uint64_t seed, std::size_t n, std::size_t d0,
                                 std::size_t classes, double noise);

/// Seeded permutation, then the first floor(fraction * n) samples train.
std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction,
                                  std::uint64_t seed);

/// Uniform index in [0, bound).
std::size_t uniform_index(Rng& rng, std::size_t bound);

/// Seeded Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

/// b distinct indices in [0, n), uniformly without replacement.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t b, Rng& rng);

/// Rows `indices` of `data`, in the given order.
Batch gather(const Batch& data, std::span<const std::size_t> indices);
Dataset gather(const Dataset& data, std::span<const std::size_t> indices);

Batch sample_minibatch(const Dataset& data, std::size_t b, Rng& rng);

}  // namespace hfo
