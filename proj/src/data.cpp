// SPDX-License-Identifier: Apache-2.0

#include "hfo/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "hfo/error.hpp"

namespace hfo {
namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw IoError("truncated IDX header: " + path.string());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);

  const std::uint32_t image_magic = read_be32(images, 0, images_path);
  if (image_magic != kIdxImagesMagic) {
    throw FormatError("bad IDX image magic in " + images_path.string());
  }
  const std::uint32_t label_magic = read_be32(labels, 0, labels_path);
  if (label_magic != kIdxLabelsMagic) {
    throw FormatError("bad IDX label magic in " + labels_path.string());
  }

  const std::size_t n = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  const std::size_t n_labels = read_be32(labels, 4, labels_path);
  if (n != n_labels) {
    throw ConsistencyError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                      std::to_string(n_labels) + " labels");
  }
  const std::size_t features = rows * cols;
  if (images.size() < 16 + n * features) throw IoError("truncated IDX images: " + images_path.string());
  if (labels.size() < 8 + n) throw IoError("truncated IDX labels: " + labels_path.string());
  if (n == 0 || features == 0) throw FormatError("empty IDX dataset");

  Dataset data;
  data.inputs = Matrix(n, features);
  data.labels.resize(n);
  for (std::size_t i = 0; i < n * features; ++i) data.inputs.data[i] = images[16 + i] / 255.0;
  std::uint32_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    data.labels[i] = labels[8 + i];
    max_label = std::max(max_label, data.labels[i]);
  }
  data.num_classes = max_label + 1;
  return data;
}

void write_idx(const Dataset& data, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (rows * cols != data.features()) throw DimensionError("write_idx: rows*cols != features");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw IoError("cannot create IDX output files");
  put_be32(img, kIdxImagesMagic);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (double x : data.inputs.data) {
    const double q = std::clamp(std::round(x * 255.0), 0.0, 255.0);
    img.put(static_cast<char>(static_cast<std::uint8_t>(q)));
  }
  put_be32(lab, kIdxLabelsMagic);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (auto y : data.labels) lab.put(static_cast<char>(static_cast<std::uint8_t>(y)));
  if (!img || !lab) throw IoError("IDX write failed");
}

std::size_t uniform_index(Rng& rng, std::size_t bound) {
  // 64-bit modulo; the bias is below 2^-40 for any bound we use.
  return static_cast<std::size_t>(rng() % bound);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  return perm;
}

Dataset synthetic_classification(std::uint64_t seed, std::size_t n, std::size_t d0,
                                 std::size_t classes, double noise) {
  if (classes < 2) throw ConfigError("synthetic_classification: need at least 2 classes");
  if (n < classes) throw ConfigError("synthetic_classification: n must be >= classes");
  if (d0 == 0) throw ConfigError("synthetic_classification: d0 must be positive");
  if (!(noise >= 0.0)) throw ConfigError("synthetic_classification: noise must be >= 0");

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix centers(classes, d0);
  for (std::size_t c = 0; c < classes; ++c) {
    double norm_sq = 0.0;
    do {
      norm_sq = 0.0;
      for (std::size_t k = 0; k < d0; ++k) {
        centers(c, k) = normal(rng);
        norm_sq += centers(c, k) * centers(c, k);
      }
    } while (norm_sq == 0.0);
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (std::size_t k = 0; k < d0; ++k) centers(c, k) *= inv;
  }

  const auto order = permutation(n, rng);
  Dataset data;
  data.num_classes = classes;
  data.inputs = Matrix(n, d0);
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::uint32_t>(order[i] % classes);
    data.labels[i] = label;
    for (std::size_t k = 0; k < d0; ++k) {
      data.inputs(i, k) = centers(label, k) + noise * normal(rng);
    }
  }
  return data;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction,
                                  std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split: fraction must lie in (0, 1)");
  }
  const std::size_t n = data.size();
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) throw ConfigError("split: one side would be empty");
  Rng rng(seed);
  const auto perm = permutation(n, rng);
  std::span<const std::size_t> all(perm);
  return {gather(data, all.first(n_train)), gather(data, all.subspan(n_train))};
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t b, Rng& rng) {
  if (b == 0 || b > n) {
    throw ConfigError("sample_indices: batch size " + std::to_string(b) +
                      " outside [1, " + std::to_string(n) + "]");
  }
  // Partial Fisher-Yates: the first b slots end up a uniform sample.
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < b; ++i) std::swap(pool[i], pool[i + uniform_index(rng, n - i)]);
  pool.resize(b);
  return pool;
}

Batch gather(const Batch& data, std::span<const std::size_t> indices) {
  Batch out;
  const std::size_t d = data.inputs.cols;
  out.inputs = Matrix(indices.size(), d);
  if (!data.labels.empty()) out.labels.resize(indices.size());
  if (data.has_targets()) out.targets = Matrix(indices.size(), data.targets.cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    if (src >= data.size()) throw DimensionError("gather: index out of range");
    std::copy_n(data.inputs.row(src), d, out.inputs.row(r));
    if (!data.labels.empty()) out.labels[r] = data.labels[src];
    if (data.has_targets()) {
      std::copy_n(data.targets.row(src), data.targets.cols, out.targets.row(r));
    }
  }
  return out;
}

Dataset gather(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  static_cast<Batch&>(out) = gather(static_cast<const Batch&>(data), indices);
  out.num_classes = data.num_classes;
  return out;
}

Batch sample_minibatch(const Dataset& data, std::size_t b, Rng& rng) {
  const auto idx = sample_indices(data.size(), b, rng);
  return gather(static_cast<const Batch&>(data), idx);
}

}  // namespace hfo
