// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel execution. N in-process workers each own one shard of the
// training set; gradients, losses and curvature products are summed per worker
// in compensated form, combined at the orchestrator with deterministic_reduce
// in shard order and divided once by the total sample count. The result is
// therefore the same for every worker count. Also hosts the analytic
// communication-cost models.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hfo/data.hpp"
#include "hfo/krylov.hpp"
#include "hfo/linalg.hpp"
#include "hfo/model.hpp"

namespace hfo {

/// Curvature products on one fixed mini-batch at one fixed theta.
class MinibatchCurvature {
 public:
  virtual ~MinibatchCurvature() = default;
  virtual Vector apply(const Vector& v, CurvatureBase base) const = 0;
  virtual std::size_t batch_size() const = 0;
};

/// What the optimizer needs from the training set. Mini-batches are named by
/// dataset indices so every implementation sees the same samples for the same
/// random draws.
class Evaluator {
 public:
  virtual ~Evaluator() = default;

  virtual const NetworkSpec& spec() const = 0;
  virtual std::size_t sample_count() const = 0;
  virtual std::size_t worker_count() const = 0;

  virtual LossAndGradient full_loss_and_gradient(const Vector& theta) const = 0;
  virtual double full_loss(const Vector& theta) const = 0;
  /// Fraction misclassified; NaN for regression data (no labels).
  virtual double full_classification_error(const Vector& theta) const = 0;

  virtual Vector minibatch_gradient(const Vector& theta,
                                    std::span<const std::size_t> indices) const = 0;
  virtual std::unique_ptr<MinibatchCurvature> minibatch_curvature(
      const Vector& theta, std::span<const std::size_t> indices) const = 0;
};

/// Single-threaded reference path: model calls on the whole dataset.
class SerialEvaluator final : public Evaluator {
 public:
  SerialEvaluator(NetworkSpec spec, Dataset data);

  const NetworkSpec& spec() const override { return spec_; }
  std::size_t sample_count() const override { return data_.size(); }
  std::size_t worker_count() const override { return 1; }

  LossAndGradient full_loss_and_gradient(const Vector& theta) const override;
  double full_loss(const Vector& theta) const override;
  double full_classification_error(const Vector& theta) const override;
  Vector minibatch_gradient(const Vector& theta,
                            std::span<const std::size_t> indices) const override;
  std::unique_ptr<MinibatchCurvature> minibatch_curvature(
      const Vector& theta, std::span<const std::size_t> indices) const override;

 private:
  NetworkSpec spec_;
  Dataset data_;
};

struct ShardedDataset {
  std::vector<Dataset> shards;
  /// Original dataset index of every shard row, ascending within a shard.
  std::vector<std::vector<std::size_t>> members;
  /// For each original index: owning shard and row within it.
  std::vector<std::uint32_t> owner;
  std::vector<std::uint32_t> local_row;
  std::size_t n = 0;

  std::size_t worker_count() const { return shards.size(); }
};

/// Seeded permutation, then a contiguous split into shards of size
/// ceil(n/N) or floor(n/N). Rows inside a shard keep ascending dataset order,
/// so N = 1 reproduces the dataset exactly. Throws ConfigError if N > n.
ShardedDataset shard_dataset(const Dataset& data, std::size_t workers, std::uint64_t seed);

/// One iteration's mini-batch, split per owning worker.
struct BatchAssignment {
  std::vector<Batch> slices;
  std::size_t total = 0;
};

class ParallelExecutor final : public Evaluator {
 public:
  ParallelExecutor(NetworkSpec spec, const Dataset& data, std::size_t workers,
                   std::uint64_t shard_seed);

  const NetworkSpec& spec() const override { return spec_; }
  std::size_t sample_count() const override { return sharded_.n; }
  std::size_t worker_count() const override { return sharded_.worker_count(); }
  const ShardedDataset& sharded() const { return sharded_; }

  LossAndGradient full_loss_and_gradient(const Vector& theta) const override;
  double full_loss(const Vector& theta) const override;
  double full_classification_error(const Vector& theta) const override;
  Vector minibatch_gradient(const Vector& theta,
                            std::span<const std::size_t> indices) const override;
  std::unique_ptr<MinibatchCurvature> minibatch_curvature(
      const Vector& theta, std::span<const std::size_t> indices) const override;

  /// Routes dataset indices to their owning workers. Throws ConfigError if a
  /// worker would receive no samples.
  BatchAssignment assign(std::span<const std::size_t> indices) const;

  /// Runs fn(worker) for every worker, concurrently when N > 1. Worker
  /// exceptions are rethrown with the shard index prefixed.
  void for_each_worker(const std::function<void(std::size_t)>& fn) const;

 private:
  NetworkSpec spec_;
  ShardedDataset sharded_;
};

/// Full-batch gradient: per-worker sums reduced in shard order, divided by n.
Vector distributed_gradient(const ParallelExecutor& exec, const Vector& theta);

/// Mini-batch curvature product: per-slice sums reduced in worker order,
/// divided by the batch size.
Vector distributed_hvp(const ParallelExecutor& exec, const Vector& theta, const Vector& v,
                       const BatchAssignment& assignment,
                       CurvatureBase base = CurvatureBase::exact_hessian);

struct CostReport {
  std::uint64_t floats_on_wire_per_epoch = 0;
  std::uint64_t sync_rounds_per_epoch = 0;
  std::uint64_t floats_stored_per_node = 0;
  /// Data-parallel only: wire floats with sum d_{i-1} d_i in place of the
  /// literal sum d_0 d_i.
  std::uint64_t corrected_floats_on_wire_per_epoch = 0;
};

/// Model parallelism: wire = 2 (n/b) b sum_{i>=1} d_i, syncs = 2 l (n/b),
/// storage = ceil(sum d_{i-1} d_i / N). Throws ConfigError unless b | n.
CostReport cost_model_parallel(std::span<const std::size_t> dims, std::uint64_t n,
                               std::uint64_t b, std::uint64_t workers);

/// Data parallelism: wire = (n/b) log2(N) sum_{i>=1} d_0 d_i (literal form),
/// syncs = 2 (n/b), storage = full parameter-matrix count. log2 is the
/// reduction-tree depth ceil(log2 N). Throws ConfigError unless b | n.
CostReport cost_data_parallel(std::span<const std::size_t> dims, std::uint64_t n,
                              std::uint64_t b, std::uint64_t workers);

/// One gradient reduce plus one reduce per curvature product and per loss
/// evaluation.
std::uint64_t comm_rounds_hf_per_iteration(std::uint64_t inner_applies,
                                           std::uint64_t linesearch_evals);

/// ceil(log2 n) for n >= 1.
std::uint64_t ceil_log2(std::uint64_t n);

}  // namespace hfo
