// SPDX-License-Identifier: Apache-2.0

#include "hfo/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <string>

#include "hfo/error.hpp"

namespace hfo {
namespace {

class SerialCurvature final : public MinibatchCurvature {
 public:
  SerialCurvature(const NetworkSpec& spec, Vector theta, Batch batch)
      : theta_(std::move(theta)), batch_(std::move(batch)), product_(spec, theta_, batch_) {}

  Vector apply(const Vector& v, CurvatureBase base) const override {
    return base == CurvatureBase::exact_hessian ? product_.hessian(v)
                                                : product_.gauss_newton(v);
  }
  std::size_t batch_size() const override { return batch_.size(); }

 private:
  Vector theta_;
  Batch batch_;
  CurvatureProduct product_;
};

// One CurvatureProduct per worker slice; the forward passes are computed once
// when the session is built.
class DistributedCurvature final : public MinibatchCurvature {
 public:
  DistributedCurvature(const ParallelExecutor& exec, Vector theta, BatchAssignment assignment)
      : exec_(&exec), theta_(std::move(theta)), assignment_(std::move(assignment)) {
    products_.resize(assignment_.slices.size());
    exec.for_each_worker([&](std::size_t w) {
      products_[w] = std::make_unique<CurvatureProduct>(exec_->spec(), theta_,
                                                        assignment_.slices[w]);
    });
  }

  Vector apply(const Vector& v, CurvatureBase base) const override {
    std::vector<CompensatedVector> parts(products_.size());
    exec_->for_each_worker([&](std::size_t w) {
      parts[w] = base == CurvatureBase::exact_hessian ? products_[w]->hessian_sum(v)
                                                      : products_[w]->gauss_newton_sum(v);
    });
    return deterministic_reduce(parts).mean(assignment_.total);
  }
  std::size_t batch_size() const override { return assignment_.total; }

 private:
  const ParallelExecutor* exec_;
  Vector theta_;
  BatchAssignment assignment_;
  std::vector<std::unique_ptr<CurvatureProduct>> products_;
};

}  // namespace

SerialEvaluator::SerialEvaluator(NetworkSpec spec, Dataset data)
    : spec_(std::move(spec)), data_(std::move(data)) {
  spec_.validate();
  check_batch(spec_, data_);
}

LossAndGradient SerialEvaluator::full_loss_and_gradient(const Vector& theta) const {
  return loss_and_gradient(spec_, theta, data_);
}

double SerialEvaluator::full_loss(const Vector& theta) const { return loss(spec_, theta, data_); }

double SerialEvaluator::full_classification_error(const Vector& theta) const {
  if (data_.labels.empty()) return std::nan("");  // regression targets
  return classification_error(spec_, theta, data_);
}

Vector SerialEvaluator::minibatch_gradient(const Vector& theta,
                                           std::span<const std::size_t> indices) const {
  return gradient(spec_, theta, gather(static_cast<const Batch&>(data_), indices));
}

std::unique_ptr<MinibatchCurvature> SerialEvaluator::minibatch_curvature(
    const Vector& theta, std::span<const std::size_t> indices) const {
  return std::make_unique<SerialCurvature>(spec_, theta,
                                           gather(static_cast<const Batch&>(data_), indices));
}

ShardedDataset shard_dataset(const Dataset& data, std::size_t workers, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (workers == 0) throw ConfigError("worker count must be >= 1");
  if (workers > n) {
    throw ConfigError("worker count " + std::to_string(workers) + " exceeds sample count " +
                      std::to_string(n));
  }
  Rng rng(seed);
  const auto perm = permutation(n, rng);

  ShardedDataset out;
  out.n = n;
  out.owner.assign(n, 0);
  out.local_row.assign(n, 0);
  const std::size_t base = n / workers;
  const std::size_t extra = n % workers;
  std::size_t start = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t size = base + (w < extra ? 1 : 0);
    std::vector<std::size_t> members(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                     perm.begin() + static_cast<std::ptrdiff_t>(start + size));
    std::sort(members.begin(), members.end());
    for (std::size_t r = 0; r < members.size(); ++r) {
      out.owner[members[r]] = static_cast<std::uint32_t>(w);
      out.local_row[members[r]] = static_cast<std::uint32_t>(r);
    }
    out.shards.push_back(gather(data, members));
    out.members.push_back(std::move(members));
    start += size;
  }
  return out;
}

ParallelExecutor::ParallelExecutor(NetworkSpec spec, const Dataset& data, std::size_t workers,
                                   std::uint64_t shard_seed)
    : spec_(std::move(spec)), sharded_(shard_dataset(data, workers, shard_seed)) {
  spec_.validate();
  check_batch(spec_, data);
}

void ParallelExecutor::for_each_worker(const std::function<void(std::size_t)>& fn) const {
  const std::size_t n = worker_count();
  auto guarded = [&fn](std::size_t w) {
    try {
      fn(w);
    } catch (const NumericError& e) {
      throw NumericError("shard " + std::to_string(w) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("shard " + std::to_string(w) + ": " + e.what());
    }
  };
  if (n == 1) {
    guarded(0);
    return;
  }
  std::vector<std::future<void>> jobs;
  jobs.reserve(n - 1);
  for (std::size_t w = 1; w < n; ++w) {
    jobs.push_back(std::async(std::launch::async, guarded, w));
  }
  // The orchestrator thread doubles as worker 0.
  std::exception_ptr first_error;
  try {
    guarded(0);
  } catch (...) {
    first_error = std::current_exception();
  }
  for (auto& job : jobs) {
    try {
      job.get();
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

LossAndGradient ParallelExecutor::full_loss_and_gradient(const Vector& theta) const {
  std::vector<LossAndGradientSum> parts(worker_count());
  for_each_worker([&](std::size_t w) {
    parts[w] = loss_and_gradient_sum(spec_, theta, sharded_.shards[w]);
  });
  CompensatedScalar loss;
  std::vector<CompensatedVector> grads;
  grads.reserve(parts.size());
  for (auto& part : parts) {
    loss.add(part.loss);
    grads.push_back(std::move(part.gradient));
  }
  return {loss.mean(sharded_.n), deterministic_reduce(grads).mean(sharded_.n)};
}

double ParallelExecutor::full_loss(const Vector& theta) const {
  std::vector<CompensatedScalar> parts(worker_count());
  for_each_worker([&](std::size_t w) { parts[w] = loss_sum(spec_, theta, sharded_.shards[w]); });
  CompensatedScalar total;
  for (const auto& part : parts) total.add(part);
  return total.mean(sharded_.n);
}

double ParallelExecutor::full_classification_error(const Vector& theta) const {
  if (sharded_.shards.front().labels.empty()) return std::nan("");  // regression targets
  std::vector<double> wrong(worker_count());
  for_each_worker([&](std::size_t w) {
    const auto& shard = sharded_.shards[w];
    wrong[w] = classification_error(spec_, theta, shard) * static_cast<double>(shard.size());
  });
  double total = 0.0;
  for (double c : wrong) total += std::round(c);
  return total / static_cast<double>(sharded_.n);
}

BatchAssignment ParallelExecutor::assign(std::span<const std::size_t> indices) const {
  const std::size_t workers = worker_count();
  std::vector<std::vector<std::size_t>> rows(workers);
  for (std::size_t idx : indices) {
    if (idx >= sharded_.n) throw DimensionError("assign: sample index out of range");
    rows[sharded_.owner[idx]].push_back(sharded_.local_row[idx]);
  }
  BatchAssignment out;
  out.total = indices.size();
  for (std::size_t w = 0; w < workers; ++w) {
    if (rows[w].empty()) {
      throw ConfigError("mini-batch of " + std::to_string(indices.size()) +
                        " samples leaves worker " + std::to_string(w) +
                        " empty; use a larger batch or fewer workers");
    }
    out.slices.push_back(gather(static_cast<const Batch&>(sharded_.shards[w]), rows[w]));
  }
  return out;
}

Vector ParallelExecutor::minibatch_gradient(const Vector& theta,
                                            std::span<const std::size_t> indices) const {
  const auto assignment = assign(indices);
  std::vector<CompensatedVector> parts(worker_count());
  for_each_worker([&](std::size_t w) {
    parts[w] = loss_and_gradient_sum(spec_, theta, assignment.slices[w]).gradient;
  });
  return deterministic_reduce(parts).mean(assignment.total);
}

std::unique_ptr<MinibatchCurvature> ParallelExecutor::minibatch_curvature(
    const Vector& theta, std::span<const std::size_t> indices) const {
  return std::make_unique<DistributedCurvature>(*this, theta, assign(indices));
}

Vector distributed_gradient(const ParallelExecutor& exec, const Vector& theta) {
  return exec.full_loss_and_gradient(theta).gradient;
}

Vector distributed_hvp(const ParallelExecutor& exec, const Vector& theta, const Vector& v,
                       const BatchAssignment& assignment, CurvatureBase base) {
  if (assignment.slices.size() != exec.worker_count()) {
    throw ConfigError("batch assignment does not match worker count");
  }
  std::vector<CompensatedVector> parts(exec.worker_count());
  exec.for_each_worker([&](std::size_t w) {
    if (assignment.slices[w].size() == 0) {
      throw ConfigError("empty mini-batch slice");
    }
    const CurvatureProduct product(exec.spec(), theta, assignment.slices[w]);
    parts[w] = base == CurvatureBase::exact_hessian ? product.hessian_sum(v)
                                                    : product.gauss_newton_sum(v);
  });
  return deterministic_reduce(parts).mean(assignment.total);
}

std::uint64_t ceil_log2(std::uint64_t n) {
  if (n == 0) throw ConfigError("ceil_log2: n must be >= 1");
  std::uint64_t depth = 0;
  while ((std::uint64_t{1} << depth) < n) ++depth;
  return depth;
}

namespace {

void check_cost_inputs(std::span<const std::size_t> dims, std::uint64_t n, std::uint64_t b,
                       std::uint64_t workers) {
  if (dims.size() < 2) throw ConfigError("cost model: need at least two layer widths");
  if (b == 0 || n == 0) throw ConfigError("cost model: n and b must be positive");
  if (workers == 0) throw ConfigError("cost model: worker count must be positive");
  if (n % b != 0) {
    throw ConfigError("cost model: b = " + std::to_string(b) + " does not divide n = " +
                      std::to_string(n));
  }
}

std::uint64_t weight_count(std::span<const std::size_t> dims) {
  std::uint64_t total = 0;
  for (std::size_t i = 1; i < dims.size(); ++i) total += std::uint64_t{dims[i - 1]} * dims[i];
  return total;
}

}  // namespace

CostReport cost_model_parallel(std::span<const std::size_t> dims, std::uint64_t n,
                               std::uint64_t b, std::uint64_t workers) {
  check_cost_inputs(dims, n, b, workers);
  const std::uint64_t batches = n / b;
  const std::uint64_t layers = dims.size() - 1;
  std::uint64_t width_sum = 0;
  for (std::size_t i = 1; i < dims.size(); ++i) width_sum += dims[i];
  CostReport r;
  r.floats_on_wire_per_epoch = 2 * batches * b * width_sum;
  r.sync_rounds_per_epoch = 2 * layers * batches;
  r.floats_stored_per_node = (weight_count(dims) + workers - 1) / workers;
  r.corrected_floats_on_wire_per_epoch = r.floats_on_wire_per_epoch;
  return r;
}

CostReport cost_data_parallel(std::span<const std::size_t> dims, std::uint64_t n,
                              std::uint64_t b, std::uint64_t workers) {
  check_cost_inputs(dims, n, b, workers);
  const std::uint64_t batches = n / b;
  const std::uint64_t depth = ceil_log2(workers);
  std::uint64_t literal = 0;
  for (std::size_t i = 1; i < dims.size(); ++i) literal += std::uint64_t{dims[0]} * dims[i];
  CostReport r;
  r.floats_on_wire_per_epoch = batches * depth * literal;
  r.corrected_floats_on_wire_per_epoch = batches * depth * weight_count(dims);
  r.sync_rounds_per_epoch = batches * 2;
  r.floats_stored_per_node = weight_count(dims);
  return r;
}

std::uint64_t comm_rounds_hf_per_iteration(std::uint64_t inner_applies,
                                           std::uint64_t linesearch_evals) {
  return 1 + inner_applies + linesearch_evals;
}

}  // namespace hfo
