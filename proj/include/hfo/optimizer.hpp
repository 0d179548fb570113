// SPDX-License-Identifier: Apache-2.0
//
// Outer training loops: distributed Hessian-free iterations (CG, Bi-CG-STAB,
// Gauss-Newton CG and the hybrid Hessian/Gauss-Newton schedule) with Armijo
// backtracking and Levenberg-Marquardt damping, plus a mini-batch SGD baseline.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "hfo/data.hpp"
#include "hfo/krylov.hpp"
#include "hfo/linalg.hpp"
#include "hfo/model.hpp"
#include "hfo/parallel.hpp"

namespace hfo {

enum class Method { sgd, hf_cg, hf_bicgstab, gn_cg, hybrid };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);

struct TrainConfig {
  Method method = Method::hf_bicgstab;
  std::size_t batch_size = 512;
  double lambda0 = 1e-2;
  double armijo_c = 1e-4;
  double armijo_shrink = 0.5;
  std::size_t max_backtracks = 20;
  double warm_start_decay = 0.7;
  bool warm_start = true;
  std::size_t max_cg_iter = 5;
  double cg_tol = 1e-8;
  double sgd_learning_rate = 0.1;
  std::size_t max_outer_iter = 100;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the offending field.
  void validate(std::size_t dataset_size) const;
};

inline constexpr double kLambdaMin = 1e-8;
inline constexpr double kLambdaMax = 1e8;
inline constexpr double kLambdaShrink = 2.0 / 3.0;
inline constexpr double kLambdaBoost = 1.5;

struct OptimizerState {
  Vector theta;
  double lambda = 0.0;
  Vector prev_direction;
  std::size_t iteration = 0;
  bool hybrid_use_gn_next = false;

  static OptimizerState initial(Vector theta, double lambda0);
};

/// Curvature tag column value for records without an inner solve (SGD).
enum class RecordCurvature { none = -1, newton_type = 0, negative_curvature = 1 };

struct IterationRecord {
  std::size_t k = 0;
  double train_loss = 0.0;
  double train_error = 0.0;
  double test_error = 0.0;
  double lambda = 0.0;
  double alpha = 0.0;
  std::size_t inner_iterations = 0;
  RecordCurvature curvature = RecordCurvature::none;
  double epochs_consumed = 0.0;
  std::uint64_t comm_rounds = 0;
  double wall_ms = 0.0;

  CurvatureBase base = CurvatureBase::exact_hessian;
  std::size_t operator_applications = 0;
  std::size_t line_search_evals = 0;
  bool accepted = false;
  bool converged = false;
};

/// Cumulative cost counters carried across iterations.
struct Accounting {
  double epochs = 0.0;
  std::uint64_t comm_rounds = 0;
};

struct LineSearchResult {
  double alpha = 0.0;
  bool accepted = false;
  std::size_t evals = 0;
  double f_new = 0.0;  // loss at the accepted point (f0 if rejected)
  Vector theta_new;    // accepted point (empty if rejected)
};

/// Backtracks from alpha = 1 by cfg.armijo_shrink for at most
/// cfg.max_backtracks trials until f(theta + alpha delta) <= f0 + c alpha g^T delta.
/// Throws DirectionError if g^T delta >= 0.
LineSearchResult armijo_search(const std::function<double(const Vector&)>& f_eval,
                               const Vector& theta, const Vector& delta, const Vector& g,
                               double f0, const TrainConfig& cfg);

/// Levenberg-Marquardt: rho > 3/4 shrinks by 2/3, rho < 1/4 (or non-finite)
/// grows by 3/2; clamped to [1e-8, 1e8].
double adjust_damping(double lambda, double rho);

/// f0 + g^T d + 1/2 d^T A d.
double quadratic_model(const Vector& g, const CurvatureOperator& a, const Vector& d, double f0);

/// Test and experiment hooks.
struct TrainHooks {
  /// Replaces the curvature operator of iteration k (1-based) when it returns a value.
  std::function<std::optional<CurvatureOperator>(std::size_t k, const CurvatureOperator&)>
      operator_override;
  /// Called once per record as soon as it is complete.
  std::function<void(const IterationRecord&)> on_record;
  /// Ends training after the given record when it returns true.
  std::function<bool(const IterationRecord&)> stop_after;
};

/// One distributed HF iteration. Updates `state` and `acc` in place and returns
/// the record (metrics fields train_error/test_error left for the caller).
IterationRecord hf_step(OptimizerState& state, const TrainConfig& cfg, const Evaluator& exec,
                        Rng& rng, Accounting& acc, const TrainHooks* hooks = nullptr);

/// Mini-batch SGD; one record per epoch, two communication rounds per update.
std::vector<IterationRecord> sgd_train(const TrainConfig& cfg, const Evaluator& exec,
                                       Vector& theta, const Batch* test_set, Rng& rng,
                                       const TrainHooks* hooks = nullptr);

/// Runs cfg.max_outer_iter HF iterations (or SGD epochs) from `theta`, which
/// holds the final parameters on return. Records are also streamed through
/// hooks->on_record, so a caller sees every completed record even if a later
/// iteration throws.
std::vector<IterationRecord> train(const TrainConfig& cfg, const Evaluator& exec,
                                   Vector& theta, const Batch* test_set, Rng& rng,
                                   const TrainHooks* hooks = nullptr);

}  // namespace hfo
