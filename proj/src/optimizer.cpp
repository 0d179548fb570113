// SPDX-License-Identifier: Apache-2.0

#include "hfo/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "hfo/error.hpp"

namespace hfo {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

CurvatureBase base_for(Method method, bool hybrid_use_gn) {
  switch (method) {
    case Method::gn_cg:
      return CurvatureBase::gauss_newton;
    case Method::hybrid:
      return hybrid_use_gn ? CurvatureBase::gauss_newton : CurvatureBase::exact_hessian;
    default:
      return CurvatureBase::exact_hessian;
  }
}

void fill_metrics(IterationRecord& rec, const Evaluator& exec, const Vector& theta,
                  const Batch* test_set) {
  rec.train_error = exec.full_classification_error(theta);
  rec.test_error = test_set != nullptr && !test_set->labels.empty()
                       ? classification_error(exec.spec(), theta, *test_set)
                       : std::nan("");
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::sgd:
      return "sgd";
    case Method::hf_cg:
      return "hf_cg";
    case Method::hf_bicgstab:
      return "hf_bicgstab";
    case Method::gn_cg:
      return "gn_cg";
    case Method::hybrid:
      return "hybrid";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  for (Method m : {Method::sgd, Method::hf_cg, Method::hf_bicgstab, Method::gn_cg,
                   Method::hybrid}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

void TrainConfig::validate(std::size_t dataset_size) const {
  if (batch_size == 0) throw ConfigError("batch-size must be >= 1");
  if (batch_size > dataset_size) {
    throw ConfigError("batch-size " + std::to_string(batch_size) + " exceeds training set size " +
                      std::to_string(dataset_size));
  }
  if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) throw ConfigError("lambda0 must be >= 0");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ConfigError("armijo-c must lie in (0,1)");
  if (!(armijo_shrink > 0.0 && armijo_shrink < 1.0)) {
    throw ConfigError("armijo-shrink must lie in (0,1)");
  }
  if (max_backtracks == 0) throw ConfigError("max-backtracks must be >= 1");
  if (!(warm_start_decay >= 0.0 && warm_start_decay <= 1.0)) {
    throw ConfigError("eta must lie in [0,1]");
  }
  if (max_cg_iter == 0) throw ConfigError("cg-iters must be >= 1");
  if (!(cg_tol > 0.0)) throw ConfigError("cg-tol must be > 0");
  if (!(sgd_learning_rate > 0.0) || !std::isfinite(sgd_learning_rate)) {
    throw ConfigError("lr must be > 0");
  }
}

OptimizerState OptimizerState::initial(Vector theta, double lambda0) {
  OptimizerState s;
  s.prev_direction = Vector(theta.size());
  s.theta = std::move(theta);
  s.lambda = lambda0;
  return s;
}

LineSearchResult armijo_search(const std::function<double(const Vector&)>& f_eval,
                               const Vector& theta, const Vector& delta, const Vector& g,
                               double f0, const TrainConfig& cfg) {
  const double slope = dot(g, delta);
  if (!(slope < 0.0)) {
    throw DirectionError("armijo_search: g^T delta = " + std::to_string(slope) +
                         " is not a descent direction");
  }
  LineSearchResult res;
  res.f_new = f0;
  double alpha = 1.0;
  for (std::size_t trial = 0; trial < cfg.max_backtracks; ++trial) {
    Vector candidate = axpy(alpha, delta, theta);
    const double f = f_eval(candidate);
    ++res.evals;
    if (std::isfinite(f) && f <= f0 + cfg.armijo_c * alpha * slope) {
      res.alpha = alpha;
      res.accepted = true;
      res.f_new = f;
      res.theta_new = std::move(candidate);
      return res;
    }
    alpha *= cfg.armijo_shrink;
  }
  return res;
}

double adjust_damping(double lambda, double rho) {
  double next = lambda;
  if (!std::isfinite(rho) || rho < 0.25) {
    next = lambda * kLambdaBoost;
  } else if (rho > 0.75) {
    next = lambda * kLambdaShrink;
  }
  return std::clamp(next, kLambdaMin, kLambdaMax);
}

double quadratic_model(const Vector& g, const CurvatureOperator& a, const Vector& d, double f0) {
  if (g.size() != d.size()) throw DimensionError("quadratic_model: length mismatch");
  return f0 + dot(g, d) + 0.5 * dot(d, a.apply(d));
}

IterationRecord hf_step(OptimizerState& state, const TrainConfig& cfg, const Evaluator& exec,
                        Rng& rng, Accounting& acc, const TrainHooks* hooks) {
  const auto start = Clock::now();
  const std::size_t n = exec.sample_count();
  const double batch_epochs = static_cast<double>(cfg.batch_size) / static_cast<double>(n);
  const std::size_t k = state.iteration + 1;

  IterationRecord rec;
  rec.k = k;
  rec.lambda = state.lambda;

  // Full gradient: one distributed reduce, one pass over the data. The loss
  // rides along in the same reduction.
  const LossAndGradient lg = exec.full_loss_and_gradient(state.theta);
  acc.epochs += 1.0;
  acc.comm_rounds += 1;
  const Vector& g = lg.gradient;
  const double f0 = lg.loss;

  auto finish = [&](IterationRecord& r) {
    r.epochs_consumed = acc.epochs;
    r.comm_rounds = acc.comm_rounds;
    r.wall_ms = elapsed_ms(start);
    return r;
  };

  if (g.is_zero()) {
    rec.train_loss = f0;
    rec.converged = true;
    rec.curvature = RecordCurvature::newton_type;
    rec.base = base_for(cfg.method, state.hybrid_use_gn_next);
    return finish(rec);
  }

  // Curvature operator on one mini-batch, fixed for the whole inner solve.
  const CurvatureBase base = base_for(cfg.method, state.hybrid_use_gn_next);
  rec.base = base;
  const auto indices = sample_indices(n, cfg.batch_size, rng);
  const auto session = exec.minibatch_curvature(state.theta, indices);
  const MinibatchCurvature* curvature = session.get();
  CurvatureOperator op([curvature, base](const Vector& v) { return curvature->apply(v, base); },
                       state.theta.size(), state.lambda, base);
  if (hooks != nullptr && hooks->operator_override) {
    if (auto replaced = hooks->operator_override(k, op)) op = std::move(*replaced);
  }

  Vector x0(state.theta.size());
  if (state.iteration > 0 && cfg.warm_start && cfg.warm_start_decay > 0.0 &&
      state.prev_direction.size() == x0.size()) {
    x0 = scaled(cfg.warm_start_decay, state.prev_direction);
  }
  const Vector rhs = scaled(-1.0, g);

  const KrylovResult solve = cfg.method == Method::hf_bicgstab
                                 ? bicgstab(op, rhs, x0, cfg.max_cg_iter, cfg.cg_tol)
                                 : cg_truncated(op, rhs, x0, cfg.max_cg_iter, cfg.cg_tol);
  std::size_t applications = solve.operator_applications;
  rec.inner_iterations = solve.iterations;

  SelectedDirection chosen;
  bool have_direction = false;
  try {
    chosen = select_direction(solve, g, op);
    have_direction = dot(g, chosen.direction) < 0.0;
  } catch (const DirectionError&) {
    have_direction = false;
  }
  if (!have_direction) {
    // No usable candidate: fall back to steepest descent.
    chosen.direction = scaled(-1.0, g);
    chosen.curvature = dot(chosen.direction, op.apply(chosen.direction));
    ++applications;
    chosen.tag = is_negative_curvature(chosen.curvature, dot(g, g))
                     ? CurvatureTag::negative_curvature
                     : CurvatureTag::newton_type;
  }
  rec.operator_applications = applications;
  acc.epochs += static_cast<double>(applications) * batch_epochs;
  acc.comm_rounds += applications;
  rec.curvature = chosen.tag == CurvatureTag::negative_curvature
                      ? RecordCurvature::negative_curvature
                      : RecordCurvature::newton_type;

  // Armijo search: every trial is a distributed loss over the full set.
  auto f_eval = [&](const Vector& theta) {
    acc.epochs += 1.0;
    acc.comm_rounds += 1;
    return exec.full_loss(theta);
  };
  LineSearchResult ls = armijo_search(f_eval, state.theta, chosen.direction, g, f0, cfg);
  rec.line_search_evals = ls.evals;
  rec.accepted = ls.accepted;

  if (ls.accepted) {
    const double slope = dot(g, chosen.direction);
    const double predicted =
        -(ls.alpha * slope + 0.5 * ls.alpha * ls.alpha * chosen.curvature);
    const double rho = (f0 - ls.f_new) / predicted;
    state.theta = std::move(ls.theta_new);
    rec.alpha = ls.alpha;
    rec.train_loss = ls.f_new;
    if (cfg.lambda0 > 0.0) state.lambda = adjust_damping(state.lambda, rho);
  } else {
    rec.alpha = 0.0;
    rec.train_loss = f0;
    if (cfg.lambda0 > 0.0) {
      state.lambda = std::clamp(state.lambda * kLambdaBoost, kLambdaMin, kLambdaMax);
    }
  }

  state.prev_direction = std::move(chosen.direction);
  state.hybrid_use_gn_next =
      cfg.method == Method::hybrid && chosen.tag == CurvatureTag::negative_curvature;
  state.iteration = k;
  return finish(rec);
}

std::vector<IterationRecord> sgd_train(const TrainConfig& cfg, const Evaluator& exec,
                                       Vector& theta, const Batch* test_set, Rng& rng,
                                       const TrainHooks* hooks) {
  if (cfg.method != Method::sgd) throw ConfigError("sgd_train called with a non-SGD method");
  cfg.validate(exec.sample_count());
  const std::size_t n = exec.sample_count();
  const std::size_t updates = std::max<std::size_t>(1, n / cfg.batch_size);

  std::vector<IterationRecord> records;
  Accounting acc;
  for (std::size_t epoch = 1; epoch <= cfg.max_outer_iter; ++epoch) {
    const auto start = Clock::now();
    for (std::size_t u = 0; u < updates; ++u) {
      const auto indices = sample_indices(n, cfg.batch_size, rng);
      const Vector g = exec.minibatch_gradient(theta, indices);
      axpy_inplace(-cfg.sgd_learning_rate, g, theta);
      acc.comm_rounds += 2;  // reduce + broadcast
    }
    acc.epochs += static_cast<double>(updates * cfg.batch_size) / static_cast<double>(n);
    IterationRecord rec;
    rec.k = epoch;
    rec.alpha = cfg.sgd_learning_rate;
    rec.curvature = RecordCurvature::none;
    rec.accepted = true;
    rec.epochs_consumed = acc.epochs;
    rec.comm_rounds = acc.comm_rounds;
    rec.wall_ms = elapsed_ms(start);
    rec.train_loss = exec.full_loss(theta);
    fill_metrics(rec, exec, theta, test_set);
    records.push_back(rec);
    if (hooks != nullptr && hooks->on_record) hooks->on_record(rec);
    if (hooks != nullptr && hooks->stop_after && hooks->stop_after(rec)) break;
  }
  return records;
}

std::vector<IterationRecord> train(const TrainConfig& cfg, const Evaluator& exec,
                                   Vector& theta, const Batch* test_set, Rng& rng,
                                   const TrainHooks* hooks) {
  cfg.validate(exec.sample_count());
  if (theta.size() != exec.spec().param_count()) {
    throw DimensionError("initial parameters do not match the network");
  }
  if (cfg.method == Method::sgd) return sgd_train(cfg, exec, theta, test_set, rng, hooks);

  std::vector<IterationRecord> records;
  OptimizerState state = OptimizerState::initial(theta, cfg.lambda0);
  Accounting acc;
  for (std::size_t it = 0; it < cfg.max_outer_iter; ++it) {
    IterationRecord rec = hf_step(state, cfg, exec, rng, acc, hooks);
    theta = state.theta;
    fill_metrics(rec, exec, state.theta, test_set);
    records.push_back(rec);
    if (hooks != nullptr && hooks->on_record) hooks->on_record(rec);
    if (rec.converged) break;
    if (hooks != nullptr && hooks->stop_after && hooks->stop_after(rec)) break;
  }
  return records;
}

}  // namespace hfo
