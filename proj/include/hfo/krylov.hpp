// SPDX-License-Identifier: Apache-2.0
//
// Matrix-free inner solvers for the damped Newton system B d = -g:
// truncated CG and Bi-CG-STAB, both recording candidate directions with their
// curvature so the caller can pick a descent direction afterwards.

#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <utility>
#include <vector>

#include "hfo/linalg.hpp"

namespace hfo {

enum class CurvatureBase { exact_hessian, gauss_newton };

std::string_view to_string(CurvatureBase b);

/// v -> base(v) + lambda * v.
class CurvatureOperator {
 public:
  using Apply = std::function<Vector(const Vector&)>;

  CurvatureOperator(Apply base_apply, std::size_t dim, double lambda,
                    CurvatureBase base = CurvatureBase::exact_hessian);

  Vector apply(const Vector& v) const;

  std::size_t dim() const { return dim_; }
  double lambda() const { return lambda_; }
  CurvatureBase base() const { return base_; }

 private:
  Apply base_apply_;
  std::size_t dim_;
  double lambda_;
  CurvatureBase base_;
};

enum class KrylovStatus { converged, max_iterations, negative_curvature, breakdown };

std::string_view to_string(KrylovStatus s);

enum class CurvatureTag { newton_type, negative_curvature };

std::string_view to_string(CurvatureTag t);

/// A direction seen during a solve, with d^T A d.
struct Candidate {
  Vector direction;
  double curvature = 0.0;

  bool negative() const;
};

struct KrylovResult {
  Vector direction;
  KrylovStatus status = KrylovStatus::max_iterations;
  std::vector<Candidate> candidates;
  double residual_norm = 0.0;
  std::size_t iterations = 0;
  std::size_t operator_applications = 0;

  bool has_negative_curvature() const;
};

/// d^T A d < -threshold * |d|^2 counts as negative curvature.
inline constexpr double kNegativeCurvatureThreshold = 1e-12;
/// Pivot magnitudes below this stop Bi-CG-STAB with status breakdown.
inline constexpr double kBreakdownThreshold = 1e-300;

bool is_negative_curvature(double curvature, double norm_sq);

/// Bi-CG-STAB with shadow residual r0* = r0. Stops when |r| <= tol * |b|, after
/// max_iter iterations, or on a vanishing pivot.
KrylovResult bicgstab(const CurvatureOperator& a, const Vector& b, const Vector& x0,
                      std::size_t max_iter, double tol);

/// Conjugate gradients that stop at the first conjugate direction with
/// negative curvature. If that happens on the first iteration the returned
/// direction is -b.
KrylovResult cg_truncated(const CurvatureOperator& a, const Vector& b, const Vector& x0,
                          std::size_t max_iter, double tol);

/// -sgn(g^T d) d with sgn(0) = 1, so the result satisfies g^T d <= 0.
Vector orient_descent(const Vector& g, const Vector& d);

/// g^T d + 1/2 d^T A d given the curvature value d^T A d.
double model_decrease(const Vector& g, const Vector& d, double curvature);

struct SelectedDirection {
  Vector direction;
  CurvatureTag tag = CurvatureTag::newton_type;
  double curvature = 0.0;  // d^T A d of the returned direction
  double model_value = 0.0;
};

/// Orients every candidate and returns the one with the smallest quadratic
/// model value g^T d + 1/2 d^T A d. Uses `a` only when the result carries no
/// candidates and the direction's curvature must be measured.
SelectedDirection select_direction(const KrylovResult& result, const Vector& g,
                                   const CurvatureOperator& a);

}  // namespace hfo
