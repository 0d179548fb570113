// SPDX-License-Identifier: Apache-2.0

#include "hfo/krylov.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "hfo/error.hpp"

namespace hfo {
namespace {

void check_system(const CurvatureOperator& a, const Vector& b, const Vector& x0,
                  std::size_t max_iter, double tol) {
  if (b.size() != a.dim() || x0.size() != a.dim()) {
    throw DimensionError("krylov: operator dim " + std::to_string(a.dim()) + ", rhs " +
                         std::to_string(b.size()) + ", start " + std::to_string(x0.size()));
  }
  if (max_iter == 0) throw ConfigError("krylov: max_iter must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("krylov: tol must be positive");
}

// Iterate x together with its curvature x^T A x. Since the recurrences keep
// r = b - A x, A x is available as b - r without another product.
struct Iterate {
  Vector x;
  double curvature = 0.0;
  double residual = std::numeric_limits<double>::infinity();
};

double iterate_curvature(const Vector& x, const Vector& b, const Vector& r) {
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += x[i] * (b[i] - r[i]);
  return sum;
}

void push_if_missing(KrylovResult& res, const Vector& d, double curvature) {
  if (d.is_zero()) return;
  for (const auto& c : res.candidates) {
    if (c.direction == d) return;
  }
  res.candidates.push_back({d, curvature});
}

}  // namespace

std::string_view to_string(CurvatureBase b) {
  return b == CurvatureBase::exact_hessian ? "exact_hessian" : "gauss_newton";
}

std::string_view to_string(KrylovStatus s) {
  switch (s) {
    case KrylovStatus::converged:
      return "converged";
    case KrylovStatus::max_iterations:
      return "max_iterations";
    case KrylovStatus::negative_curvature:
      return "negative_curvature";
    case KrylovStatus::breakdown:
      return "breakdown";
  }
  return "?";
}

std::string_view to_string(CurvatureTag t) {
  return t == CurvatureTag::newton_type ? "newton_type" : "negative_curvature";
}

CurvatureOperator::CurvatureOperator(Apply base_apply, std::size_t dim, double lambda,
                                     CurvatureBase base)
    : base_apply_(std::move(base_apply)), dim_(dim), lambda_(lambda), base_(base) {
  if (dim_ == 0) throw ConfigError("curvature operator dimension must be positive");
  if (!(lambda_ >= 0.0)) throw ConfigError("damping must be nonnegative");
}

Vector CurvatureOperator::apply(const Vector& v) const {
  if (v.size() != dim_) throw DimensionError("curvature operator: input length mismatch");
  Vector out = base_apply_(v);
  if (out.size() != dim_) throw DimensionError("curvature operator: output length mismatch");
  if (lambda_ != 0.0) axpy_inplace(lambda_, v, out);
  return out;
}

bool is_negative_curvature(double curvature, double norm_sq) {
  return curvature < -kNegativeCurvatureThreshold * norm_sq;
}

bool Candidate::negative() const {
  return is_negative_curvature(curvature, dot(direction, direction));
}

bool KrylovResult::has_negative_curvature() const {
  for (const auto& c : candidates) {
    if (c.negative()) return true;
  }
  return false;
}

KrylovResult bicgstab(const CurvatureOperator& a, const Vector& b, const Vector& x0,
                      std::size_t max_iter, double tol) {
  check_system(a, b, x0, max_iter, tol);
  KrylovResult res;
  const double threshold = tol * norm2(b);

  Vector x = x0;
  Vector r = subtract(b, a.apply(x));
  res.operator_applications = 1;
  const Vector r_shadow = r;
  Vector p = r;
  double rho = dot(r, r_shadow);

  Iterate best{x, iterate_curvature(x, b, r), norm2(r)};
  auto track = [&](const Vector& xi, const Vector& ri) {
    const double rn = norm2(ri);
    if (rn <= best.residual) best = {xi, iterate_curvature(xi, b, ri), rn};
  };

  bool finished = false;
  for (std::size_t j = 0; j < max_iter; ++j) {
    if (norm2(r) <= threshold) {
      res.status = KrylovStatus::converged;
      finished = true;
      break;
    }
    const Vector ap = a.apply(p);
    ++res.operator_applications;
    res.candidates.push_back({p, dot(p, ap)});

    const double pivot = dot(ap, r_shadow);
    if (std::abs(pivot) < kBreakdownThreshold) {
      res.status = KrylovStatus::breakdown;
      finished = true;
      break;
    }
    const double alpha = rho / pivot;
    Vector s = axpy(-alpha, ap, r);

    if (norm2(s) <= threshold) {
      // Half-step already solves the system; the stabilizing step would divide by |As|^2 = 0.
      axpy_inplace(alpha, p, x);
      r = std::move(s);
      res.iterations = j + 1;
      res.candidates.push_back({x, iterate_curvature(x, b, r)});
      track(x, r);
      res.status = KrylovStatus::converged;
      finished = true;
      break;
    }

    const Vector as = a.apply(s);
    ++res.operator_applications;
    const double as_sq = dot(as, as);
    if (as_sq < kBreakdownThreshold) {
      axpy_inplace(alpha, p, x);
      r = std::move(s);
      res.iterations = j + 1;
      res.candidates.push_back({x, iterate_curvature(x, b, r)});
      track(x, r);
      res.status = KrylovStatus::breakdown;
      finished = true;
      break;
    }
    const double gamma = dot(s, as) / as_sq;

    axpy_inplace(alpha, p, x);
    axpy_inplace(gamma, s, x);
    r = axpy(-gamma, as, s);
    res.iterations = j + 1;
    res.candidates.push_back({x, iterate_curvature(x, b, r)});
    track(x, r);

    if (std::abs(gamma) < kBreakdownThreshold) {
      res.status = KrylovStatus::breakdown;
      finished = true;
      break;
    }
    const double rho_next = dot(r, r_shadow);
    const double beta = (rho_next / rho) * (alpha / gamma);
    // p = r + beta (p - gamma A p)
    axpy_inplace(-gamma, ap, p);
    p = axpy(beta, p, r);
    rho = rho_next;
  }
  if (!finished) {
    res.status = norm2(r) <= threshold ? KrylovStatus::converged : KrylovStatus::max_iterations;
  }

  if (res.status == KrylovStatus::breakdown) {
    res.direction = best.x;
    res.residual_norm = best.residual;
    push_if_missing(res, best.x, best.curvature);
  } else {
    res.direction = x;
    res.residual_norm = norm2(r);
    push_if_missing(res, x, iterate_curvature(x, b, r));
  }
  return res;
}

KrylovResult cg_truncated(const CurvatureOperator& a, const Vector& b, const Vector& x0,
                          std::size_t max_iter, double tol) {
  check_system(a, b, x0, max_iter, tol);
  KrylovResult res;
  const double threshold = tol * norm2(b);

  Vector x = x0;
  Vector r = subtract(b, a.apply(x));
  res.operator_applications = 1;
  Vector p = r;
  double rr = dot(r, r);
  bool finished = false;

  for (std::size_t j = 0; j < max_iter; ++j) {
    if (std::sqrt(rr) <= threshold) {
      res.status = KrylovStatus::converged;
      finished = true;
      break;
    }
    const Vector ap = a.apply(p);
    ++res.operator_applications;
    const double curvature = dot(p, ap);
    res.candidates.push_back({p, curvature});

    if (is_negative_curvature(curvature, dot(p, p))) {
      res.status = KrylovStatus::negative_curvature;
      if (j == 0) {
        // Steepest descent fallback: -b. Its curvature equals p's when p = r0 = b.
        res.direction = scaled(-1.0, b);
        double b_curvature = curvature;
        if (p != b) {
          b_curvature = dot(b, a.apply(b));
          ++res.operator_applications;
        }
        res.residual_norm = std::sqrt(rr);
        push_if_missing(res, res.direction, b_curvature);
        return res;
      }
      finished = true;
      break;
    }
    if (curvature <= kBreakdownThreshold) {
      res.status = KrylovStatus::breakdown;
      finished = true;
      break;
    }

    const double alpha = rr / curvature;
    axpy_inplace(alpha, p, x);
    axpy_inplace(-alpha, ap, r);
    res.iterations = j + 1;
    res.candidates.push_back({x, iterate_curvature(x, b, r)});

    const double rr_next = dot(r, r);
    const double beta = rr_next / rr;
    p = axpy(beta, p, r);
    rr = rr_next;
  }
  if (!finished) {
    res.status = std::sqrt(rr) <= threshold ? KrylovStatus::converged
                                            : KrylovStatus::max_iterations;
  }
  res.direction = x;
  res.residual_norm = std::sqrt(rr);
  push_if_missing(res, x, iterate_curvature(x, b, r));
  return res;
}

Vector orient_descent(const Vector& g, const Vector& d) {
  if (g.size() != d.size()) throw DimensionError("orient_descent: length mismatch");
  if (d.is_zero()) throw DirectionError("orient_descent: zero direction");
  const double sign = dot(g, d) >= 0.0 ? 1.0 : -1.0;
  return scaled(-sign, d);
}

double model_decrease(const Vector& g, const Vector& d, double curvature) {
  return dot(g, d) + 0.5 * curvature;
}

SelectedDirection select_direction(const KrylovResult& result, const Vector& g,
                                   const CurvatureOperator& a) {
  std::vector<Candidate> measured;
  const std::vector<Candidate>* pool = &result.candidates;
  if (result.candidates.empty()) {
    if (result.direction.empty() || result.direction.is_zero()) {
      throw DirectionError("select_direction: no nonzero candidate");
    }
    measured.push_back({result.direction, dot(result.direction, a.apply(result.direction))});
    pool = &measured;
  }

  bool found = false;
  SelectedDirection best;
  for (const auto& c : *pool) {
    if (c.direction.is_zero()) continue;
    Vector d = orient_descent(g, c.direction);
    // Orientation flips sign only, so d^T A d is unchanged.
    const double m = model_decrease(g, d, c.curvature);
    if (!found || m < best.model_value) {
      best.direction = std::move(d);
      best.curvature = c.curvature;
      best.model_value = m;
      found = true;
    }
  }
  if (!found) throw DirectionError("select_direction: all candidates are zero");
  best.tag = is_negative_curvature(best.curvature, dot(best.direction, best.direction))
                 ? CurvatureTag::negative_curvature
                 : CurvatureTag::newton_type;
  return best;
}

}  // namespace hfo
