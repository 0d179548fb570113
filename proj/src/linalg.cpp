// SPDX-License-Identifier: Apache-2.0

#include "hfo/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hfo/error.hpp"

namespace hfo {
namespace {

void require_same_length(const Vector& a, const Vector& b, const char* op) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": length mismatch (" +
                         std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
  }
}

}  // namespace

Vector::Vector(std::size_t n) : values_(n, 0.0) {}

Vector::Vector(std::size_t n, double fill) : values_(n, fill) {}

Vector::Vector(std::initializer_list<double> values) : values_(values) {}

Vector::Vector(std::vector<double> values) : values_(std::move(values)) {}

Vector Vector::from_values(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError("non-finite entry at index " + std::to_string(i));
    }
  }
  return Vector(std::vector<double>(values.begin(), values.end()));
}

bool Vector::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double x) { return std::isfinite(x); });
}

bool Vector::is_zero() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double x) { return x == 0.0; });
}

double dot(const Vector& u, const Vector& v) {
  require_same_length(u, v, "dot");
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) sum += u[i] * v[i];
  return sum;
}

Vector axpy(double a, const Vector& x, const Vector& y) {
  require_same_length(x, y, "axpy");
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + y[i];
  return out;
}

void axpy_inplace(double a, const Vector& x, Vector& y) {
  require_same_length(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

Vector scaled(double a, const Vector& x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i];
  return out;
}

void scale_inplace(double a, Vector& x) {
  for (auto& v : x) v *= a;
}

Vector add(const Vector& x, const Vector& y) { return axpy(1.0, x, y); }

Vector subtract(const Vector& x, const Vector& y) {
  require_same_length(x, y, "subtract");
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return out;
}

double norm2(const Vector& v) { return std::sqrt(dot(v, v)); }

double norm_inf(const Vector& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

Vector deterministic_reduce(std::span<const Vector> parts) {
  if (parts.empty()) throw ArityError("deterministic_reduce: empty part list");
  Vector sum = parts.front();
  for (std::size_t p = 1; p < parts.size(); ++p) {
    require_same_length(parts[p], sum, "deterministic_reduce");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += parts[p][i];
  }
  return sum;
}

namespace {

// Error-free transformation: s + e == a + b exactly.
inline void two_sum(double a, double b, double& s, double& e) {
  s = a + b;
  const double bv = s - a;
  e = (a - (s - bv)) + (b - bv);
}

// (hi, lo) += (bhi, blo), renormalized.
inline void dd_add(double& hi, double& lo, double bhi, double blo) {
  double s, e, t, f;
  two_sum(hi, bhi, s, e);
  two_sum(lo, blo, t, f);
  e += t;
  two_sum(s, e, s, e);
  e += f;
  two_sum(s, e, hi, lo);
}

}  // namespace

void CompensatedVector::add(std::size_t i, double x) {
  double s, e;
  two_sum(hi_[i], x, s, e);
  hi_[i] = s;
  lo_[i] += e;
}

void CompensatedVector::add_scaled(std::size_t offset, double a, const double* x, std::size_t n) {
  double* hi = hi_.data() + offset;
  double* lo = lo_.data() + offset;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = a * x[k];
    const double s = hi[k] + t;
    const double bv = s - hi[k];
    lo[k] += (hi[k] - (s - bv)) + (t - bv);
    hi[k] = s;
  }
}

void CompensatedVector::add(const CompensatedVector& other) {
  if (other.size() != size()) {
    throw DimensionError("compensated sum: length " + std::to_string(other.size()) +
                         " vs " + std::to_string(size()));
  }
  for (std::size_t i = 0; i < size(); ++i) dd_add(hi_[i], lo_[i], other.hi_[i], other.lo_[i]);
}

Vector CompensatedVector::rounded() const {
  Vector out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = hi_[i] + lo_[i];
  return out;
}

Vector CompensatedVector::mean(std::size_t count) const {
  const double c = static_cast<double>(count);
  Vector out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = (hi_[i] + lo_[i]) / c;
  return out;
}

void CompensatedScalar::add(double x) {
  double s, e;
  two_sum(hi_, x, s, e);
  hi_ = s;
  lo_ += e;
}

void CompensatedScalar::add(const CompensatedScalar& other) {
  dd_add(hi_, lo_, other.hi_, other.lo_);
}

CompensatedVector deterministic_reduce(std::span<const CompensatedVector> parts) {
  if (parts.empty()) throw ArityError("deterministic_reduce: empty part list");
  CompensatedVector sum = parts.front();
  for (std::size_t p = 1; p < parts.size(); ++p) sum.add(parts[p]);
  return sum;
}

}  // namespace hfo
