// SPDX-License-Identifier: Apache-2.0
//
// Dense vector kernels. Every accumulation runs left-to-right in index order
// so results are reproducible bit-for-bit.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace hfo {

class Vector {
 public:
  Vector() = default;
  /// Zero vector of length n.
  explicit Vector(std::size_t n);
  Vector(std::size_t n, double fill);
  Vector(std::initializer_list<double> values);
  explicit Vector(std::vector<double> values);

  /// Builds from external data; rejects non-finite entries with NumericError.
  static Vector from_values(std::span<const double> values);

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }

  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  const std::vector<double>& values() const { return values_; }

  bool all_finite() const;
  bool is_zero() const;

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> values_;
};

double dot(const Vector& u, const Vector& v);

/// a*x + y.
Vector axpy(double a, const Vector& x, const Vector& y);

/// y += a*x in place.
void axpy_inplace(double a, const Vector& x, Vector& y);

Vector scaled(double a, const Vector& x);
void scale_inplace(double a, Vector& x);

Vector add(const Vector& x, const Vector& y);
Vector subtract(const Vector& x, const Vector& y);

double norm2(const Vector& v);
double norm_inf(const Vector& v);

/// Sum of parts folded in ascending list order. Throws ArityError on an empty
/// list and DimensionError on length mismatch.
Vector deterministic_reduce(std::span<const Vector> parts);

/// Running sum kept as an unevaluated pair hi + lo (double-double). The pair
/// carries roughly 106 bits, so adding the same terms under any grouping rounds
/// to the same double. Sums over disjoint sample sets therefore combine into a
/// result that does not depend on how the samples were partitioned.
class CompensatedVector {
 public:
  CompensatedVector() = default;
  explicit CompensatedVector(std::size_t n) : hi_(n), lo_(n) {}

  std::size_t size() const { return hi_.size(); }

  /// entry[i] += x.
  void add(std::size_t i, double x);
  /// entry[offset + k] += a * x[k] for k < n; a*x[k] is rounded once.
  void add_scaled(std::size_t offset, double a, const double* x, std::size_t n);
  /// this += other, exactly to working precision.
  void add(const CompensatedVector& other);

  /// Entries rounded to double.
  Vector rounded() const;
  /// Rounded entries divided by count.
  Vector mean(std::size_t count) const;

 private:
  Vector hi_;
  Vector lo_;
};

/// Scalar counterpart of CompensatedVector.
class CompensatedScalar {
 public:
  void add(double x);
  void add(const CompensatedScalar& other);
  double rounded() const { return hi_ + lo_; }
  double mean(std::size_t count) const { return rounded() / static_cast<double>(count); }

 private:
  double hi_ = 0.0;
  double lo_ = 0.0;
};

/// Compensated sum of parts folded in ascending list order. Same errors as the
/// plain overload.
CompensatedVector deterministic_reduce(std::span<const CompensatedVector> parts);

}  // namespace hfo
