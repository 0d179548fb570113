// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "hfo/error.hpp"
#include "hfo/linalg.hpp"
#include "support.hpp"

namespace hfo {
namespace {

using testing::random_vector;

TEST(Dot, HandArithmetic) {
  EXPECT_EQ(dot(Vector{1, 2}, Vector{3, 4}), 11.0);
  EXPECT_EQ(dot(Vector{1, 0, 0}, Vector{0, 1, 0}), 0.0);
}

TEST(Dot, SelfDotMatchesIndependentSum) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector v = random_vector(37 + trial, rng);
    long double oracle = 0.0L;
    for (double x : v) oracle += static_cast<long double>(x) * x;
    const double got = dot(v, v);
    EXPECT_GE(got, 0.0);
    EXPECT_NEAR(got, static_cast<double>(oracle), 1e-12 * static_cast<double>(oracle));
  }
}

TEST(Dot, SymmetricBitExact) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector u = random_vector(101, rng);
    const Vector v = random_vector(101, rng);
    EXPECT_EQ(dot(u, v), dot(v, u));
  }
}

TEST(Dot, LengthMismatchThrows) {
  EXPECT_THROW(dot(Vector{1, 2}, Vector{1, 2, 3}), DimensionError);
}

TEST(Axpy, Examples) {
  const Vector x{1.5, -2.0};
  const Vector y{3.0, 4.0};
  EXPECT_EQ(axpy(0.0, x, y), y);
  EXPECT_EQ(axpy(1.0, x, Vector(2)), x);
  EXPECT_EQ(axpy(2.0, Vector{1, 1}, Vector{3, 4}), (Vector{5, 6}));
  EXPECT_THROW(axpy(1.0, Vector{1}, Vector{1, 2}), DimensionError);
}

TEST(Axpy, ComposesAdditively) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = random_vector(40, rng);
    const Vector y = random_vector(40, rng);
    const double a = 0.7 * trial - 3.0;
    const double b = 1.3 - 0.2 * trial;
    const Vector lhs = axpy(a, x, axpy(b, x, y));
    const Vector rhs = axpy(a + b, x, y);
    EXPECT_LE(testing::rel_diff(lhs, rhs), 1e-12);
  }
}

TEST(VectorFromValues, RejectsNonFinite) {
  const std::vector<double> bad{1.0, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(Vector::from_values(bad), NumericError);
  const std::vector<double> inf{std::numeric_limits<double>::infinity()};
  EXPECT_THROW(Vector::from_values(inf), NumericError);
  const std::vector<double> ok{1.0, 2.0};
  EXPECT_EQ(Vector::from_values(ok), (Vector{1.0, 2.0}));
}

TEST(Norms, Basic) {
  EXPECT_DOUBLE_EQ(norm2(Vector{3, 4}), 5.0);
  EXPECT_EQ(norm_inf(Vector{1, -7, 2}), 7.0);
}

TEST(DeterministicReduce, SingletonAndInverse) {
  const Vector v{1.25, -3.5, 8.0};
  const std::vector<Vector> one{v};
  EXPECT_EQ(deterministic_reduce(one), v);
  const std::vector<Vector> pair{v, scaled(-1.0, v)};
  EXPECT_EQ(deterministic_reduce(pair), Vector(3));
}

TEST(DeterministicReduce, MatchesSequentialSumBitExact) {
  std::mt19937_64 rng(10);
  std::vector<Vector> parts;
  for (int i = 0; i < 4; ++i) parts.push_back(random_vector(64, rng));
  Vector oracle(64);
  for (const auto& p : parts) {
    for (std::size_t j = 0; j < 64; ++j) oracle[j] += p[j];
  }
  const Vector got = deterministic_reduce(parts);
  EXPECT_EQ(got, oracle);
  EXPECT_EQ(deterministic_reduce(parts), got);
}

TEST(DeterministicReduce, SplitReduceWithinAssociativityTolerance) {
  std::mt19937_64 rng(11);
  std::vector<Vector> parts;
  for (int i = 0; i < 9; ++i) parts.push_back(random_vector(33, rng));
  const Vector whole = deterministic_reduce(parts);
  const std::span<const Vector> all(parts);
  const std::vector<Vector> halves{deterministic_reduce(all.subspan(0, 4)),
                                   deterministic_reduce(all.subspan(4))};
  EXPECT_LE(testing::rel_diff(whole, deterministic_reduce(halves)), 1e-12);
}

TEST(DeterministicReduce, Errors) {
  EXPECT_THROW(deterministic_reduce(std::span<const Vector>()), ArityError);
  const std::vector<Vector> mismatched{Vector{1, 2}, Vector{1}};
  EXPECT_THROW(deterministic_reduce(mismatched), DimensionError);
}

// Terms m * 2^e with |m| < 2^52 and e in [-30, 0] are integers in units of
// 2^-30, so an __int128 accumulator gives the exact sum.
std::vector<double> dyadic_terms(std::size_t n, std::mt19937_64& rng, __int128& exact_units) {
  std::uniform_int_distribution<std::int64_t> mant(-(std::int64_t{1} << 52), std::int64_t{1} << 52);
  std::uniform_int_distribution<int> expo(-30, 0);
  std::vector<double> terms;
  exact_units = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t m = mant(rng);
    const int e = expo(rng);
    terms.push_back(std::ldexp(static_cast<double>(m), e));
    exact_units += static_cast<__int128>(m) << (e + 30);
  }
  return terms;
}

TEST(CompensatedSum, RoundsTheExactSum) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    __int128 exact = 0;
    const auto terms = dyadic_terms(500, rng, exact);
    CompensatedScalar sum;
    for (double t : terms) sum.add(t);
    EXPECT_EQ(sum.rounded(), std::ldexp(static_cast<double>(exact), -30));
  }
  CompensatedScalar cancel;
  for (double t : {1e16, 1.0, -1e16}) cancel.add(t);
  EXPECT_EQ(cancel.rounded(), 1.0);
  EXPECT_EQ(cancel.mean(4), 0.25);
}

TEST(CompensatedSum, PartitionInvariant) {
  std::mt19937_64 rng(13);
  const std::size_t n = 3;
  std::vector<std::vector<double>> columns(n);
  std::vector<double> oracle(n);
  for (std::size_t i = 0; i < n; ++i) {
    __int128 exact = 0;
    columns[i] = dyadic_terms(240, rng, exact);
    oracle[i] = std::ldexp(static_cast<double>(exact), -30);
  }
  for (std::size_t parts : {1, 2, 5, 7, 240}) {
    std::vector<CompensatedVector> partial(parts, CompensatedVector(n));
    for (std::size_t k = 0; k < 240; ++k) {
      for (std::size_t i = 0; i < n; ++i) partial[k * parts / 240].add(i, columns[i][k]);
    }
    const Vector got = deterministic_reduce(partial).rounded();
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(got[i], oracle[i]) << parts << " parts";
  }
}

TEST(CompensatedSum, AddScaledAndErrors) {
  CompensatedVector v(4);
  const double x[] = {1.0, 2.0};
  v.add_scaled(1, 3.0, x, 2);
  v.add_scaled(2, -0.5, x, 2);
  EXPECT_EQ(v.rounded(), (Vector{0.0, 3.0, 5.5, -1.0}));
  EXPECT_EQ(v.mean(2), (Vector{0.0, 1.5, 2.75, -0.5}));
  CompensatedVector other(3);
  EXPECT_THROW(v.add(other), DimensionError);
  EXPECT_THROW(deterministic_reduce(std::span<const CompensatedVector>{}), ArityError);
}

}  // namespace
}  // namespace hfo
