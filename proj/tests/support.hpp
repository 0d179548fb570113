// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the unit and acceptance tests.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "hfo/data.hpp"
#include "hfo/linalg.hpp"
#include "hfo/model.hpp"

namespace hfo::testing {

inline Vector random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

inline Eigen::VectorXd to_eigen(const Vector& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

inline Vector from_eigen(const Eigen::VectorXd& v) {
  Vector out(static_cast<std::size_t>(v.size()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v(static_cast<Eigen::Index>(i));
  return out;
}

inline double rel_diff(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double rel_diff(const Vector& a, const Vector& b, double floor = 1e-12) {
  return norm2(subtract(a, b)) / std::max({norm2(a), norm2(b), floor});
}

/// Random batch with class labels (or dense targets for MSE when `dense_targets`).
inline Batch random_batch(const NetworkSpec& spec, std::size_t b, std::mt19937_64& rng,
                          bool dense_targets = false) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Batch batch;
  batch.inputs = Matrix(b, spec.input_dim());
  for (auto& x : batch.inputs.data) x = normal(rng);
  if (dense_targets) {
    batch.targets = Matrix(b, spec.output_dim());
    for (auto& y : batch.targets.data) y = normal(rng);
  } else {
    batch.labels.resize(b);
    for (auto& y : batch.labels) {
      y = static_cast<std::uint32_t>(rng() % spec.output_dim());
    }
  }
  return batch;
}

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);
    }
  }
  return out;
}

/// Linear least-squares problem y = X w* + noise packaged as a one-layer MSE net.
struct LinearProblem {
  NetworkSpec spec;
  Dataset data;
};

inline LinearProblem linear_problem(std::size_t n, std::size_t d, std::size_t outputs,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LinearProblem p;
  p.spec.dims = {d, outputs};
  p.spec.output = OutputLoss::mean_squared_error;
  p.data.inputs = Matrix(n, d);
  for (auto& x : p.data.inputs.data) x = normal(rng);
  p.data.targets = Matrix(n, outputs);
  Matrix w(outputs, d);
  for (auto& x : w.data) x = normal(rng);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < outputs; ++j) {
      double y = 0.3 * normal(rng) + 0.5;
      for (std::size_t i = 0; i < d; ++i) y += w(j, i) * p.data.inputs(s, i);
      p.data.targets(s, j) = y;
    }
  }
  p.data.num_classes = outputs;
  return p;
}

/// Least-squares optimum loss of a LinearProblem (bias column included).
inline double least_squares_loss(const LinearProblem& p) {
  const auto n = static_cast<Eigen::Index>(p.data.size());
  const auto d = static_cast<Eigen::Index>(p.spec.input_dim());
  Eigen::MatrixXd x(n, d + 1);
  x.leftCols(d) = to_eigen(p.data.inputs);
  x.col(d).setOnes();
  const Eigen::MatrixXd y = to_eigen(p.data.targets);
  const Eigen::MatrixXd w = x.colPivHouseholderQr().solve(y);
  return (x * w - y).squaredNorm() / static_cast<double>(n);
}

/// Scalar-by-scalar forward pass and mean loss, independent of the model kernels.
inline double reference_loss(const NetworkSpec& spec, const Vector& theta, const Batch& batch,
                             std::vector<std::vector<double>>* outputs = nullptr) {
  const std::size_t l = spec.layer_count();
  double total = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    std::vector<double> a(batch.inputs.row(s), batch.inputs.row(s) + spec.input_dim());
    for (std::size_t layer = 0; layer < l; ++layer) {
      const std::size_t fan_in = spec.dims[layer];
      const std::size_t fan_out = spec.dims[layer + 1];
      std::size_t w = 0;
      for (std::size_t i = 0; i < layer; ++i) w += (spec.dims[i] + 1) * spec.dims[i + 1];
      const std::size_t bias = w + fan_in * fan_out;
      std::vector<double> z(fan_out);
      for (std::size_t j = 0; j < fan_out; ++j) {
        double acc = theta[bias + j];
        for (std::size_t i = 0; i < fan_in; ++i) acc += theta[w + j * fan_in + i] * a[i];
        z[j] = acc;
      }
      if (layer + 1 < l) {
        for (auto& x : z) {
          switch (spec.hidden_activation) {
            case Activation::sigmoid:
              x = 1.0 / (1.0 + std::exp(-x));
              break;
            case Activation::tanh:
              x = std::tanh(x);
              break;
            case Activation::relu:
              x = x > 0.0 ? x : 0.0;
              break;
          }
        }
      }
      a = std::move(z);
    }
    if (outputs != nullptr) outputs->push_back(a);
    if (spec.output == OutputLoss::softmax_cross_entropy) {
      double m = a[0];
      for (double x : a) m = std::max(m, x);
      double sum = 0.0;
      for (double x : a) sum += std::exp(x - m);
      total += m + std::log(sum) - a[batch.labels[s]];
    } else {
      for (std::size_t j = 0; j < a.size(); ++j) {
        const double y = batch.has_targets() ? batch.targets(s, j)
                                             : (batch.labels[s] == j ? 1.0 : 0.0);
        total += (a[j] - y) * (a[j] - y);
      }
    }
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace hfo::testing
