// SPDX-License-Identifier: Apache-2.0
//
// Fully-connected network: loss, gradient, exact Hessian-vector products via
// the R-operator, and Gauss-Newton-vector products.
//
// Parameter layout (flat theta): for each layer i = 1..l, the d_i x d_{i-1}
// weight matrix in row-major order followed by its d_i biases.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hfo/linalg.hpp"

namespace hfo {

enum class Activation { sigmoid, tanh, relu };
enum class OutputLoss { softmax_cross_entropy, mean_squared_error };

std::string_view to_string(Activation a);
std::string_view to_string(OutputLoss o);
Activation parse_activation(std::string_view s);
OutputLoss parse_output_loss(std::string_view s);

struct NetworkSpec {
  std::vector<std::size_t> dims;  // d_0 (inputs) ... d_l (outputs)
  Activation hidden_activation = Activation::sigmoid;
  OutputLoss output = OutputLoss::softmax_cross_entropy;

  /// Throws ConfigError unless l >= 1 and every width is >= 1.
  void validate() const;

  std::size_t layer_count() const { return dims.size() - 1; }
  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }

  std::size_t param_count() const;
  /// Offset of layer i's weight block (0-based layer index).
  std::size_t weight_offset(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const;
};

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  bool empty() const { return data.empty(); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// A set of samples. Classification batches carry `labels`; regression batches
/// carry dense `targets` (rows x d_l). With MSE and only labels, the targets
/// are the one-hot encodings of the labels.
struct Batch {
  Matrix inputs;
  std::vector<std::uint32_t> labels;
  Matrix targets;

  std::size_t size() const { return inputs.rows; }
  bool has_targets() const { return !targets.empty(); }
};

/// Throws DimensionError if the batch does not fit the network.
void check_batch(const NetworkSpec& spec, const Batch& batch);

/// Glorot-uniform weights, zero biases; deterministic in seed.
Vector init_params(const NetworkSpec& spec, std::uint64_t seed);

/// Network outputs (logits for softmax, raw outputs for MSE), one row per sample.
Matrix forward_outputs(const NetworkSpec& spec, const Vector& theta, const Batch& batch);

/// Mean per-sample loss. Throws NumericError on non-finite activations.
double loss(const NetworkSpec& spec, const Vector& theta, const Batch& batch);

struct LossAndGradient {
  double loss = 0.0;
  Vector gradient;
};

LossAndGradient loss_and_gradient(const NetworkSpec& spec, const Vector& theta,
                                  const Batch& batch);

Vector gradient(const NetworkSpec& spec, const Vector& theta, const Batch& batch);

/// Per-sample loss and gradient summed over the batch, not yet divided by its
/// size. Sums over disjoint batches add up to the sum over their union
/// independently of the split; the mean functions above are these sums
/// divided by the batch size.
struct LossAndGradientSum {
  CompensatedScalar loss;
  CompensatedVector gradient;
};

LossAndGradientSum loss_and_gradient_sum(const NetworkSpec& spec, const Vector& theta,
                                         const Batch& batch);

CompensatedScalar loss_sum(const NetworkSpec& spec, const Vector& theta, const Batch& batch);

/// Exact H(theta) v by forward-over-reverse differentiation.
Vector hessian_vec(const NetworkSpec& spec, const Vector& theta, const Batch& batch,
                   const Vector& v);

/// J^T H_out J v, with J the Jacobian of the outputs w.r.t. theta.
Vector gauss_newton_vec(const NetworkSpec& spec, const Vector& theta, const Batch& batch,
                        const Vector& v);

/// Fraction of samples whose argmax output differs from the label. Ties go to
/// the lowest class index.
double classification_error(const NetworkSpec& spec, const Vector& theta,
                            const Batch& batch);

/// Curvature products at a fixed (theta, batch). The forward pass is computed
/// once at construction and reused by every product. `theta` and `batch` must
/// outlive the object.
class CurvatureProduct {
 public:
  CurvatureProduct(const NetworkSpec& spec, const Vector& theta, const Batch& batch);

  Vector hessian(const Vector& v) const;
  Vector gauss_newton(const Vector& v) const;

  /// Unnormalized per-sample sums behind hessian() and gauss_newton().
  CompensatedVector hessian_sum(const Vector& v) const;
  CompensatedVector gauss_newton_sum(const Vector& v) const;

  std::size_t dim() const { return theta_->size(); }

 private:
  // R-forward pass: directional derivatives of every pre-activation.
  std::vector<Matrix> r_forward(const Vector& v) const;

  const NetworkSpec* spec_;
  const Vector* theta_;
  const Batch* batch_;
  std::vector<Matrix> pre_;   // z_i per layer
  std::vector<Matrix> post_;  // a_i for hidden layers (post_[i] feeds layer i+1)
  Matrix probs_;              // softmax probabilities (CE only)
  Matrix out_delta_;          // per-sample dLoss/dz_l
};

}  // namespace hfo
