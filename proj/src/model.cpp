// SPDX-License-Identifier: Apache-2.0

#include "hfo/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "hfo/error.hpp"

namespace hfo {
namespace {

// Four independent partial sums, combined in a fixed order. Deterministic, and
// lets the compiler vectorize without reassociation flags.
inline double dot_kernel(const double* x, const double* y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += x[k] * y[k];
    s1 += x[k + 1] * y[k + 1];
    s2 += x[k + 2] * y[k + 2];
    s3 += x[k + 3] * y[k + 3];
  }
  for (; k < n; ++k) s0 += x[k] * y[k];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy_kernel(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += a * x[k];
}

// Z (+)= A * W^T + bias, with W an (out x A.cols) row-major block.
void affine(const Matrix& a, const double* w, const double* bias, std::size_t out,
            Matrix& z, bool accumulate) {
  if (!accumulate) z = Matrix(a.rows, out);
  const std::size_t in = a.cols;
  for (std::size_t s = 0; s < a.rows; ++s) {
    const double* as = a.row(s);
    double* zs = z.row(s);
    for (std::size_t j = 0; j < out; ++j) {
      double acc = dot_kernel(w + j * in, as, in);
      if (bias != nullptr) acc += bias[j];
      zs[j] += acc;
    }
  }
}

// D = delta * W, i.e. back-propagation through the weights.
Matrix through_weights(const Matrix& delta, const double* w, std::size_t in) {
  Matrix d(delta.rows, in);
  for (std::size_t s = 0; s < delta.rows; ++s) {
    const double* ds = delta.row(s);
    double* out = d.row(s);
    for (std::size_t j = 0; j < delta.cols; ++j) {
      if (ds[j] != 0.0) axpy_kernel(ds[j], w + j * in, out, in);
    }
  }
  return d;
}

// g[w_off..] += delta^T * A and, unless b_off is npos, g[b_off..] += column
// sums of delta. Each sample's terms are added in compensated form.
constexpr std::size_t kNoBias = static_cast<std::size_t>(-1);

void accumulate_outer(const Matrix& delta, const Matrix& a, CompensatedVector& g,
                      std::size_t w_off, std::size_t b_off) {
  const std::size_t in = a.cols;
  for (std::size_t s = 0; s < delta.rows; ++s) {
    const double* ds = delta.row(s);
    const double* as = a.row(s);
    for (std::size_t j = 0; j < delta.cols; ++j) {
      if (ds[j] == 0.0) continue;
      g.add_scaled(w_off + j * in, ds[j], as, in);
      if (b_off != kNoBias) g.add(b_off + j, ds[j]);
    }
  }
}

double activate(Activation act, double z) {
  switch (act) {
    case Activation::sigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case Activation::tanh:
      return std::tanh(z);
    case Activation::relu:
      return z > 0.0 ? z : 0.0;
  }
  return z;
}

// First derivative, expressed through the pre-activation z and output a.
double activate_d1(Activation act, double z, double a) {
  switch (act) {
    case Activation::sigmoid:
      return a * (1.0 - a);
    case Activation::tanh:
      return 1.0 - a * a;
    case Activation::relu:
      return z > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

double activate_d2(Activation act, double /*z*/, double a) {
  switch (act) {
    case Activation::sigmoid:
      return a * (1.0 - a) * (1.0 - 2.0 * a);
    case Activation::tanh:
      return -2.0 * a * (1.0 - a * a);
    case Activation::relu:
      return 0.0;
  }
  return 0.0;
}

struct ForwardPass {
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
};

const Matrix& layer_input(const Batch& batch, const std::vector<Matrix>& post,
                          std::size_t layer) {
  return layer == 0 ? batch.inputs : post[layer - 1];
}

ForwardPass run_forward(const NetworkSpec& spec, const Vector& theta, const Batch& batch) {
  const std::size_t l = spec.layer_count();
  ForwardPass fw;
  fw.pre.resize(l);
  fw.post.resize(l - 1);
  for (std::size_t i = 0; i < l; ++i) {
    const Matrix& in = layer_input(batch, fw.post, i);
    affine(in, theta.data() + spec.weight_offset(i), theta.data() + spec.bias_offset(i),
           spec.dims[i + 1], fw.pre[i], false);
    if (i + 1 < l) {
      Matrix& a = fw.post[i];
      a = Matrix(fw.pre[i].rows, fw.pre[i].cols);
      for (std::size_t k = 0; k < a.data.size(); ++k) {
        a.data[k] = activate(spec.hidden_activation, fw.pre[i].data[k]);
      }
    }
  }
  return fw;
}

double target_value(const Batch& batch, std::size_t s, std::size_t j) {
  if (batch.has_targets()) return batch.targets(s, j);
  return batch.labels[s] == j ? 1.0 : 0.0;
}

struct OutputTerms {
  CompensatedScalar loss;  // summed over samples
  Matrix delta;            // per-sample dLoss/dz_l
  Matrix probs;            // CE only
};

OutputTerms output_terms(const NetworkSpec& spec, const Matrix& z, const Batch& batch) {
  const std::size_t b = z.rows;
  const std::size_t k = z.cols;
  OutputTerms out;
  out.delta = Matrix(b, k);
  if (spec.output == OutputLoss::softmax_cross_entropy) {
    out.probs = Matrix(b, k);
    for (std::size_t s = 0; s < b; ++s) {
      const double* zs = z.row(s);
      double m = zs[0];
      for (std::size_t j = 1; j < k; ++j) m = std::max(m, zs[j]);
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) sum += std::exp(zs[j] - m);
      const double log_norm = m + std::log(sum);
      out.loss.add(log_norm - zs[batch.labels[s]]);
      double* ps = out.probs.row(s);
      double* ds = out.delta.row(s);
      for (std::size_t j = 0; j < k; ++j) {
        ps[j] = std::exp(zs[j] - log_norm);
        ds[j] = ps[j] - (batch.labels[s] == j ? 1.0 : 0.0);
      }
    }
  } else {
    for (std::size_t s = 0; s < b; ++s) {
      const double* zs = z.row(s);
      double* ds = out.delta.row(s);
      double sample = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double diff = zs[j] - target_value(batch, s, j);
        sample += diff * diff;
        ds[j] = 2.0 * diff;
      }
      out.loss.add(sample);
    }
  }
  if (!std::isfinite(out.loss.rounded())) {
    throw NumericError("loss is not finite (activation overflow)");
  }
  return out;
}

// Per-sample output-loss Hessian applied to rz (one row per sample).
Matrix output_hessian_times(const NetworkSpec& spec, const Matrix& probs, const Matrix& rz) {
  const std::size_t b = rz.rows;
  const std::size_t k = rz.cols;
  Matrix out(b, k);
  if (spec.output == OutputLoss::softmax_cross_entropy) {
    for (std::size_t s = 0; s < b; ++s) {
      const double* ps = probs.row(s);
      const double* rs = rz.row(s);
      double proj = 0.0;
      for (std::size_t j = 0; j < k; ++j) proj += ps[j] * rs[j];
      for (std::size_t j = 0; j < k; ++j) out(s, j) = ps[j] * (rs[j] - proj);
    }
  } else {
    for (std::size_t i = 0; i < rz.data.size(); ++i) out.data[i] = 2.0 * rz.data[i];
  }
  return out;
}

// Standard reverse pass from per-sample dLoss/dz_l; returns the summed
// parameter gradient.
CompensatedVector backprop(const NetworkSpec& spec, const Vector& theta, const Batch& batch,
                           const std::vector<Matrix>& pre, const std::vector<Matrix>& post,
                           Matrix delta) {
  CompensatedVector grad(spec.param_count());
  for (std::size_t i = spec.layer_count(); i-- > 0;) {
    const Matrix& in = layer_input(batch, post, i);
    accumulate_outer(delta, in, grad, spec.weight_offset(i), spec.bias_offset(i));
    if (i == 0) break;
    Matrix da = through_weights(delta, theta.data() + spec.weight_offset(i), spec.dims[i]);
    const Matrix& z = pre[i - 1];
    const Matrix& a = post[i - 1];
    for (std::size_t k = 0; k < da.data.size(); ++k) {
      da.data[k] *= activate_d1(spec.hidden_activation, z.data[k], a.data[k]);
    }
    delta = std::move(da);
  }
  return grad;
}

void check_theta(const NetworkSpec& spec, const Vector& theta) {
  if (theta.size() != spec.param_count()) {
    throw DimensionError("parameter vector has length " + std::to_string(theta.size()) +
                         ", network expects " + std::to_string(spec.param_count()));
  }
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::tanh:
      return "tanh";
    case Activation::relu:
      return "relu";
  }
  return "?";
}

std::string_view to_string(OutputLoss o) {
  switch (o) {
    case OutputLoss::softmax_cross_entropy:
      return "softmax_cross_entropy";
    case OutputLoss::mean_squared_error:
      return "mean_squared_error";
  }
  return "?";
}

Activation parse_activation(std::string_view s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

OutputLoss parse_output_loss(std::string_view s) {
  if (s == "softmax_cross_entropy" || s == "softmax") return OutputLoss::softmax_cross_entropy;
  if (s == "mean_squared_error" || s == "mse") return OutputLoss::mean_squared_error;
  throw ConfigError("unknown output loss '" + std::string(s) + "'");
}

void NetworkSpec::validate() const {
  if (dims.size() < 2) throw ConfigError("network needs at least one layer (two dims)");
  for (std::size_t d : dims) {
    if (d == 0) throw ConfigError("layer widths must be positive");
  }
}

std::size_t NetworkSpec::param_count() const {
  std::size_t count = 0;
  for (std::size_t i = 1; i < dims.size(); ++i) count += (dims[i - 1] + 1) * dims[i];
  return count;
}

std::size_t NetworkSpec::weight_offset(std::size_t layer) const {
  std::size_t offset = 0;
  for (std::size_t i = 0; i < layer; ++i) offset += (dims[i] + 1) * dims[i + 1];
  return offset;
}

std::size_t NetworkSpec::bias_offset(std::size_t layer) const {
  return weight_offset(layer) + dims[layer] * dims[layer + 1];
}

void check_batch(const NetworkSpec& spec, const Batch& batch) {
  if (batch.inputs.rows == 0) throw DimensionError("empty batch");
  if (batch.inputs.cols != spec.input_dim()) {
    throw DimensionError("batch has " + std::to_string(batch.inputs.cols) +
                         " features, network expects " + std::to_string(spec.input_dim()));
  }
  if (batch.has_targets()) {
    if (batch.targets.rows != batch.inputs.rows || batch.targets.cols != spec.output_dim()) {
      throw DimensionError("target matrix shape does not match batch/network");
    }
    if (spec.output == OutputLoss::softmax_cross_entropy) {
      throw DimensionError("softmax cross-entropy needs class labels");
    }
    return;
  }
  if (batch.labels.size() != batch.inputs.rows) {
    throw DimensionError("label count does not match input rows");
  }
  for (auto y : batch.labels) {
    if (y >= spec.output_dim()) throw DimensionError("label out of range for output layer");
  }
}

Vector init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  Vector theta(spec.param_count());
  for (std::size_t i = 0; i + 1 < spec.dims.size(); ++i) {
    const double fan_in = static_cast<double>(spec.dims[i]);
    const double fan_out = static_cast<double>(spec.dims[i + 1]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    double* w = theta.data() + spec.weight_offset(i);
    for (std::size_t k = 0; k < spec.dims[i] * spec.dims[i + 1]; ++k) w[k] = dist(rng);
    // biases stay zero
  }
  return theta;
}

Matrix forward_outputs(const NetworkSpec& spec, const Vector& theta, const Batch& batch) {
  check_theta(spec, theta);
  if (batch.inputs.cols != spec.input_dim()) {
    throw DimensionError("batch feature count does not match network input");
  }
  auto fw = run_forward(spec, theta, batch);
  return std::move(fw.pre.back());
}

CompensatedScalar loss_sum(const NetworkSpec& spec, const Vector& theta, const Batch& batch) {
  check_theta(spec, theta);
  check_batch(spec, batch);
  auto fw = run_forward(spec, theta, batch);
  return output_terms(spec, fw.pre.back(), batch).loss;
}

LossAndGradientSum loss_and_gradient_sum(const NetworkSpec& spec, const Vector& theta,
                                         const Batch& batch) {
  check_theta(spec, theta);
  check_batch(spec, batch);
  auto fw = run_forward(spec, theta, batch);
  auto terms = output_terms(spec, fw.pre.back(), batch);
  LossAndGradientSum out;
  out.loss = terms.loss;
  out.gradient = backprop(spec, theta, batch, fw.pre, fw.post, std::move(terms.delta));
  return out;
}

double loss(const NetworkSpec& spec, const Vector& theta, const Batch& batch) {
  return loss_sum(spec, theta, batch).mean(batch.size());
}

LossAndGradient loss_and_gradient(const NetworkSpec& spec, const Vector& theta,
                                  const Batch& batch) {
  const auto sums = loss_and_gradient_sum(spec, theta, batch);
  return {sums.loss.mean(batch.size()), sums.gradient.mean(batch.size())};
}

Vector gradient(const NetworkSpec& spec, const Vector& theta, const Batch& batch) {
  return loss_and_gradient(spec, theta, batch).gradient;
}

Vector hessian_vec(const NetworkSpec& spec, const Vector& theta, const Batch& batch,
                   const Vector& v) {
  return CurvatureProduct(spec, theta, batch).hessian(v);
}

Vector gauss_newton_vec(const NetworkSpec& spec, const Vector& theta, const Batch& batch,
                        const Vector& v) {
  return CurvatureProduct(spec, theta, batch).gauss_newton(v);
}

double classification_error(const NetworkSpec& spec, const Vector& theta,
                            const Batch& batch) {
  if (batch.labels.size() != batch.size()) {
    throw DimensionError("classification error needs one label per sample");
  }
  const Matrix out = forward_outputs(spec, theta, batch);
  std::size_t wrong = 0;
  for (std::size_t s = 0; s < out.rows; ++s) {
    const double* os = out.row(s);
    std::size_t best = 0;
    for (std::size_t j = 1; j < out.cols; ++j) {
      if (os[j] > os[best]) best = j;
    }
    if (best != batch.labels[s]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(out.rows);
}

CurvatureProduct::CurvatureProduct(const NetworkSpec& spec, const Vector& theta,
                                   const Batch& batch)
    : spec_(&spec), theta_(&theta), batch_(&batch) {
  check_theta(spec, theta);
  check_batch(spec, batch);
  auto fw = run_forward(spec, theta, batch);
  auto terms = output_terms(spec, fw.pre.back(), batch);
  pre_ = std::move(fw.pre);
  post_ = std::move(fw.post);
  probs_ = std::move(terms.probs);
  out_delta_ = std::move(terms.delta);
}

std::vector<Matrix> CurvatureProduct::r_forward(const Vector& v) const {
  check_theta(*spec_, v);
  const NetworkSpec& spec = *spec_;
  const std::size_t l = spec.layer_count();
  std::vector<Matrix> rz(l);
  Matrix ra;  // R(a_i) feeding layer i; zero for the input layer
  for (std::size_t i = 0; i < l; ++i) {
    const Matrix& in = layer_input(*batch_, post_, i);
    affine(in, v.data() + spec.weight_offset(i), v.data() + spec.bias_offset(i),
           spec.dims[i + 1], rz[i], false);
    if (i > 0) {
      affine(ra, theta_->data() + spec.weight_offset(i), nullptr, spec.dims[i + 1], rz[i],
             true);
    }
    if (i + 1 < l) {
      ra = Matrix(rz[i].rows, rz[i].cols);
      for (std::size_t k = 0; k < ra.data.size(); ++k) {
        ra.data[k] = activate_d1(spec.hidden_activation, pre_[i].data[k], post_[i].data[k]) *
                     rz[i].data[k];
      }
    }
  }
  return rz;
}

Vector CurvatureProduct::hessian(const Vector& v) const {
  return hessian_sum(v).mean(batch_->size());
}

Vector CurvatureProduct::gauss_newton(const Vector& v) const {
  return gauss_newton_sum(v).mean(batch_->size());
}

CompensatedVector CurvatureProduct::hessian_sum(const Vector& v) const {
  const NetworkSpec& spec = *spec_;
  const Vector& theta = *theta_;
  const std::size_t l = spec.layer_count();
  const std::vector<Matrix> rz = r_forward(v);

  Matrix delta = out_delta_;
  Matrix rdelta = output_hessian_times(spec, probs_, rz.back());
  CompensatedVector hv(spec.param_count());

  for (std::size_t i = l; i-- > 0;) {
    const Matrix& in = layer_input(*batch_, post_, i);
    const std::size_t hw = spec.weight_offset(i);
    accumulate_outer(rdelta, in, hv, hw, spec.bias_offset(i));
    if (i == 0) break;

    // R(a_{i-1}) = f'(z_{i-1}) * R(z_{i-1})
    const Matrix& z = pre_[i - 1];
    const Matrix& a = post_[i - 1];
    Matrix ra(z.rows, z.cols);
    for (std::size_t k = 0; k < ra.data.size(); ++k) {
      ra.data[k] = activate_d1(spec.hidden_activation, z.data[k], a.data[k]) * rz[i - 1].data[k];
    }
    accumulate_outer(delta, ra, hv, hw, kNoBias);

    const std::size_t in_dim = spec.dims[i];
    Matrix da = through_weights(delta, theta.data() + spec.weight_offset(i), in_dim);
    Matrix rda = through_weights(rdelta, theta.data() + spec.weight_offset(i), in_dim);
    Matrix dv = through_weights(delta, v.data() + spec.weight_offset(i), in_dim);
    for (std::size_t k = 0; k < rda.data.size(); ++k) rda.data[k] += dv.data[k];

    Matrix next_delta(z.rows, z.cols);
    Matrix next_rdelta(z.rows, z.cols);
    for (std::size_t k = 0; k < z.data.size(); ++k) {
      const double d1 = activate_d1(spec.hidden_activation, z.data[k], a.data[k]);
      const double d2 = activate_d2(spec.hidden_activation, z.data[k], a.data[k]);
      next_delta.data[k] = d1 * da.data[k];
      next_rdelta.data[k] = d1 * rda.data[k] + d2 * rz[i - 1].data[k] * da.data[k];
    }
    delta = std::move(next_delta);
    rdelta = std::move(next_rdelta);
  }
  return hv;
}

CompensatedVector CurvatureProduct::gauss_newton_sum(const Vector& v) const {
  const std::vector<Matrix> rz = r_forward(v);
  Matrix seed = output_hessian_times(*spec_, probs_, rz.back());
  return backprop(*spec_, *theta_, *batch_, pre_, post_, std::move(seed));
}

}  // namespace hfo
