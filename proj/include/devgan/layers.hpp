#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "devgan/kernels.hpp"
#include "devgan/rng.hpp"
#include "devgan/tensor.hpp"

namespace devgan::nn {

enum class Mode { train, infer };

enum class Activation { relu, leaky_relu, tanh, sigmoid, softmax };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

// Element-wise (softmax: row-wise over the last axis) activation.
Tensor apply_activation(Activation kind, const Tensor& x, float alpha = 0.2f);

// Gradient w.r.t. the activation input, given the forward input x, forward
// output y and upstream gradient dy.
Tensor activation_backward(Activation kind, const Tensor& x, const Tensor& y, const Tensor& dy, float alpha = 0.2f);

// ---- dense --------------------------------------------------------------

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct DenseGrads {
  Tensor d_input;
  Tensor d_weight;
  Tensor d_bias;
};

DenseGrads dense_backward(const Tensor& x, const Tensor& weight, const Tensor& d_output);

// ---- batch normalization -------------------------------------------------

// Normalizes over every axis but the last.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
};

struct BatchNormCache {
  Shape shape;
  std::vector<double> x_hat;
  std::vector<double> inv_std;
};

inline constexpr float kBatchNormEpsilon = 1e-5f;

// Train mode updates running stats as running = momentum*running + (1-momentum)*batch.
Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                         float momentum, float epsilon, Mode mode, BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Tensor d_input;
  Tensor d_gamma;
  Tensor d_beta;
};

// Backward of the train-mode forward recorded in `cache`.
BatchNormGrads batchnorm_backward(const Tensor& d_output, const Tensor& gamma, const BatchNormCache& cache);

// ---- dropout --------------------------------------------------------------

// Inverted dropout. Returns the output; `mask` (if given) receives the
// per-element multiplier (0 or 1/(1-rate)).
Tensor dropout_forward(const Tensor& x, float rate, Mode mode, Rng* rng, Tensor* mask = nullptr);

// ---- losses ---------------------------------------------------------------

enum class LossKind { binary_ce, categorical_ce, sparse_categorical_ce };

std::string_view to_string(LossKind k);
LossKind loss_from_string(std::string_view s);

inline constexpr double kProbabilityClamp = 1e-7;

struct LossResult {
  double value = 0.0;
  Tensor grad;  // d value / d pred
};

// Mean cross-entropy over the batch. `target` holds 0/1 labels (binary_ce),
// one-hot rows (categorical_ce) or class indices as floats, shape (n) or
// (n,1) (sparse_categorical_ce).
LossResult loss(LossKind kind, const Tensor& pred, const Tensor& target);

// Loss value plus the gradient w.r.t. the pre-activation of the output layer
// (softmax for the categorical kinds, sigmoid for binary_ce): (p - y) / n.
LossResult fused_loss(LossKind kind, const Tensor& pred, const Tensor& target);

// ---- optimizers -----------------------------------------------------------

enum class OptimizerKind { adam, rmsprop };

std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  float learning_rate = 0.001f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float rho = 0.9f;
  float epsilon = 1e-7f;

  static OptimizerConfig adam(float lr = 0.001f, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-7f);
  static OptimizerConfig rmsprop(float lr = 0.001f, float rho = 0.9f, float eps = 1e-7f);

  // Throws ContractError when a field is outside its legal range.
  void validate() const;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

// Adam with bias correction; t is the 1-based step index.
void adam_step(const OptimizerConfig& cfg, Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
               std::uint64_t t);

// v = rho*v + (1-rho)*g^2; param -= lr*g/(sqrt(v)+eps)
void rmsprop_step(const OptimizerConfig& cfg, Tensor& param, const Tensor& grad, Tensor& v);

}  // namespace devgan::nn
