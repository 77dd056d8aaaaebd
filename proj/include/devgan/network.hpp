#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "devgan/layers.hpp"

namespace devgan::nn {

enum class LayerKind { dense, conv2d, maxpool, flatten, reshape, batchnorm, dropout, activation };

std::string_view to_string(LayerKind k);
LayerKind layer_kind_from_string(std::string_view s);

// One layer's hyperparameters. Only the fields of `kind` are meaningful.
struct LayerSpec {
  LayerKind kind = LayerKind::flatten;
  std::size_t units = 0;                 // dense
  std::size_t filters = 0;               // conv2d
  Stride2 kernel{};                      // conv2d kernel size
  Padding padding = Padding::same;       // conv2d
  Stride2 stride{};                      // conv2d stride
  Stride2 pool{2, 2};                    // maxpool size
  Stride2 pool_stride{2, 2};             // maxpool strides
  float momentum = 0.99f;                // batchnorm
  float epsilon = kBatchNormEpsilon;     // batchnorm
  float rate = 0.0f;                     // dropout
  Activation activation = Activation::relu;
  float alpha = 0.2f;                    // leaky_relu slope
  Shape target_shape;                    // reshape, per sample

  static LayerSpec make_dense(std::size_t units);
  static LayerSpec make_conv2d(std::size_t filters, Stride2 kernel, Padding padding, Stride2 stride = {});
  static LayerSpec make_maxpool(Stride2 size = {2, 2}, Stride2 strides = {2, 2});
  static LayerSpec make_flatten();
  static LayerSpec make_reshape(Shape per_sample);
  static LayerSpec make_batchnorm(float momentum);
  static LayerSpec make_dropout(float rate);
  static LayerSpec make_activation(Activation a, float alpha = 0.2f);

  // Throws ContractError for out-of-range hyperparameters.
  void validate() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Optimizer and loss bound to a network, like a compiled sequential model.
struct CompileConfig {
  OptimizerConfig optimizer;
  LossKind loss = LossKind::binary_ce;

  friend bool operator==(const CompileConfig&, const CompileConfig&) = default;
};

// Per-layer storage. Shapes exclude the batch axis.
struct Layer {
  LayerSpec spec;
  Shape input_shape;
  Shape output_shape;
  bool trainable = true;
  std::vector<Tensor> params;  // dense/conv2d: weight, bias; batchnorm: gamma, beta
  std::vector<Tensor> grads;   // congruent with params
  std::vector<Tensor> state;   // batchnorm: running mean, running variance
  std::vector<Tensor> slot_m;  // adam first moment
  std::vector<Tensor> slot_v;  // adam second moment / rmsprop mean square

  // Forward caches for backward.
  Tensor cache_input;
  Tensor cache_output;
  Tensor cache_mask;
  std::vector<std::size_t> cache_argmax;
  BatchNormCache cache_bn;
};

enum class GradFrom {
  output,  // gradient w.r.t. the network output
  logits,  // gradient w.r.t. the input of a final sigmoid/softmax layer (see fused_loss)
};

// Sequential network with forward, backward and optimizer update.
class Network {
 public:
  Network() = default;
  // Validates the shape chain and initializes weights (Glorot uniform,
  // limit sqrt(6/(fan_in+fan_out)); zero biases) from `init_seed`.
  Network(Shape input_shape, std::vector<LayerSpec> specs, std::uint64_t init_seed, CompileConfig compile);

  const Shape& input_shape() const { return input_shape_; }
  Shape output_shape() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  const CompileConfig& compile_config() const { return compile_; }
  std::uint64_t optimizer_step() const { return step_; }

  // x has shape (batch, input_shape...). Train mode with dropout needs rng.
  Tensor forward(const Tensor& x, Mode mode, Rng* rng = nullptr);

  // Inference-only forward that leaves caches and running stats untouched.
  Tensor predict(const Tensor& x) const;

  // Backpropagates through the last forward call, filling grads of trainable
  // layers, and returns the gradient w.r.t. the network input.
  Tensor backward(const Tensor& d_output, GradFrom from = GradFrom::output);

  // One optimizer step over every trainable layer.
  void update();

  void set_trainable(bool trainable);
  bool any_trainable() const;

  std::size_t parameter_count() const;
  // FNV-1a 64 over the bytes of all params and running stats.
  std::uint64_t parameter_digest() const;

  // Restore support for deserialization: builds the layer chain without
  // drawing initial weights, then the caller fills params/state/slots.
  static Network skeleton(Shape input_shape, std::vector<LayerSpec> specs, CompileConfig compile,
                          std::uint64_t optimizer_step);

 private:
  void build(std::vector<LayerSpec> specs, Rng* init_rng);

  Shape input_shape_;
  std::vector<Layer> layers_;
  CompileConfig compile_;
  std::uint64_t step_ = 0;
};

// Glorot-uniform limit for the given fan sizes.
float glorot_limit(std::size_t fan_in, std::size_t fan_out);

}  // namespace devgan::nn
