#include "devgan/network.hpp"

#include <cmath>
#include <cstring>

#include "devgan/errors.hpp"

namespace devgan::nn {

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::reshape: return "reshape";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::dropout: return "dropout";
    case LayerKind::activation: return "activation";
  }
  return "?";
}

LayerKind layer_kind_from_string(std::string_view s) {
  for (auto k : {LayerKind::dense, LayerKind::conv2d, LayerKind::maxpool, LayerKind::flatten, LayerKind::reshape,
                 LayerKind::batchnorm, LayerKind::dropout, LayerKind::activation})
    if (to_string(k) == s) return k;
  throw FormatError("unknown layer kind '" + std::string(s) + "'");
}

LayerSpec LayerSpec::make_dense(std::size_t units) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.units = units;
  s.validate();
  return s;
}

LayerSpec LayerSpec::make_conv2d(std::size_t filters, Stride2 kernel, Padding padding, Stride2 stride) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.filters = filters;
  s.kernel = kernel;
  s.padding = padding;
  s.stride = stride;
  s.validate();
  return s;
}

LayerSpec LayerSpec::make_maxpool(Stride2 size, Stride2 strides) {
  LayerSpec s;
  s.kind = LayerKind::maxpool;
  s.pool = size;
  s.pool_stride = strides;
  s.validate();
  return s;
}

LayerSpec LayerSpec::make_flatten() { return LayerSpec{}; }

LayerSpec LayerSpec::make_reshape(Shape per_sample) {
  LayerSpec s;
  s.kind = LayerKind::reshape;
  s.target_shape = std::move(per_sample);
  s.validate();
  return s;
}

LayerSpec LayerSpec::make_batchnorm(float momentum) {
  LayerSpec s;
  s.kind = LayerKind::batchnorm;
  s.momentum = momentum;
  s.validate();
  return s;
}

LayerSpec LayerSpec::make_dropout(float rate) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.rate = rate;
  s.validate();
  return s;
}

LayerSpec LayerSpec::make_activation(Activation a, float alpha) {
  LayerSpec s;
  s.kind = LayerKind::activation;
  s.activation = a;
  s.alpha = alpha;
  s.validate();
  return s;
}

void LayerSpec::validate() const {
  switch (kind) {
    case LayerKind::dense:
      if (units == 0) throw ContractError("dense units must be >= 1");
      break;
    case LayerKind::conv2d:
      if (filters == 0 || kernel.h == 0 || kernel.w == 0 || stride.h == 0 || stride.w == 0)
        throw ContractError("conv2d filters, kernel and stride must be >= 1");
      break;
    case LayerKind::maxpool:
      if (pool.h == 0 || pool.w == 0 || pool_stride.h == 0 || pool_stride.w == 0)
        throw ContractError("maxpool size and strides must be >= 1");
      break;
    case LayerKind::reshape:
      if (target_shape.empty() || shape_size(target_shape) == 0)
        throw ContractError("reshape target must be a non-empty positive shape");
      break;
    case LayerKind::batchnorm:
      if (!(momentum > 0.0f && momentum < 1.0f)) throw ContractError("batchnorm momentum must be in (0,1)");
      if (!(epsilon > 0.0f)) throw ContractError("batchnorm epsilon must be > 0");
      break;
    case LayerKind::dropout:
      if (!(rate >= 0.0f && rate < 1.0f)) throw ContractError("dropout rate must be in [0,1)");
      break;
    case LayerKind::activation:
      if (activation == Activation::leaky_relu && !(alpha > 0.0f))
        throw ContractError("leaky_relu alpha must be > 0");
      break;
    case LayerKind::flatten:
      break;
  }
}

float glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

namespace {

std::string layer_label(std::size_t index, const LayerSpec& spec) {
  return "layer " + std::to_string(index) + " (" + std::string(to_string(spec.kind)) + ")";
}

Shape with_batch(std::size_t batch, const Shape& per_sample) {
  Shape s{batch};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

}  // namespace

Network::Network(Shape input_shape, std::vector<LayerSpec> specs, std::uint64_t init_seed, CompileConfig compile)
    : input_shape_(std::move(input_shape)), compile_(compile) {
  compile_.optimizer.validate();
  Rng rng(init_seed);
  build(std::move(specs), &rng);
}

Network Network::skeleton(Shape input_shape, std::vector<LayerSpec> specs, CompileConfig compile,
                          std::uint64_t optimizer_step) {
  Network net;
  net.input_shape_ = std::move(input_shape);
  net.compile_ = compile;
  net.step_ = optimizer_step;
  net.build(std::move(specs), nullptr);
  return net;
}

void Network::build(std::vector<LayerSpec> specs, Rng* init_rng) {
  if (input_shape_.empty() || shape_size(input_shape_) == 0)
    throw ShapeError("network input shape must be non-empty, got " + shape_to_string(input_shape_));
  Shape current = input_shape_;
  layers_.clear();
  layers_.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Layer layer;
    layer.spec = specs[i];
    layer.spec.validate();
    layer.input_shape = current;
    const auto& s = layer.spec;
    switch (s.kind) {
      case LayerKind::dense: {
        if (current.size() != 1)
          throw ShapeError(layer_label(i, s) + " needs a flat input, got " + shape_to_string(current));
        const std::size_t in = current[0];
        layer.params = {Tensor({in, s.units}), Tensor({s.units})};
        if (init_rng) layer.params[0] = sample_uniform(*init_rng, {in, s.units}, -glorot_limit(in, s.units),
                                                       glorot_limit(in, s.units));
        layer.output_shape = {s.units};
        break;
      }
      case LayerKind::conv2d: {
        if (current.size() != 3)
          throw ShapeError(layer_label(i, s) + " needs an HxWxC input, got " + shape_to_string(current));
        const auto g = conv_geometry(current[0], current[1], s.kernel.h, s.kernel.w, s.padding, s.stride);
        const std::size_t cin = current[2];
        const Shape kshape{s.kernel.h, s.kernel.w, cin, s.filters};
        layer.params = {Tensor(kshape), Tensor({s.filters})};
        if (init_rng) {
          const std::size_t area = s.kernel.h * s.kernel.w;
          const float lim = glorot_limit(area * cin, area * s.filters);
          layer.params[0] = sample_uniform(*init_rng, kshape, -lim, lim);
        }
        layer.output_shape = {g.out_h, g.out_w, s.filters};
        break;
      }
      case LayerKind::maxpool: {
        if (current.size() != 3)
          throw ShapeError(layer_label(i, s) + " needs an HxWxC input, got " + shape_to_string(current));
        if (s.pool.h > current[0] || s.pool.w > current[1])
          throw ShapeError(layer_label(i, s) + " window exceeds input " + shape_to_string(current));
        layer.output_shape = {(current[0] - s.pool.h) / s.pool_stride.h + 1,
                              (current[1] - s.pool.w) / s.pool_stride.w + 1, current[2]};
        break;
      }
      case LayerKind::flatten:
        layer.output_shape = {shape_size(current)};
        break;
      case LayerKind::reshape:
        if (shape_size(s.target_shape) != shape_size(current))
          throw ShapeError(layer_label(i, s) + " cannot reshape " + shape_to_string(current) + " to " +
                           shape_to_string(s.target_shape));
        layer.output_shape = s.target_shape;
        break;
      case LayerKind::batchnorm: {
        const std::size_t features = current.back();
        layer.params = {Tensor({features}, 1.0f), Tensor({features})};
        layer.state = {Tensor({features}), Tensor({features}, 1.0f)};
        layer.output_shape = current;
        break;
      }
      case LayerKind::dropout:
      case LayerKind::activation:
        layer.output_shape = current;
        break;
    }
    for (const auto& p : layer.params) {
      layer.grads.emplace_back(p.shape());
      layer.slot_m.emplace_back(p.shape());
      layer.slot_v.emplace_back(p.shape());
    }
    current = layer.output_shape;
    layers_.push_back(std::move(layer));
  }
}

Shape Network::output_shape() const { return layers_.empty() ? input_shape_ : layers_.back().output_shape; }

namespace {

void check_input(const Tensor& x, const Shape& per_sample, const char* who) {
  if (x.rank() != per_sample.size() + 1 || !std::equal(per_sample.begin(), per_sample.end(), x.shape().begin() + 1))
    throw ShapeError(std::string(who) + ": input " + shape_to_string(x.shape()) + " does not match (batch, " +
                     shape_to_string(per_sample).substr(1));
}

}  // namespace

Tensor Network::forward(const Tensor& x, Mode mode, Rng* rng) {
  check_input(x, input_shape_, "Network::forward");
  Tensor h = x;
  const std::size_t batch = x.dim(0);
  for (auto& layer : layers_) {
    const auto& s = layer.spec;
    layer.cache_input = h;
    switch (s.kind) {
      case LayerKind::dense:
        h = dense_forward(h, layer.params[0], layer.params[1]);
        break;
      case LayerKind::conv2d: {
        h = conv2d(h, layer.params[0], s.padding, s.stride);
        const std::size_t f = s.filters;
        for (std::size_t i = 0; i < h.size(); ++i) h[i] += layer.params[1][i % f];
        break;
      }
      case LayerKind::maxpool: {
        auto pooled = maxpool2d(h, s.pool, s.pool_stride);
        h = std::move(pooled.output);
        layer.cache_argmax = std::move(pooled.argmax);
        break;
      }
      case LayerKind::flatten:
      case LayerKind::reshape:
        h = std::move(h).reshaped(with_batch(batch, layer.output_shape));
        break;
      case LayerKind::batchnorm: {
        BatchNormState st{std::move(layer.state[0]), std::move(layer.state[1])};
        h = batchnorm_forward(h, layer.params[0], layer.params[1], st, s.momentum, s.epsilon, mode, &layer.cache_bn);
        layer.state[0] = std::move(st.running_mean);
        layer.state[1] = std::move(st.running_var);
        break;
      }
      case LayerKind::dropout:
        h = dropout_forward(h, s.rate, mode, rng, &layer.cache_mask);
        break;
      case LayerKind::activation:
        h = apply_activation(s.activation, h, s.alpha);
        layer.cache_output = h;
        break;
    }
  }
  return h;
}

Tensor Network::predict(const Tensor& x) const {
  check_input(x, input_shape_, "Network::predict");
  Tensor h = x;
  const std::size_t batch = x.dim(0);
  for (const auto& layer : layers_) {
    const auto& s = layer.spec;
    switch (s.kind) {
      case LayerKind::dense:
        h = dense_forward(h, layer.params[0], layer.params[1]);
        break;
      case LayerKind::conv2d: {
        h = conv2d(h, layer.params[0], s.padding, s.stride);
        for (std::size_t i = 0; i < h.size(); ++i) h[i] += layer.params[1][i % s.filters];
        break;
      }
      case LayerKind::maxpool:
        h = maxpool2d(h, s.pool, s.pool_stride).output;
        break;
      case LayerKind::flatten:
      case LayerKind::reshape:
        h = std::move(h).reshaped(with_batch(batch, layer.output_shape));
        break;
      case LayerKind::batchnorm: {
        BatchNormState st{layer.state[0], layer.state[1]};
        h = batchnorm_forward(h, layer.params[0], layer.params[1], st, s.momentum, s.epsilon, Mode::infer);
        break;
      }
      case LayerKind::dropout:
        break;
      case LayerKind::activation:
        h = apply_activation(s.activation, h, s.alpha);
        break;
    }
  }
  return h;
}

Tensor Network::backward(const Tensor& d_output, GradFrom from) {
  std::size_t end = layers_.size();
  if (from == GradFrom::logits) {
    if (layers_.empty() || layers_.back().spec.kind != LayerKind::activation ||
        (layers_.back().spec.activation != Activation::softmax && layers_.back().spec.activation != Activation::sigmoid))
      throw ContractError("backward from logits needs a final sigmoid or softmax layer");
    --end;
  }
  Tensor g = d_output;
  for (std::size_t li = end; li-- > 0;) {
    auto& layer = layers_[li];
    const auto& s = layer.spec;
    switch (s.kind) {
      case LayerKind::dense: {
        if (layer.trainable) {
          auto grads = dense_backward(layer.cache_input, layer.params[0], g);
          layer.grads[0] = std::move(grads.d_weight);
          layer.grads[1] = std::move(grads.d_bias);
          g = std::move(grads.d_input);
        } else {
          g = matmul_nt(g, layer.params[0]);
        }
        break;
      }
      case LayerKind::conv2d: {
        auto grads = conv2d_backward(layer.cache_input, layer.params[0], g, s.padding, s.stride);
        if (layer.trainable) {
          Tensor db({s.filters});
          for (std::size_t i = 0; i < g.size(); ++i) db[i % s.filters] += g[i];
          layer.grads[0] = std::move(grads.d_kernels);
          layer.grads[1] = std::move(db);
        }
        g = std::move(grads.d_input);
        break;
      }
      case LayerKind::maxpool:
        g = maxpool2d_backward(layer.cache_input.shape(), layer.cache_argmax, g);
        break;
      case LayerKind::flatten:
      case LayerKind::reshape:
        g = std::move(g).reshaped(layer.cache_input.shape());
        break;
      case LayerKind::batchnorm: {
        auto grads = batchnorm_backward(g, layer.params[0], layer.cache_bn);
        if (layer.trainable) {
          layer.grads[0] = std::move(grads.d_gamma);
          layer.grads[1] = std::move(grads.d_beta);
        }
        g = std::move(grads.d_input);
        break;
      }
      case LayerKind::dropout:
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= layer.cache_mask[i];
        break;
      case LayerKind::activation:
        g = activation_backward(s.activation, layer.cache_input, layer.cache_output, g, s.alpha);
        break;
    }
  }
  return g;
}

void Network::update() {
  if (!any_trainable()) return;
  ++step_;
  const auto& opt = compile_.optimizer;
  for (auto& layer : layers_) {
    if (!layer.trainable) continue;
    for (std::size_t p = 0; p < layer.params.size(); ++p) {
      if (opt.kind == OptimizerKind::adam)
        adam_step(opt, layer.params[p], layer.grads[p], layer.slot_m[p], layer.slot_v[p], step_);
      else
        rmsprop_step(opt, layer.params[p], layer.grads[p], layer.slot_v[p]);
    }
  }
}

void Network::set_trainable(bool trainable) {
  for (auto& layer : layers_) layer.trainable = trainable;
}

bool Network::any_trainable() const {
  for (const auto& layer : layers_)
    if (layer.trainable && !layer.params.empty()) return true;
  return false;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_)
    for (const auto& p : layer.params) n += p.size();
  return n;
}

std::uint64_t Network::parameter_digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const Tensor& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.raw());
    for (std::size_t i = 0; i < t.size() * sizeof(float); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& layer : layers_) {
    for (const auto& p : layer.params) mix(p);
    for (const auto& s : layer.state) mix(s);
  }
  return h;
}

}  // namespace devgan::nn
