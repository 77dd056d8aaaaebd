#include "devgan/layers.hpp"

#include <algorithm>
#include <cmath>

#include "devgan/errors.hpp"

namespace devgan::nn {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

Activation activation_from_string(std::string_view s) {
  for (auto a : {Activation::relu, Activation::leaky_relu, Activation::tanh, Activation::sigmoid, Activation::softmax})
    if (to_string(a) == s) return a;
  throw FormatError("unknown activation '" + std::string(s) + "'");
}

namespace {

float sigmoid(float x) {
  // Split by sign so exp never overflows.
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

}  // namespace

Tensor apply_activation(Activation kind, const Tensor& x, float alpha) {
  Tensor y(x.shape());
  const std::size_t n = x.size();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < n; ++i) y[i] = x[i] >= 0.0f ? x[i] : alpha * x[i];
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) y[i] = sigmoid(x[i]);
      break;
    case Activation::softmax: {
      const std::size_t width = last_dim(x);
      for (std::size_t r = 0; r < n / width; ++r) {
        const float* in = x.raw() + r * width;
        float* out = y.raw() + r * width;
        const float peak = *std::max_element(in, in + width);
        double total = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          out[j] = std::exp(in[j] - peak);
          total += out[j];
        }
        for (std::size_t j = 0; j < width; ++j) out[j] = static_cast<float>(out[j] / total);
      }
      break;
    }
  }
  return y;
}

Tensor activation_backward(Activation kind, const Tensor& x, const Tensor& y, const Tensor& dy, float alpha) {
  if (dy.shape() != x.shape())
    throw ShapeError("activation_backward: gradient " + shape_to_string(dy.shape()) + " vs input " +
                     shape_to_string(x.shape()));
  Tensor dx(x.shape());
  const std::size_t n = x.size();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
      break;
    case Activation::leaky_relu:
      for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] >= 0.0f ? dy[i] : alpha * dy[i];
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * (1.0f - y[i] * y[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * y[i] * (1.0f - y[i]);
      break;
    case Activation::softmax: {
      const std::size_t width = last_dim(x);
      for (std::size_t r = 0; r < n / width; ++r) {
        const float* yr = y.raw() + r * width;
        const float* gr = dy.raw() + r * width;
        double dot = 0.0;
        for (std::size_t j = 0; j < width; ++j) dot += static_cast<double>(gr[j]) * yr[j];
        for (std::size_t j = 0; j < width; ++j)
          dx[r * width + j] = static_cast<float>(yr[j] * (gr[j] - dot));
      }
      break;
    }
  }
  return dx;
}

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0))
    throw ShapeError("dense: input " + shape_to_string(x.shape()) + " does not match weight " +
                     shape_to_string(weight.shape()));
  if (bias.size() != weight.dim(1))
    throw ShapeError("dense: bias " + shape_to_string(bias.shape()) + " does not match weight " +
                     shape_to_string(weight.shape()));
  Tensor y = matmul(x, weight);
  const std::size_t units = weight.dim(1);
  for (std::size_t r = 0; r < x.dim(0); ++r)
    for (std::size_t j = 0; j < units; ++j) y[r * units + j] += bias[j];
  return y;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weight, const Tensor& d_output) {
  if (d_output.rank() != 2 || d_output.dim(0) != x.dim(0) || d_output.dim(1) != weight.dim(1))
    throw ShapeError("dense_backward: gradient " + shape_to_string(d_output.shape()) + " inconsistent with input " +
                     shape_to_string(x.shape()) + " and weight " + shape_to_string(weight.shape()));
  DenseGrads g;
  g.d_weight = matmul_tn(x, d_output);
  g.d_input = matmul_nt(d_output, weight);
  const std::size_t units = weight.dim(1);
  g.d_bias = Tensor({units});
  for (std::size_t r = 0; r < d_output.dim(0); ++r)
    for (std::size_t j = 0; j < units; ++j) g.d_bias[j] += d_output[r * units + j];
  return g;
}

Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                         float momentum, float epsilon, Mode mode, BatchNormCache* cache) {
  const std::size_t features = last_dim(x);
  if (gamma.size() != features || beta.size() != features || state.running_mean.size() != features ||
      state.running_var.size() != features)
    throw ShapeError("batchnorm: parameters do not match " + std::to_string(features) + " features of " +
                     shape_to_string(x.shape()));
  const std::size_t rows = x.size() / features;
  Tensor y(x.shape());

  if (mode == Mode::infer) {
    for (std::size_t j = 0; j < features; ++j) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(state.running_var[j]) + epsilon);
      const double mean = state.running_mean[j];
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t i = r * features + j;
        y[i] = static_cast<float>(gamma[j] * ((x[i] - mean) * inv) + beta[j]);
      }
    }
    return y;
  }

  if (x.dim(0) < 2)
    throw ContractError("batchnorm: train mode needs a batch of at least 2, got " + shape_to_string(x.shape()));

  std::vector<double> mean(features, 0.0), var(features, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < features; ++j) mean[j] += x[r * features + j];
  for (auto& m : mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < features; ++j) {
      const double d = x[r * features + j] - mean[j];
      var[j] += d * d;
    }
  for (auto& v : var) v /= static_cast<double>(rows);

  BatchNormCache local;
  BatchNormCache& c = cache ? *cache : local;
  c.shape = x.shape();
  c.x_hat.assign(x.size(), 0.0);
  c.inv_std.assign(features, 0.0);
  for (std::size_t j = 0; j < features; ++j) c.inv_std[j] = 1.0 / std::sqrt(var[j] + epsilon);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < features; ++j) {
      const std::size_t i = r * features + j;
      const double xh = (x[i] - mean[j]) * c.inv_std[j];
      c.x_hat[i] = xh;
      y[i] = static_cast<float>(gamma[j] * xh + beta[j]);
    }
  for (std::size_t j = 0; j < features; ++j) {
    state.running_mean[j] = static_cast<float>(momentum * state.running_mean[j] + (1.0 - momentum) * mean[j]);
    state.running_var[j] = static_cast<float>(momentum * state.running_var[j] + (1.0 - momentum) * var[j]);
  }
  return y;
}

BatchNormGrads batchnorm_backward(const Tensor& d_output, const Tensor& gamma, const BatchNormCache& cache) {
  if (d_output.shape() != cache.shape)
    throw ShapeError("batchnorm_backward: gradient " + shape_to_string(d_output.shape()) + " vs cached " +
                     shape_to_string(cache.shape));
  const std::size_t features = last_dim(d_output);
  const std::size_t rows = d_output.size() / features;
  BatchNormGrads g{Tensor(d_output.shape()), Tensor({features}), Tensor({features})};
  std::vector<double> sum_dy(features, 0.0), sum_dy_xhat(features, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < features; ++j) {
      const std::size_t i = r * features + j;
      sum_dy[j] += d_output[i];
      sum_dy_xhat[j] += static_cast<double>(d_output[i]) * cache.x_hat[i];
    }
  const double n = static_cast<double>(rows);
  for (std::size_t j = 0; j < features; ++j) {
    g.d_beta[j] = static_cast<float>(sum_dy[j]);
    g.d_gamma[j] = static_cast<float>(sum_dy_xhat[j]);
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < features; ++j) {
      const std::size_t i = r * features + j;
      const double dxhat_scale = gamma[j] * cache.inv_std[j] / n;
      g.d_input[i] =
          static_cast<float>(dxhat_scale * (n * d_output[i] - sum_dy[j] - cache.x_hat[i] * sum_dy_xhat[j]));
    }
  return g;
}

Tensor dropout_forward(const Tensor& x, float rate, Mode mode, Rng* rng, Tensor* mask) {
  if (!(rate >= 0.0f && rate < 1.0f)) throw ContractError("dropout rate must be in [0,1)");
  if (mode == Mode::infer || rate == 0.0f) {
    if (mask) *mask = Tensor(x.shape(), 1.0f);
    return x;
  }
  if (!rng) throw ContractError("dropout in train mode needs a random source");
  const float keep_scale = 1.0f / (1.0f - rate);
  Tensor m(x.shape());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = rng->uniform() < rate ? 0.0f : keep_scale;
    y[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::binary_ce: return "binary_crossentropy";
    case LossKind::categorical_ce: return "categorical_crossentropy";
    case LossKind::sparse_categorical_ce: return "sparse_categorical_crossentropy";
  }
  return "?";
}

LossKind loss_from_string(std::string_view s) {
  for (auto k : {LossKind::binary_ce, LossKind::categorical_ce, LossKind::sparse_categorical_ce})
    if (to_string(k) == s) return k;
  throw FormatError("unknown loss '" + std::string(s) + "'");
}

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

// Sparse targets expanded to one-hot rows so both categorical kinds share code.
Tensor dense_target(LossKind kind, const Tensor& pred, const Tensor& target) {
  if (kind != LossKind::sparse_categorical_ce) {
    if (target.shape() != pred.shape())
      throw ShapeError(std::string(to_string(kind)) + ": target " + shape_to_string(target.shape()) +
                       " does not match prediction " + shape_to_string(pred.shape()));
    return target;
  }
  if (pred.rank() != 2) throw ShapeError("sparse_categorical_crossentropy expects (n, classes) predictions");
  const std::size_t n = pred.dim(0), classes = pred.dim(1);
  if (target.size() != n)
    throw ShapeError("sparse_categorical_crossentropy: " + std::to_string(target.size()) + " labels for " +
                     std::to_string(n) + " rows");
  Tensor onehot({n, classes});
  for (std::size_t r = 0; r < n; ++r) {
    const float label = target[r];
    if (!(label >= 0.0f) || label >= static_cast<float>(classes) || label != std::floor(label))
      throw ContractError("sparse_categorical_crossentropy: label " + std::to_string(label) + " outside [0, " +
                          std::to_string(classes) + ")");
    onehot[r * classes + static_cast<std::size_t>(label)] = 1.0f;
  }
  return onehot;
}

double loss_value(LossKind kind, const Tensor& pred, const Tensor& y) {
  double total = 0.0;
  if (kind == LossKind::binary_ce) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double p = clamp_prob(pred[i]);
      total -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
    }
    return total / static_cast<double>(pred.size());
  }
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (y[i] != 0.0f) total -= y[i] * std::log(clamp_prob(pred[i]));
  return total / static_cast<double>(pred.dim(0));
}

double loss_divisor(LossKind kind, const Tensor& pred) {
  return static_cast<double>(kind == LossKind::binary_ce ? pred.size() : pred.dim(0));
}

}  // namespace

LossResult loss(LossKind kind, const Tensor& pred, const Tensor& target) {
  const Tensor y = dense_target(kind, pred, target);
  LossResult r{loss_value(kind, pred, y), Tensor(pred.shape())};
  const double n = loss_divisor(kind, pred);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = clamp_prob(pred[i]);
    const double g = kind == LossKind::binary_ce ? (-y[i] / p + (1.0 - y[i]) / (1.0 - p)) : -y[i] / p;
    r.grad[i] = static_cast<float>(g / n);
  }
  return r;
}

LossResult fused_loss(LossKind kind, const Tensor& pred, const Tensor& target) {
  const Tensor y = dense_target(kind, pred, target);
  LossResult r{loss_value(kind, pred, y), Tensor(pred.shape())};
  const double n = loss_divisor(kind, pred);
  for (std::size_t i = 0; i < pred.size(); ++i)
    r.grad[i] = static_cast<float>((static_cast<double>(pred[i]) - y[i]) / n);
  return r;
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "rmsprop"; }

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "rmsprop") return OptimizerKind::rmsprop;
  throw FormatError("unknown optimizer '" + std::string(s) + "'");
}

OptimizerConfig OptimizerConfig::adam(float lr, float beta1, float beta2, float eps) {
  OptimizerConfig c;
  c.kind = OptimizerKind::adam;
  c.learning_rate = lr;
  c.beta1 = beta1;
  c.beta2 = beta2;
  c.epsilon = eps;
  return c;
}

OptimizerConfig OptimizerConfig::rmsprop(float lr, float rho, float eps) {
  OptimizerConfig c;
  c.kind = OptimizerKind::rmsprop;
  c.learning_rate = lr;
  c.rho = rho;
  c.epsilon = eps;
  return c;
}

void OptimizerConfig::validate() const {
  auto open_unit = [](float v) { return v > 0.0f && v < 1.0f; };
  if (!(learning_rate > 0.0f)) throw ContractError("optimizer learning_rate must be > 0");
  if (!(epsilon > 0.0f)) throw ContractError("optimizer epsilon must be > 0");
  if (!open_unit(beta1) || !open_unit(beta2)) throw ContractError("adam betas must be in (0,1)");
  if (!open_unit(rho)) throw ContractError("rmsprop rho must be in (0,1)");
}

void adam_step(const OptimizerConfig& cfg, Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
               std::uint64_t t) {
  if (t == 0) throw ContractError("adam step index starts at 1");
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = b1 * m[i] + (1.0 - b1) * g;
    const double vi = b2 * v[i] + (1.0 - b2) * g * g;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double step = cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon);
    param[i] = static_cast<float>(param[i] - step);
  }
}

void rmsprop_step(const OptimizerConfig& cfg, Tensor& param, const Tensor& grad, Tensor& v) {
  const double rho = cfg.rho;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double vi = rho * v[i] + (1.0 - rho) * g * g;
    v[i] = static_cast<float>(vi);
    param[i] = static_cast<float>(param[i] - cfg.learning_rate * g / (std::sqrt(vi) + cfg.epsilon));
  }
}

}  // namespace devgan::nn
