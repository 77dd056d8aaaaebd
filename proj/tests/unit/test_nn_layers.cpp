#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>

#include "devgan/errors.hpp"
#include "devgan/kernels.hpp"
#include "devgan/layers.hpp"
#include "devgan/network.hpp"
#include "reference_ops.hpp"
#include "test_util.hpp"

using namespace devgan;
using namespace devgan::nn;
using devgan::testing::random_tensor;
using devgan::testing::weighted_sum;

namespace {

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

// FD of a double reference scalar w.r.t. one tensor, holding everything else fixed.
Tensor ref_grad(const std::function<double(const Tensor&)>& f, const Tensor& at, double eps = 1e-3) {
  Tensor g(at.shape(), 0.0f);
  Tensor x = at;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float orig = x[i];
    x[i] = orig + static_cast<float>(eps);
    const double up = f(x);
    const double hu = static_cast<double>(x[i]) - orig;
    x[i] = orig - static_cast<float>(eps);
    const double dn = f(x);
    const double hd = orig - static_cast<double>(x[i]);
    x[i] = orig;
    g[i] = static_cast<float>((up - dn) / (hu + hd));
  }
  return g;
}

}  // namespace

// ---- activations -----------------------------------------------------------

TEST(Activation, Examples) {
  const Tensor x({1, 1}, std::vector<float>{-1.0f});
  EXPECT_FLOAT_EQ(apply_activation(Activation::leaky_relu, x)[0], -0.2f);
  const Tensor zero({1, 1}, 0.0f);
  EXPECT_FLOAT_EQ(apply_activation(Activation::sigmoid, zero)[0], 0.5f);
  EXPECT_FLOAT_EQ(apply_activation(Activation::tanh, zero)[0], 0.0f);
  EXPECT_FLOAT_EQ(apply_activation(Activation::relu, x)[0], 0.0f);
  const auto s = apply_activation(Activation::softmax, Tensor({1, 3}, 0.0f));
  for (float v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
}

TEST(Activation, SoftmaxRowsAreDistributions) {
  for (auto seed : kSeeds) {
    auto x = random_tensor({6, 10}, seed, -30.0f, 30.0f);
    x[0] = 500.0f;  // overflow guard
    const auto y = apply_activation(Activation::softmax, x);
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0;
      for (std::size_t j = 0; j < 10; ++j) {
        EXPECT_GE(y.at(r, j), 0.0f);
        EXPECT_LE(y.at(r, j), 1.0f);
        total += y.at(r, j);
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(Activation, StringRoundTrip) {
  for (auto a : {Activation::relu, Activation::leaky_relu, Activation::tanh, Activation::sigmoid, Activation::softmax})
    EXPECT_EQ(activation_from_string(to_string(a)), a);
  EXPECT_THROW(activation_from_string("gelu"), FormatError);
}

TEST(Activation, BackwardMatchesFiniteDifference) {
  for (auto kind : {Activation::relu, Activation::leaky_relu, Activation::tanh, Activation::sigmoid,
                    Activation::softmax}) {
    for (auto seed : kSeeds) {
      auto x = random_tensor({4, 5}, seed);
      // keep relu kinks away from the probe step
      for (auto& v : x.data()) if (std::abs(v) < 0.01f) v = 0.5f;
      const auto w = random_tensor({4, 5}, seed + 100);
      const auto y = apply_activation(kind, x);
      const auto got = activation_backward(kind, x, y, w);
      const auto want = ref_grad(
          [&](const Tensor& t) { return ref::probe(ref::activation(kind, ref::to_vec(t), 5), w); }, x);
      EXPECT_LT(max_relative_error(got, want), 1e-3) << to_string(kind) << " seed " << seed;
    }
  }
}

// ---- dense -------------------------------------------------------------------

TEST(Dense, IdentityWeights) {
  const auto x = random_tensor({3, 4}, 7);
  Tensor eye({4, 4}, 0.0f);
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0f;
  EXPECT_EQ(dense_forward(x, eye, Tensor({4}, 0.0f)), x);
}

TEST(Dense, HandComputed) {
  const Tensor x({1, 2}, std::vector<float>{1, 1});
  const Tensor w({2, 1}, std::vector<float>{1, 2});
  const Tensor b({1}, std::vector<float>{0.5f});
  EXPECT_FLOAT_EQ(dense_forward(x, w, b)[0], 3.5f);
}

TEST(Dense, WidthMismatch) {
  EXPECT_THROW(dense_forward(Tensor({2, 3}, 1.0f), Tensor({4, 2}, 1.0f), Tensor({2}, 0.0f)), ShapeError);
  EXPECT_THROW(dense_forward(Tensor({2, 4}, 1.0f), Tensor({4, 2}, 1.0f), Tensor({3}, 0.0f)), ShapeError);
}

TEST(Dense, BackwardMatchesFiniteDifference) {
  for (auto seed : kSeeds) {
    const auto x = random_tensor({4, 6}, seed);
    const auto w = random_tensor({6, 3}, seed + 10);
    const auto b = random_tensor({3}, seed + 20);
    const auto probe = random_tensor({4, 3}, seed + 30);
    const auto g = dense_backward(x, w, probe);
    EXPECT_LT(max_relative_error(g.d_input, ref_grad([&](const Tensor& t) { return ref::probe(ref::dense(t, w, b), probe); }, x)), 1e-3);
    EXPECT_LT(max_relative_error(g.d_weight, ref_grad([&](const Tensor& t) { return ref::probe(ref::dense(x, t, b), probe); }, w)), 1e-3);
    EXPECT_LT(max_relative_error(g.d_bias, ref_grad([&](const Tensor& t) { return ref::probe(ref::dense(x, w, t), probe); }, b)), 1e-3);
  }
}

// ---- batch normalization --------------------------------------------------

namespace {
BatchNormState fresh_state(std::size_t f) { return {Tensor({f}, 0.0f), Tensor({f}, 1.0f)}; }
}  // namespace

TEST(BatchNorm, ConstantColumnGivesBeta) {
  auto x = random_tensor({8, 3}, 11);
  for (std::size_t r = 0; r < 8; ++r) x.at(r, 1) = 4.25f;
  const Tensor gamma({3}, std::vector<float>{1.5f, 2.0f, 0.5f});
  const Tensor beta({3}, std::vector<float>{0.1f, -0.7f, 0.3f});
  auto st = fresh_state(3);
  const auto y = batchnorm_forward(x, gamma, beta, st, 0.8f, kBatchNormEpsilon, Mode::train);
  for (std::size_t r = 0; r < 8; ++r) EXPECT_FLOAT_EQ(y.at(r, 1), -0.7f);
}

TEST(BatchNorm, StandardizedBatchIsFixedPoint) {
  const Tensor x({4, 1}, std::vector<float>{-1, 1, -1, 1});
  auto st = fresh_state(1);
  const auto y = batchnorm_forward(x, Tensor({1}, 1.0f), Tensor({1}, 0.0f), st, 0.8f, kBatchNormEpsilon, Mode::train);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
}

TEST(BatchNorm, RunningMeanAfterOneStep) {
  const Tensor x({2, 1}, std::vector<float>{0.5f, 1.5f});
  auto st = fresh_state(1);
  batchnorm_forward(x, Tensor({1}, 1.0f), Tensor({1}, 0.0f), st, 0.8f, kBatchNormEpsilon, Mode::train);
  EXPECT_NEAR(st.running_mean[0], 0.2f, 1e-7);
  // batch variance 0.25 (biased)
  EXPECT_NEAR(st.running_var[0], 0.8f + 0.2f * 0.25f, 1e-7);
}

TEST(BatchNorm, SingleSampleTrainBatchRejected) {
  auto st = fresh_state(2);
  EXPECT_THROW(batchnorm_forward(Tensor({1, 2}, 1.0f), Tensor({2}, 1.0f), Tensor({2}, 0.0f), st, 0.8f,
                                 kBatchNormEpsilon, Mode::train),
               ContractError);
  // inference accepts a single sample
  EXPECT_NO_THROW(batchnorm_forward(Tensor({1, 2}, 1.0f), Tensor({2}, 1.0f), Tensor({2}, 0.0f), st, 0.8f,
                                    kBatchNormEpsilon, Mode::infer));
}

TEST(BatchNorm, InferUsesRunningStats) {
  BatchNormState st{Tensor({1}, 2.0f), Tensor({1}, 4.0f)};
  const Tensor x({3, 1}, std::vector<float>{2, 4, 6});
  const auto y = batchnorm_forward(x, Tensor({1}, 1.0f), Tensor({1}, 0.0f), st, 0.8f, 0.0f, Mode::infer);
  EXPECT_FLOAT_EQ(y[0], 0.0f);
  EXPECT_FLOAT_EQ(y[1], 1.0f);
  EXPECT_FLOAT_EQ(y[2], 2.0f);
  EXPECT_FLOAT_EQ(st.running_mean[0], 2.0f);
}

TEST(BatchNorm, BackwardMatchesFiniteDifference) {
  for (auto seed : kSeeds) {
    const auto x = random_tensor({4, 3}, seed);
    const auto gamma = random_tensor({3}, seed + 1, 0.5f, 2.0f);
    const auto beta = random_tensor({3}, seed + 2);
    const auto probe = random_tensor({4, 3}, seed + 3);
    auto st = fresh_state(3);
    BatchNormCache cache;
    batchnorm_forward(x, gamma, beta, st, 0.8f, kBatchNormEpsilon, Mode::train, &cache);
    const auto g = batchnorm_backward(probe, gamma, cache);
    const double eps = kBatchNormEpsilon;
    auto f_x = [&](const Tensor& t) { return ref::probe(ref::batchnorm(ref::to_vec(t), 3, gamma, beta, eps), probe); };
    auto f_g = [&](const Tensor& t) { return ref::probe(ref::batchnorm(ref::to_vec(x), 3, t, beta, eps), probe); };
    auto f_b = [&](const Tensor& t) { return ref::probe(ref::batchnorm(ref::to_vec(x), 3, gamma, t, eps), probe); };
    EXPECT_LT(max_relative_error(g.d_input, ref_grad(f_x, x)), 1e-3) << seed;
    EXPECT_LT(max_relative_error(g.d_gamma, ref_grad(f_g, gamma)), 1e-3) << seed;
    EXPECT_LT(max_relative_error(g.d_beta, ref_grad(f_b, beta)), 1e-3) << seed;
  }
}

// ---- dropout -------------------------------------------------------------------

TEST(Dropout, IdentityCases) {
  const auto x = random_tensor({4, 8}, 3);
  Rng rng(1);
  EXPECT_EQ(dropout_forward(x, 0.0f, Mode::train, &rng), x);
  EXPECT_EQ(dropout_forward(x, 0.0f, Mode::infer, nullptr), x);
  EXPECT_EQ(dropout_forward(x, 0.5f, Mode::infer, nullptr), x);
}

TEST(Dropout, SurvivorFractionAndExpectation) {
  const Tensor x({100000}, 1.0f);
  Rng rng(2024);
  Tensor mask;
  const auto y = dropout_forward(x, 0.25f, Mode::train, &rng, &mask);
  std::size_t survivors = 0;
  double total = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0f) {
      ++survivors;
      EXPECT_FLOAT_EQ(y[i], 1.0f / 0.75f);
    }
    total += y[i];
    EXPECT_EQ(mask[i], y[i]);
  }
  EXPECT_NEAR(survivors / 1e5, 0.75, 0.01);
  EXPECT_NEAR(total / 1e5, 1.0, 0.01);
}

TEST(Dropout, TrainNeedsRngAndLegalRate) {
  const Tensor x({2, 2}, 1.0f);
  EXPECT_THROW(dropout_forward(x, 0.5f, Mode::train, nullptr), ContractError);
  Rng rng(1);
  EXPECT_THROW(dropout_forward(x, 1.0f, Mode::train, &rng), ContractError);
  EXPECT_THROW(dropout_forward(x, -0.1f, Mode::train, &rng), ContractError);
}

// ---- losses -------------------------------------------------------------------

TEST(Loss, BinaryHalfIsLn2) {
  const auto r = loss(LossKind::binary_ce, Tensor({1, 1}, 0.5f), Tensor({1, 1}, 1.0f));
  EXPECT_NEAR(r.value, std::log(2.0), 1e-7);
}

TEST(Loss, OneHotPerfectPredictionNearZero) {
  Tensor p({3, 4}, 0.0f);
  p.at(0, 1) = p.at(1, 3) = p.at(2, 0) = 1.0f;
  EXPECT_LE(loss(LossKind::categorical_ce, p, p).value, 1e-6);
  const Tensor idx({3}, std::vector<float>{1, 3, 0});
  EXPECT_LE(loss(LossKind::sparse_categorical_ce, p, idx).value, 1e-6);
}

TEST(Loss, SparseEqualsDense) {
  for (auto seed : kSeeds) {
    const auto p = apply_activation(Activation::softmax, random_tensor({8, 10}, seed));
    Rng rng(seed);
    Tensor idx({8, 1}, 0.0f), onehot({8, 10}, 0.0f);
    for (std::size_t r = 0; r < 8; ++r) {
      const auto k = rng.index(10);
      idx[r] = static_cast<float>(k);
      onehot.at(r, k) = 1.0f;
    }
    const auto a = loss(LossKind::sparse_categorical_ce, p, idx);
    const auto b = loss(LossKind::categorical_ce, p, onehot);
    EXPECT_NEAR(a.value, b.value, 1e-7);
    EXPECT_LT(max_relative_error(a.grad, b.grad), 1e-6);
  }
}

TEST(Loss, ErrorCases) {
  const Tensor p({2, 3}, 1.0f / 3);
  EXPECT_THROW(loss(LossKind::sparse_categorical_ce, p, Tensor({2}, std::vector<float>{0, 3})), ContractError);
  EXPECT_THROW(loss(LossKind::sparse_categorical_ce, p, Tensor({2}, std::vector<float>{0, -1})), ContractError);
  EXPECT_THROW(loss(LossKind::categorical_ce, p, Tensor({2, 4}, 0.0f)), ShapeError);
  EXPECT_THROW(loss_from_string("hinge"), FormatError);
}

TEST(Loss, GradientMatchesFiniteDifference) {
  for (auto kind : {LossKind::binary_ce, LossKind::categorical_ce, LossKind::sparse_categorical_ce}) {
    for (auto seed : kSeeds) {
      Tensor pred = random_tensor({4, 5}, seed, 0.05f, 0.95f);
      Tensor target({4, 5}, 0.0f);
      Rng rng(seed);
      if (kind == LossKind::sparse_categorical_ce) {
        target = Tensor({4}, 0.0f);
        for (std::size_t r = 0; r < 4; ++r) target[r] = static_cast<float>(rng.index(5));
      } else if (kind == LossKind::categorical_ce) {
        for (std::size_t r = 0; r < 4; ++r) target.at(r, rng.index(5)) = 1.0f;
      } else {
        for (auto& v : target.data()) v = rng.uniform() < 0.5 ? 0.0f : 1.0f;
      }
      const auto got = loss(kind, pred, target).grad;
      const auto want = ref_grad([&](const Tensor& t) { return ref::cross_entropy(kind, ref::to_vec(t), target, 5); },
                                 pred, 1e-4);
      EXPECT_LT(max_relative_error(got, want), 1e-3) << to_string(kind) << " seed " << seed;
    }
  }
}

TEST(Loss, FusedGradientEqualsChainRule) {
  for (auto seed : kSeeds) {
    const auto logits = random_tensor({4, 6}, seed);
    const auto p = apply_activation(Activation::softmax, logits);
    Tensor onehot({4, 6}, 0.0f);
    for (std::size_t r = 0; r < 4; ++r) onehot.at(r, (r + seed) % 6) = 1.0f;
    const auto plain = loss(LossKind::categorical_ce, p, onehot);
    const auto chained = activation_backward(Activation::softmax, logits, p, plain.grad);
    const auto fused = fused_loss(LossKind::categorical_ce, p, onehot);
    EXPECT_NEAR(fused.value, plain.value, 1e-9);
    EXPECT_LT(max_relative_error(fused.grad, chained), 1e-4);

    const auto z = random_tensor({5, 1}, seed + 9);
    const auto s = apply_activation(Activation::sigmoid, z);
    Tensor y({5, 1}, 0.0f);
    for (std::size_t i = 0; i < 5; i += 2) y[i] = 1.0f;
    const auto b_plain = loss(LossKind::binary_ce, s, y);
    const auto b_chain = activation_backward(Activation::sigmoid, z, s, b_plain.grad);
    EXPECT_LT(max_relative_error(fused_loss(LossKind::binary_ce, s, y).grad, b_chain), 1e-4);
  }
}

// ---- optimizers ---------------------------------------------------------------

TEST(Adam, FirstStepIsLrTimesSign) {
  auto cfg = OptimizerConfig::adam(0.001f, 0.9f, 0.999f, 1e-12f);
  Tensor p({4}, std::vector<float>{1, 1, 1, 1});
  const Tensor g({4}, std::vector<float>{3, -0.5f, 0.01f, -20});
  Tensor m({4}, 0.0f), v({4}, 0.0f);
  adam_step(cfg, p, g, m, v, 1);
  EXPECT_NEAR(p[0], 0.999f, 1e-6);
  EXPECT_NEAR(p[1], 1.001f, 1e-6);
  EXPECT_NEAR(p[2], 0.999f, 1e-6);
  EXPECT_NEAR(p[3], 1.001f, 1e-6);
}

TEST(Adam, ZeroGradientLeavesParams) {
  auto cfg = OptimizerConfig::adam();
  auto p = random_tensor({10}, 1);
  const auto before = p;
  Tensor m({10}, 0.0f), v({10}, 0.0f);
  for (std::uint64_t t = 1; t <= 3; ++t) adam_step(cfg, p, Tensor({10}, 0.0f), m, v, t);
  EXPECT_EQ(p, before);
}

TEST(Adam, Deterministic) {
  auto cfg = OptimizerConfig::adam(0.01f);
  const auto g = random_tensor({16}, 5);
  auto p1 = random_tensor({16}, 6), p2 = p1;
  Tensor m1({16}, 0.0f), v1({16}, 0.0f), m2 = m1, v2 = v1;
  for (std::uint64_t t = 1; t <= 2; ++t) {
    adam_step(cfg, p1, g, m1, v1, t);
    adam_step(cfg, p2, g, m2, v2, t);
  }
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(m1, m2);
  EXPECT_EQ(v1, v2);
  EXPECT_THROW(adam_step(cfg, p1, g, m1, v1, 0), ContractError);
}

TEST(RmsProp, Examples) {
  auto cfg = OptimizerConfig::rmsprop(0.001f, 0.9f, 1e-7f);
  Tensor p({1}, 0.0f), v({1}, 0.0f);
  rmsprop_step(cfg, p, Tensor({1}, 1.0f), v);
  EXPECT_NEAR(p[0], -0.001 / (std::sqrt(0.1) + 1e-7), 1e-8);

  Tensor q({3}, 2.0f), vq({3}, 0.0f);
  rmsprop_step(cfg, q, Tensor({3}, 0.0f), vq);
  EXPECT_EQ(q, Tensor({3}, 2.0f));

  Tensor r({1}, 0.0f), vr({1}, 0.0f);
  float last = 0;
  for (int i = 0; i < 300; ++i) {
    const float before = r[0];
    rmsprop_step(cfg, r, Tensor({1}, 0.7f), vr);
    last = before - r[0];
  }
  EXPECT_NEAR(last, 0.001f, 1e-6);
}

TEST(OptimizerConfig, Validation) {
  EXPECT_NO_THROW(OptimizerConfig::adam().validate());
  EXPECT_THROW(OptimizerConfig::adam(0.0f).validate(), ContractError);
  EXPECT_THROW(OptimizerConfig::adam(0.1f, 1.0f).validate(), ContractError);
  EXPECT_THROW(OptimizerConfig::rmsprop(0.1f, 0.0f).validate(), ContractError);
  EXPECT_THROW(OptimizerConfig::rmsprop(0.1f, 0.9f, 0.0f).validate(), ContractError);
}

// ---- layer specs / network -------------------------------------------------------

TEST(LayerSpec, Validation) {
  EXPECT_THROW(LayerSpec::make_dropout(1.0f).validate(), ContractError);
  EXPECT_THROW(LayerSpec::make_batchnorm(1.0f).validate(), ContractError);
  EXPECT_THROW(LayerSpec::make_batchnorm(0.0f).validate(), ContractError);
  EXPECT_THROW(LayerSpec::make_activation(Activation::leaky_relu, 0.0f).validate(), ContractError);
  EXPECT_THROW(LayerSpec::make_dense(0).validate(), ContractError);
  EXPECT_NO_THROW(LayerSpec::make_dropout(0.25f).validate());
  EXPECT_NO_THROW(LayerSpec::make_batchnorm(0.8f).validate());
}

TEST(Network, EmptyIsIdentity) {
  Network net({3, 3, 1}, {}, 1, {});
  const auto x = random_tensor({2, 3, 3, 1}, 4);
  EXPECT_EQ(net.forward(x, Mode::train), x);
  EXPECT_EQ(net.predict(x), x);
  EXPECT_EQ(net.backward(x), x);
}

TEST(Network, ShapeChainCheckedAtConstruction) {
  // conv on a flat input
  EXPECT_THROW(Network({16}, {LayerSpec::make_conv2d(4, {3, 3}, Padding::same)}, 1, {}), ShapeError);
  // valid pooling that does not fit
  EXPECT_THROW(Network({1, 1, 2}, {LayerSpec::make_maxpool()}, 1, {}), ShapeError);
  // reshape to the wrong size
  EXPECT_THROW(Network({10}, {LayerSpec::make_reshape({3, 3, 1})}, 1, {}), ShapeError);
  Network ok({8, 8, 1}, {LayerSpec::make_conv2d(4, {3, 3}, Padding::valid), LayerSpec::make_flatten(),
                         LayerSpec::make_dense(5)},
             1, {});
  EXPECT_EQ(ok.output_shape(), (Shape{5}));
  EXPECT_THROW(ok.forward(Tensor({2, 8, 8, 2}, 0.0f), Mode::infer), ShapeError);
}

TEST(Network, GlorotInitRange) {
  Network net({30}, {LayerSpec::make_dense(20)}, 9, {});
  const float lim = glorot_limit(30, 20);
  EXPECT_FLOAT_EQ(lim, std::sqrt(6.0f / 50.0f));
  const auto& w = net.layers()[0].params[0];
  float mx = 0;
  for (float v : w.data()) {
    EXPECT_LE(std::abs(v), lim);
    mx = std::max(mx, std::abs(v));
  }
  EXPECT_GT(mx, 0.5f * lim);
  for (float v : net.layers()[0].params[1].data()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(net.parameter_count(), 30u * 20u + 20u);
}

TEST(Network, TwoLayerDenseGradientCheck) {
  for (auto seed : kSeeds) {
    Network net({6}, {LayerSpec::make_dense(5), LayerSpec::make_activation(Activation::tanh),
                      LayerSpec::make_dense(3)},
                seed, {});
    const auto x = random_tensor({4, 6}, seed + 50);
    const auto probe = random_tensor({4, 3}, seed + 60);
    net.forward(x, Mode::train);
    const auto dx = net.backward(probe);
    auto& L = net.layers();
    const Tensor w1 = L[0].params[0], b1 = L[0].params[1], w2 = L[2].params[0], b2 = L[2].params[1];
    auto f = [&](const Tensor& xx, const Tensor& ww1, const Tensor& ww2) {
      auto h = ref::activation(Activation::tanh, ref::dense(xx, ww1, b1), 5);
      return ref::probe(ref::dense(h, ww2, b2), probe);
    };
    EXPECT_LT(max_relative_error(dx, ref_grad([&](const Tensor& t) { return f(t, w1, w2); }, x, 1e-4)), 1e-3);
    EXPECT_LT(max_relative_error(L[0].grads[0], ref_grad([&](const Tensor& t) { return f(x, t, w2); }, w1, 1e-4)), 1e-3);
    EXPECT_LT(max_relative_error(L[2].grads[0], ref_grad([&](const Tensor& t) { return f(x, w1, t); }, w2, 1e-4)), 1e-3);
  }
}

namespace {

// Smallest gap between the top two entries of any 2x2 pooling window, and the
// smallest |value| feeding the relu. FD is only meaningful away from both kinks.
double kink_margin(const Tensor& relu_in, const Tensor& pool_in) {
  double margin = 1e9;
  for (float v : relu_in.data()) margin = std::min(margin, std::abs(static_cast<double>(v)));
  const std::size_t B = pool_in.dim(0), H = pool_in.dim(1), W = pool_in.dim(2), C = pool_in.dim(3);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y + 1 < H; y += 2)
      for (std::size_t x = 0; x + 1 < W; x += 2)
        for (std::size_t c = 0; c < C; ++c) {
          std::vector<double> w;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) w.push_back(pool_in[((b * H + y + dy) * W + x + dx) * C + c]);
          std::sort(w.rbegin(), w.rend());
          if (w[0] > 0) margin = std::min(margin, w[0] - w[1]);
        }
  return margin;
}

// Relative error whose floor scales with the largest entry. BatchNorm makes the
// kernel gradient orthogonal to the kernel, so some entries are tiny results of
// cancellation and float32 round-off alone exceeds 1e-3 of them.
double scaled_relative_error(const Tensor& a, const Tensor& b) {
  double peak = 0.0;
  for (float v : b.data()) peak = std::max(peak, std::abs(static_cast<double>(v)));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(static_cast<double>(a[i])), std::abs(static_cast<double>(b[i])), 1e-3 * peak});
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST(Network, ConvStackGradientCheck) {
  // conv -> batchnorm -> relu -> pool -> flatten -> dense -> softmax, scored by categorical CE
  for (auto seed : kSeeds) {
    CompileConfig cc{OptimizerConfig::adam(), LossKind::categorical_ce};
    Network net({6, 6, 2},
                {LayerSpec::make_conv2d(3, {3, 3}, Padding::same), LayerSpec::make_batchnorm(0.9f),
                 LayerSpec::make_activation(Activation::relu), LayerSpec::make_maxpool(),
                 LayerSpec::make_flatten(), LayerSpec::make_dense(4),
                 LayerSpec::make_activation(Activation::softmax)},
                seed, cc);
    for (auto& v : net.layers()[1].params[1].data()) v = 0.5f;
    Tensor y({4, 4}, 0.0f);
    for (std::size_t r = 0; r < 4; ++r) y.at(r, (r * 3 + seed) % 4) = 1.0f;

    // Redraw the input until no relu or pooling decision is within reach of the FD step.
    Tensor x, p;
    for (std::uint64_t draw = 0;; ++draw) {
      ASSERT_LT(draw, 500u) << "no kink-free input found";
      x = random_tensor({4, 6, 6, 2}, seed * 1000 + draw);
      p = net.forward(x, Mode::train);
      if (kink_margin(net.layers()[2].cache_input, net.layers()[3].cache_input) > 4e-3) break;
    }
    const auto fl = fused_loss(LossKind::categorical_ce, p, y);
    const auto dx = net.backward(fl.grad, GradFrom::logits);
    const auto& L = net.layers();
    const Tensor k = L[0].params[0], gamma = L[1].params[0], beta = L[1].params[1];
    const Tensor w = L[5].params[0], b = L[5].params[1];

    auto f = [&](const Tensor& xx, const Tensor& kk, const Tensor& gg, const Tensor& ww) {
      auto h = ref::conv(xx, kk, Padding::same, {1, 1});  // conv bias is zero at init
      h = ref::batchnorm(h, 3, gg, beta, kBatchNormEpsilon);
      h = ref::activation(Activation::relu, h, 3);
      h = ref::maxpool(h, {4, 6, 6, 3}, {2, 2}, {2, 2});
      h = ref::activation(Activation::softmax, ref::dense(h, ww, b), 4);
      return ref::cross_entropy(LossKind::categorical_ce, h, y, 4);
    };
    constexpr double eps = 1e-5;
    EXPECT_NEAR(f(x, k, gamma, w), fl.value, 1e-5);
    EXPECT_LT(scaled_relative_error(dx, ref_grad([&](const Tensor& t) { return f(t, k, gamma, w); }, x, eps)), 1e-3) << seed;
    EXPECT_LT(scaled_relative_error(L[0].grads[0], ref_grad([&](const Tensor& t) { return f(x, t, gamma, w); }, k, eps)), 1e-3) << seed;
    EXPECT_LT(scaled_relative_error(L[1].grads[0], ref_grad([&](const Tensor& t) { return f(x, k, t, w); }, gamma, eps)), 1e-3) << seed;
    EXPECT_LT(scaled_relative_error(L[5].grads[0], ref_grad([&](const Tensor& t) { return f(x, k, gamma, t); }, w, eps)), 1e-3) << seed;
  }
}

TEST(Network, NonTrainableLayersUnchangedByUpdate) {
  Network net({4}, {LayerSpec::make_dense(8), LayerSpec::make_batchnorm(0.8f), LayerSpec::make_dense(2)}, 3,
              {OptimizerConfig::adam(0.1f), LossKind::binary_ce});
  net.layers()[0].trainable = false;
  net.layers()[1].trainable = false;
  const auto frozen0 = net.layers()[0].params;
  const auto frozen1 = net.layers()[1].params;
  const auto live = net.layers()[2].params[0];
  const auto x = random_tensor({5, 4}, 8);
  for (int i = 0; i < 3; ++i) {
    net.forward(x, Mode::train);
    net.backward(Tensor({5, 2}, 1.0f));
    net.update();
  }
  for (std::size_t i = 0; i < frozen0.size(); ++i)
    EXPECT_EQ(std::memcmp(frozen0[i].data().data(), net.layers()[0].params[i].data().data(), frozen0[i].size() * 4), 0);
  for (std::size_t i = 0; i < frozen1.size(); ++i) EXPECT_EQ(frozen1[i], net.layers()[1].params[i]);
  EXPECT_NE(live, net.layers()[2].params[0]);

  net.set_trainable(false);
  EXPECT_FALSE(net.any_trainable());
  const auto digest = net.parameter_digest();
  net.forward(x, Mode::infer);
  net.backward(Tensor({5, 2}, 1.0f));
  net.update();
  EXPECT_EQ(digest, net.parameter_digest());
}

TEST(Network, InferModeIsDeterministicAndPure) {
  Network net({10}, {LayerSpec::make_dense(16), LayerSpec::make_batchnorm(0.8f), LayerSpec::make_dropout(0.5f),
                     LayerSpec::make_dense(3)},
              4, {});
  const auto x = random_tensor({6, 10}, 1);
  Rng rng(3);
  net.forward(x, Mode::train, &rng);
  const auto digest = net.parameter_digest();
  const auto a = net.predict(x);
  const auto b = net.forward(x, Mode::infer);
  EXPECT_EQ(a, b);
  EXPECT_EQ(digest, net.parameter_digest());
  // Dropout in train mode without an rng is a contract violation.
  EXPECT_THROW(net.forward(x, Mode::train), ContractError);
}

TEST(Network, GeneratorShape) {
  std::vector<LayerSpec> specs;
  for (std::size_t w : {256u, 512u, 1024u}) {
    specs.push_back(LayerSpec::make_dense(w));
    specs.push_back(LayerSpec::make_activation(Activation::leaky_relu, 0.2f));
    specs.push_back(LayerSpec::make_batchnorm(0.8f));
  }
  specs.push_back(LayerSpec::make_dense(1024));
  specs.push_back(LayerSpec::make_activation(Activation::tanh));
  specs.push_back(LayerSpec::make_reshape({32, 32, 1}));
  Network g({100}, specs, 1, {});
  Rng rng(1);
  const auto out = g.predict(sample_gaussian(rng, {1, 100}));
  EXPECT_EQ(out.shape(), (Shape{1, 32, 32, 1}));
}
