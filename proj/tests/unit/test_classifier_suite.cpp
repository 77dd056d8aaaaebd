#include <gtest/gtest.h>

#include <cmath>

#include "devgan/checkpoint.hpp"
#include "devgan/classifier.hpp"
#include "devgan/errors.hpp"
#include "devgan/glyphs.hpp"

using namespace devgan;
using namespace devgan::clf;

namespace {

// Class 0 lights the left half, class 1 the right half, plus mild noise.
data::LabeledDataset halves(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GrayImage> imgs;
  std::vector<int> labels;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    GrayImage img(32, 32);
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        const bool lit = (x < 16) == (label == 0);
        img.at(x, y) = static_cast<std::uint8_t>((lit ? 180 : 20) + rng.index(40));
      }
    imgs.push_back(std::move(img));
    labels.push_back(label);
  }
  return data::from_images(imgs, labels, {"left", "right"}, data::Norm::unit);
}

// Sample i of class k has pixel k set to 1; a single dense layer can read it off.
data::LabeledDataset indicator_set(std::size_t classes, std::size_t per_class) {
  std::vector<GrayImage> imgs;
  std::vector<int> labels;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < classes; ++k) names.push_back("k" + std::to_string(k));
  for (std::size_t i = 0; i < classes * per_class; ++i) {
    GrayImage img(32, 32);
    const int k = static_cast<int>(i % classes);
    img.pixels[k] = 255;
    imgs.push_back(std::move(img));
    labels.push_back(k);
  }
  return data::from_images(imgs, labels, names, data::Norm::unit);
}

nn::Network linear_readout(std::size_t classes, float scale) {
  std::vector<nn::LayerSpec> specs{nn::LayerSpec::make_flatten(), nn::LayerSpec::make_dense(classes),
                                   nn::LayerSpec::make_activation(nn::Activation::softmax)};
  nn::Network net({32, 32, 1}, specs, 1, {nn::OptimizerConfig::adam(), nn::LossKind::categorical_ce});
  auto& w = net.layers()[1].params[0];
  for (auto& v : w.data()) v = 0.0f;
  for (std::size_t k = 0; k < classes; ++k) w[k * classes + k] = scale;
  return net;
}

}  // namespace

TEST(ClassifierId, StringRoundTrip) {
  for (auto id : kAllClassifiers) EXPECT_EQ(classifier_from_string(to_string(id)), id);
  EXPECT_THROW(classifier_from_string("c4"), FormatError);
}

TEST(BuildClassifier, OutputShapesAndSoftmaxRows) {
  Rng rng(3);
  const auto x = sample_uniform(rng, {4, 32, 32, 1}, 0.0f, 1.0f);
  for (auto id : kAllClassifiers) {
    const auto net = build_classifier(id, 10);
    const auto p = net.predict(x);
    ASSERT_EQ(p.shape(), (Shape{4, 10})) << to_string(id);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < 10; ++j) s += p[r * 10 + j];
      EXPECT_NEAR(s, 1.0, 1e-5);
    }
  }
  EXPECT_THROW(build_classifier(ClassifierId::c1, 1), ContractError);
}

TEST(BuildClassifier, C2SpatialTrace) {
  const auto net = build_classifier(ClassifierId::c2, 10);
  std::vector<Shape> conv_out, pool_out;
  for (const auto& l : net.layers()) {
    if (l.spec.kind == nn::LayerKind::conv2d) conv_out.push_back(l.output_shape);
    if (l.spec.kind == nn::LayerKind::maxpool) pool_out.push_back(l.output_shape);
  }
  EXPECT_EQ(conv_out, (std::vector<Shape>{{32, 32, 64}, {14, 14, 32}, {7, 7, 16}}));
  EXPECT_EQ(pool_out, (std::vector<Shape>{{16, 16, 64}, {7, 7, 32}, {3, 3, 16}}));
}

TEST(BuildClassifier, LossAndOptimizerBindings) {
  const auto c1 = build_classifier(ClassifierId::c1, 10);
  const auto c2 = build_classifier(ClassifierId::c2, 10);
  const auto c3 = build_classifier(ClassifierId::c3, 10);
  EXPECT_EQ(c1.compile_config().loss, nn::LossKind::sparse_categorical_ce);
  EXPECT_EQ(c2.compile_config().loss, nn::LossKind::categorical_ce);
  EXPECT_EQ(c3.compile_config().loss, nn::LossKind::categorical_ce);
  EXPECT_EQ(c1.compile_config().optimizer.kind, nn::OptimizerKind::adam);
  EXPECT_EQ(c3.compile_config().optimizer.kind, nn::OptimizerKind::rmsprop);

  // c3: every hidden dense layer is followed by batchnorm, the output one is not
  const auto& layers = c3.layers();
  std::size_t dense_seen = 0;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (layers[i].spec.kind != nn::LayerKind::dense) continue;
    ++dense_seen;
    const bool is_output = i + 2 == layers.size();
    EXPECT_EQ(layers[i + 1].spec.kind == nn::LayerKind::batchnorm, !is_output);
  }
  EXPECT_EQ(dense_seen, 3u);
  std::size_t c1_dense = 0;
  for (const auto& l : c1.layers())
    if (l.spec.kind == nn::LayerKind::dense) {
      ++c1_dense;
      if (c1_dense < 3) {
        EXPECT_EQ(l.output_shape, (Shape{128}));
      }
    }
  EXPECT_EQ(c1_dense, 3u);
}

TEST(BuildClassifier, SerializationRoundTripAllArchitectures) {
  for (auto id : kAllClassifiers) {
    const auto net = build_classifier(id, 10, 5);
    nn::Checkpoint c;
    c.networks.emplace_back(std::string(to_string(id)), net);
    const auto bytes = nn::encode_checkpoint(c);
    EXPECT_EQ(nn::encode_checkpoint(nn::decode_checkpoint(bytes)), bytes) << to_string(id);
  }
}

TEST(TrainClassifier, SeparableToyReachesPerfectTrainAccuracy) {
  const auto train = halves(40, 1);
  const auto val = halves(10, 2);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  const auto result = train_classifier(ClassifierId::c1, train, val, cfg);
  ASSERT_EQ(result.report.rows.size(), 20u);
  EXPECT_EQ(result.report.last().accuracy, 1.0);
  EXPECT_EQ(evaluate(result.net, train).accuracy, 1.0);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(result.report.rows[i].epoch, i + 1);
}

TEST(TrainClassifier, DeterministicReportAndBestSnapshot) {
  const auto all = data::make_glyph_dataset(12, 4, data::Norm::unit, 4);
  const auto [train, val] = data::split(all, {});
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  for (auto id : kAllClassifiers) {
    std::size_t callbacks = 0;
    const auto a = train_classifier(id, train, val, cfg, [&](const EpochRow&) { ++callbacks; });
    const auto b = train_classifier(id, train, val, cfg);
    EXPECT_EQ(callbacks, 3u);
    EXPECT_EQ(a.report.to_csv(), b.report.to_csv()) << to_string(id);
    EXPECT_EQ(a.net.parameter_digest(), b.net.parameter_digest());
    // The returned network is the snapshot that scored best on validation.
    const auto& best = a.report.best();
    const auto ev = evaluate(a.net, val);
    EXPECT_EQ(ev.accuracy, best.val_accuracy);
    EXPECT_EQ(ev.loss, best.val_loss);
    for (const auto& r : a.report.rows) {
      EXPECT_LE(r.val_accuracy, best.val_accuracy);
      EXPECT_GE(r.accuracy, 0.0);
      EXPECT_LE(r.accuracy, 1.0);
    }
  }
}

TEST(TrainClassifier, ReportCsvHeader) {
  TrainReport r;
  r.rows.push_back({1, 0.5, 0.75, 0.25, 1.0});
  EXPECT_EQ(r.to_csv(), "epoch,loss,accuracy,val_loss,val_accuracy\n1,0.5,0.75,0.25,1\n");
  EXPECT_THROW(TrainReport{}.best(), ContractError);
}

TEST(TrainClassifier, ContractsAndDivergence) {
  const auto unit = data::make_glyph_dataset(4, 1, data::Norm::unit, 3);
  const auto sym = data::renormalized(unit, data::Norm::symmetric);
  EXPECT_THROW(train_classifier(ClassifierId::c1, sym, sym, {}), ContractError);

  auto bad = unit;
  for (auto& v : bad.images.data()) v = std::nanf("");
  TrainConfig cfg;
  cfg.epochs = 2;
  try {
    train_classifier(ClassifierId::c1, bad, unit, cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_TRUE(e.report.rows.empty());
  } catch (const ContractError&) {
    // validate() may reject NaN pixels before training starts
  }
}

TEST(Evaluate, PerfectPredictions) {
  const auto ds = indicator_set(10, 5);
  const auto ev = evaluate(linear_readout(10, 60.0f), ds);
  EXPECT_EQ(ev.accuracy, 1.0);
  EXPECT_LE(ev.loss, 1e-6);
}

TEST(Evaluate, UniformPredictionsGiveLn10) {
  auto ds = indicator_set(10, 5);
  const auto ev = evaluate(linear_readout(10, 0.0f), ds);
  EXPECT_NEAR(ev.loss, std::log(10.0), 1e-6);
  // every argmax ties and resolves to class 0
  EXPECT_NEAR(ev.accuracy, 0.1, 1e-12);
}

TEST(Evaluate, ChunkInvariantPureAndWidthChecked) {
  const auto ds = data::make_glyph_dataset(7, 9, data::Norm::unit, 10);
  for (auto id : kAllClassifiers) {
    const auto net = build_classifier(id, 10, 2);
    const auto whole = evaluate(net, ds, 1000);
    const auto again = evaluate(net, ds, 1000);
    EXPECT_EQ(whole.loss, again.loss);
    EXPECT_EQ(whole.accuracy, again.accuracy);
    for (std::size_t chunk : {1, 3, 16}) {
      const auto part = evaluate(net, ds, chunk);
      EXPECT_NEAR(part.loss, whole.loss, 1e-6) << to_string(id) << " chunk " << chunk;
      EXPECT_NEAR(part.accuracy, whole.accuracy, 1e-6);
    }
  }
  const auto narrow = build_classifier(ClassifierId::c1, 4);
  EXPECT_THROW(evaluate(narrow, ds), ShapeError);
}

TEST(Evaluate, AccuracyInvariantUnderMonotoneTransform) {
  const auto ds = indicator_set(4, 3);
  auto net = linear_readout(4, 3.0f);
  const auto base = evaluate(net, ds).accuracy;
  for (auto& v : net.layers()[1].params[0].data()) v *= 2.5f;  // softmax(2.5 z) keeps each row's order
  EXPECT_EQ(evaluate(net, ds).accuracy, base);
}
