#include "devgan/classifier.hpp"

#include <cmath>
#include <cstdio>
#include <optional>

namespace devgan::clf {
namespace {

using nn::Activation;
using nn::LayerSpec;

constexpr std::uint64_t kInitStream = 0x696e6974;     // "init"
constexpr std::uint64_t kShuffleStream = 0x73687566;  // "shuf"
constexpr std::uint64_t kDropoutStream = 0x64726f70;  // "drop"
constexpr float kBnMomentum = 0.9f;

void conv_block(std::vector<LayerSpec>& s, std::size_t filters, std::size_t k, Padding pad) {
  s.push_back(LayerSpec::make_conv2d(filters, {k, k}, pad));
  s.push_back(LayerSpec::make_batchnorm(kBnMomentum));
  s.push_back(LayerSpec::make_activation(Activation::relu));
  s.push_back(LayerSpec::make_maxpool({2, 2}, {2, 2}));
  s.push_back(LayerSpec::make_dropout(0.25f));
}

void dense_block(std::vector<LayerSpec>& s, std::size_t units, bool batchnorm, float dropout) {
  s.push_back(LayerSpec::make_dense(units));
  if (batchnorm) s.push_back(LayerSpec::make_batchnorm(kBnMomentum));
  s.push_back(LayerSpec::make_activation(Activation::relu));
  if (dropout > 0.0f) s.push_back(LayerSpec::make_dropout(dropout));
}

std::size_t argmax_row(const Tensor& p, std::size_t r, std::size_t width) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < width; ++j)
    if (p[r * width + j] > p[r * width + best]) best = j;
  return best;
}

bool has_batchnorm(const nn::Network& net) {
  for (const auto& l : net.layers())
    if (l.spec.kind == nn::LayerKind::batchnorm) return true;
  return false;
}

}  // namespace

std::string_view to_string(ClassifierId id) {
  switch (id) {
    case ClassifierId::c1: return "c1";
    case ClassifierId::c2: return "c2";
    case ClassifierId::c3: return "c3";
  }
  return "?";
}

ClassifierId classifier_from_string(std::string_view s) {
  for (auto id : kAllClassifiers)
    if (to_string(id) == s) return id;
  throw FormatError("unknown classifier '" + std::string(s) + "' (expected c1, c2 or c3)");
}

nn::Network build_classifier(ClassifierId id, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw ContractError("a classifier needs at least 2 classes");
  const Shape input{data::kImageSide, data::kImageSide, 1};
  std::vector<LayerSpec> s;
  nn::CompileConfig cc;
  switch (id) {
    case ClassifierId::c1:
      s.push_back(LayerSpec::make_flatten());
      dense_block(s, 128, false, 0.0f);
      dense_block(s, 128, false, 0.0f);
      cc = {nn::OptimizerConfig::adam(), nn::LossKind::sparse_categorical_ce};
      break;
    case ClassifierId::c2:
      conv_block(s, 64, 5, Padding::same);
      conv_block(s, 32, 3, Padding::valid);
      conv_block(s, 16, 3, Padding::same);
      s.push_back(LayerSpec::make_flatten());
      dense_block(s, 128, false, 0.25f);
      dense_block(s, 32, false, 0.5f);
      cc = {nn::OptimizerConfig::adam(), nn::LossKind::categorical_ce};
      break;
    case ClassifierId::c3:
      conv_block(s, 32, 5, Padding::same);
      conv_block(s, 64, 3, Padding::valid);
      conv_block(s, 32, 3, Padding::same);
      s.push_back(LayerSpec::make_flatten());
      dense_block(s, 256, true, 0.25f);
      dense_block(s, 64, true, 0.5f);
      cc = {nn::OptimizerConfig::rmsprop(), nn::LossKind::categorical_ce};
      break;
  }
  s.push_back(LayerSpec::make_dense(num_classes));
  s.push_back(LayerSpec::make_activation(Activation::softmax));
  return nn::Network(input, std::move(s), Rng::derive(Rng::derive(seed, kInitStream), static_cast<std::uint64_t>(id)),
                     cc);
}

const EpochRow& TrainReport::best() const {
  if (rows.empty()) throw ContractError("empty training report");
  return rows.at(best_index);
}

const EpochRow& TrainReport::last() const {
  if (rows.empty()) throw ContractError("empty training report");
  return rows.back();
}

std::string TrainReport::to_csv() const {
  std::string out = "epoch,loss,accuracy,val_loss,val_accuracy\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.loss, r.accuracy, r.val_loss,
                  r.val_accuracy);
    out += line;
  }
  return out;
}

Tensor loss_target(nn::LossKind kind, const std::vector<int>& labels, std::size_t num_classes) {
  if (kind == nn::LossKind::sparse_categorical_ce) {
    for (int l : labels)
      if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
        throw ContractError("label " + std::to_string(l) + " outside [0, " + std::to_string(num_classes) + ")");
    return data::label_tensor(labels);
  }
  return data::to_onehot(labels, num_classes);
}

Evaluation evaluate(const nn::Network& net, const data::LabeledDataset& ds, std::size_t chunk) {
  if (ds.size() == 0) throw ContractError("evaluate: empty dataset");
  if (chunk == 0) throw ContractError("evaluate: chunk must be >= 1");
  const auto out = net.output_shape();
  if (out.size() != 1 || out[0] != ds.num_classes())
    throw ShapeError("classifier output " + shape_to_string(out) + " does not match " +
                     std::to_string(ds.num_classes()) + " dataset classes");
  const std::size_t width = out[0];
  const auto kind = net.compile_config().loss;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    const std::size_t end = std::min(ds.size(), start + chunk);
    std::vector<std::size_t> idx(end - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    const auto batch = data::gather(ds, idx);
    const Tensor p = net.predict(batch.images);
    loss_sum += nn::loss(kind, p, loss_target(kind, batch.labels, width)).value * static_cast<double>(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r)
      if (static_cast<int>(argmax_row(p, r, width)) == batch.labels[r]) ++correct;
  }
  const double n = static_cast<double>(ds.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

TrainResult train_classifier(ClassifierId id, const data::LabeledDataset& train, const data::LabeledDataset& val,
                             const TrainConfig& cfg, const std::function<void(const EpochRow&)>& on_epoch) {
  if (cfg.epochs == 0 || cfg.batch_size == 0) throw ContractError("epochs and batch_size must be >= 1");
  if (train.norm != data::Norm::unit || val.norm != data::Norm::unit)
    throw ContractError("classifiers train on unit-normalized data");
  if (train.num_classes() != val.num_classes())
    throw ContractError("train and validation sets disagree on the class count");
  train.validate();
  val.validate();

  nn::Network net = build_classifier(id, train.num_classes(), cfg.seed);
  const auto kind = net.compile_config().loss;
  const std::size_t width = train.num_classes();
  const bool needs_pairs = has_batchnorm(net);
  Rng dropout_rng(Rng::derive(cfg.seed, kDropoutStream));

  TrainReport report;
  std::optional<nn::Network> best;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(Rng::derive(cfg.seed, kShuffleStream), epoch));
    data::BatchIterator it(train, cfg.batch_size, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    while (auto batch = it.next()) {
      const std::size_t b = batch->labels.size();
      // A lone trailing sample cannot form batch statistics.
      if (b < 2 && needs_pairs) continue;
      const Tensor p = net.forward(batch->images, nn::Mode::train, &dropout_rng);
      const auto fl = nn::fused_loss(kind, p, loss_target(kind, batch->labels, width));
      if (!std::isfinite(fl.value))
        throw TrainingDiverged("non-finite training loss in epoch " + std::to_string(epoch) + " for classifier " +
                                   std::string(to_string(id)),
                               report);
      net.backward(fl.grad, nn::GradFrom::logits);
      net.update();
      loss_sum += fl.value * static_cast<double>(b);
      for (std::size_t r = 0; r < b; ++r)
        if (static_cast<int>(argmax_row(p, r, width)) == batch->labels[r]) ++correct;
      seen += b;
    }
    const auto v = evaluate(net, val);
    EpochRow row{epoch, loss_sum / static_cast<double>(seen), static_cast<double>(correct) / static_cast<double>(seen),
                 v.loss, v.accuracy};
    report.rows.push_back(row);
    if (!best || row.val_accuracy > report.rows[report.best_index].val_accuracy) {
      report.best_index = report.rows.size() - 1;
      best = net;
    }
    if (on_epoch) on_epoch(row);
  }
  return {std::move(*best), std::move(report)};
}

}  // namespace devgan::clf
