#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "devgan/dataset.hpp"
#include "devgan/errors.hpp"
#include "devgan/network.hpp"

namespace devgan::clf {

enum class ClassifierId { c1, c2, c3 };

inline constexpr ClassifierId kAllClassifiers[] = {ClassifierId::c1, ClassifierId::c2, ClassifierId::c3};

std::string_view to_string(ClassifierId id);
ClassifierId classifier_from_string(std::string_view s);

// c1: dense MLP, Adam + sparse categorical CE.
// c2: three conv blocks (64@5x5 same, 32@3x3 valid, 16@3x3 same; each with
//     BatchNorm, ReLU, 2x2 pool, dropout 0.25) -> Dense 128 -> Dense 32 ->
//     softmax, Adam + categorical CE.
// c3: c2's topology with filters 32/64/32, dense 256/64 each followed by
//     BatchNorm, RMSprop + categorical CE.
nn::Network build_classifier(ClassifierId id, std::size_t num_classes, std::uint64_t seed = 0);

struct EpochRow {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochRow> rows;
  std::size_t best_index = 0;  // row with the highest val_accuracy (earliest on ties)

  const EpochRow& best() const;
  const EpochRow& last() const;
  // epoch,loss,accuracy,val_loss,val_accuracy
  std::string to_csv() const;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::uint64_t seed = 42;
};

struct TrainResult {
  nn::Network net;  // snapshot at the best validation accuracy
  TrainReport report;
};

// Raised when a training loss turns non-finite; carries the rows completed so far.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, TrainReport partial) : NumericError(what), report(std::move(partial)) {}
  TrainReport report;
};

// Shuffled mini-batch training; validation metrics after every epoch. Train
// loss/accuracy are sample-weighted means over the epoch's train-mode batches.
TrainResult train_classifier(ClassifierId id, const data::LabeledDataset& train, const data::LabeledDataset& val,
                             const TrainConfig& cfg,
                             const std::function<void(const EpochRow&)>& on_epoch = {});

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Inference-mode loss (the network's own loss kind) and argmax accuracy;
// ties resolve to the lowest class index. Chunked, sample-weighted.
Evaluation evaluate(const nn::Network& net, const data::LabeledDataset& ds, std::size_t chunk = 256);

// Loss target in the format `kind` expects: indices for sparse, one-hot otherwise.
Tensor loss_target(nn::LossKind kind, const std::vector<int>& labels, std::size_t num_classes);

}  // namespace devgan::clf
