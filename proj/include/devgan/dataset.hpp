#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "devgan/image.hpp"
#include "devgan/rng.hpp"
#include "devgan/tensor.hpp"

namespace devgan::data {

inline constexpr std::size_t kImageSide = 32;

// unit: pixel/255 in [0,1]; symmetric: pixel/127.5 - 1 in [-1,1].
enum class Norm { unit, symmetric };

float normalize_pixel(std::uint8_t p, Norm norm);
// Inverse of normalize_pixel, rounded and clamped to 8 bits.
std::uint8_t denormalize_pixel(float v, Norm norm);

// images: (n, 32, 32, 1); labels index class_names.
struct LabeledDataset {
  Tensor images;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  Norm norm = Norm::unit;

  std::size_t size() const { return labels.size(); }
  std::size_t num_classes() const { return class_names.size(); }

  // Throws ContractError if a label, shape or pixel range invariant fails.
  void validate() const;

  GrayImage image(std::size_t i) const;
};

// Builds a dataset from 8-bit images (all 32x32).
LabeledDataset from_images(const std::vector<GrayImage>& images, std::vector<int> labels,
                           std::vector<std::string> class_names, Norm norm);

LabeledDataset renormalized(const LabeledDataset& ds, Norm norm);
LabeledDataset select(const LabeledDataset& ds, const std::vector<std::size_t>& indices);
// All samples of one class; labels keep their original value.
LabeledDataset class_slice(const LabeledDataset& ds, int label);

// Sorted class directory names under root.
std::vector<std::string> list_classes(const std::filesystem::path& root);

// Resolves "all", "digits" (directories named digit_*) or a comma-separated
// list against the classes present under root.
std::vector<std::string> resolve_class_subset(const std::vector<std::string>& available, const std::string& selector);

// root/<class>/<file>.png. Classes are taken in lexicographic order restricted
// to `class_subset` (all when empty); files in lexicographic order. Non-PNG
// files are ignored. Throws DataError for a missing or empty class directory,
// an undecodable PNG or an image that is not 32x32.
LabeledDataset load_dataset(const std::filesystem::path& root, const std::vector<std::string>& class_subset,
                            Norm norm);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 42;
};

// Per-class stratified shuffle split. Each class contributes
// round(fraction * n_c) training samples, kept within [1, n_c - 1].
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, const SplitSpec& spec);

// Index partition used by split(), exposed for inspection.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const LabeledDataset& ds,
                                                                            const SplitSpec& spec);

struct Batch {
  Tensor images;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

Batch gather(const LabeledDataset& ds, const std::vector<std::size_t>& indices);

// One shuffled pass; the last batch may be short.
class BatchIterator {
 public:
  BatchIterator(const LabeledDataset& ds, std::size_t batch_size, Rng& rng);
  std::optional<Batch> next();

 private:
  const LabeledDataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

// In-place Fisher-Yates driven by Rng::index.
void shuffle(std::vector<std::size_t>& v, Rng& rng);

Tensor to_onehot(const std::vector<int>& labels, std::size_t num_classes);

// Labels as a float tensor of shape (n), the sparse loss target format.
Tensor label_tensor(const std::vector<int>& labels);

// Pair of explicit train/test roots (e.g. DHCD's Train/ and Test/ trees).
std::pair<LabeledDataset, LabeledDataset> load_train_test(const std::filesystem::path& train_root,
                                                          const std::filesystem::path& test_root,
                                                          const std::vector<std::string>& class_subset, Norm norm);

}  // namespace devgan::data
