#include "devgan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "devgan/errors.hpp"

namespace devgan::data {

namespace fs = std::filesystem;

float normalize_pixel(std::uint8_t p, Norm norm) {
  return norm == Norm::unit ? static_cast<float>(p / 255.0) : static_cast<float>(p / 127.5 - 1.0);
}

std::uint8_t denormalize_pixel(float v, Norm norm) {
  const double scaled = norm == Norm::unit ? v * 255.0 : (v + 1.0) * 127.5;
  return static_cast<std::uint8_t>(std::clamp(std::lround(scaled), 0L, 255L));
}

void LabeledDataset::validate() const {
  const std::size_t n = labels.size();
  if (images.shape() != Shape{n, kImageSide, kImageSide, 1} && !(n == 0 && images.empty()))
    throw ContractError("dataset images " + shape_to_string(images.shape()) + " do not match " + std::to_string(n) +
                        " labels of 32x32x1");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= class_names.size())
      throw ContractError("dataset label " + std::to_string(l) + " outside [0, " +
                          std::to_string(class_names.size()) + ")");
  const float lo = norm == Norm::unit ? 0.0f : -1.0f;
  for (float v : images.data())
    if (!(v >= lo && v <= 1.0f)) throw ContractError("dataset pixel " + std::to_string(v) + " outside its range");
}

GrayImage LabeledDataset::image(std::size_t i) const {
  GrayImage img(kImageSide, kImageSide);
  const std::size_t px = kImageSide * kImageSide;
  for (std::size_t k = 0; k < px; ++k) img.pixels[k] = denormalize_pixel(images[i * px + k], norm);
  return img;
}

LabeledDataset from_images(const std::vector<GrayImage>& images, std::vector<int> labels,
                           std::vector<std::string> class_names, Norm norm) {
  if (images.size() != labels.size()) throw ContractError("from_images: image and label counts differ");
  LabeledDataset ds;
  ds.norm = norm;
  ds.labels = std::move(labels);
  ds.class_names = std::move(class_names);
  const std::size_t px = kImageSide * kImageSide;
  std::vector<float> data;
  data.reserve(images.size() * px);
  for (const auto& img : images) {
    if (img.width != kImageSide || img.height != kImageSide)
      throw ShapeError("from_images: image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                       ", expected 32x32");
    for (auto p : img.pixels) data.push_back(normalize_pixel(p, norm));
  }
  if (!images.empty()) ds.images = Tensor({images.size(), kImageSide, kImageSide, 1}, std::move(data));
  ds.validate();
  return ds;
}

LabeledDataset renormalized(const LabeledDataset& ds, Norm norm) {
  if (ds.norm == norm) return ds;
  LabeledDataset out = ds;
  out.norm = norm;
  for (auto& v : out.images.data()) v = normalize_pixel(denormalize_pixel(v, ds.norm), norm);
  return out;
}

LabeledDataset select(const LabeledDataset& ds, const std::vector<std::size_t>& indices) {
  LabeledDataset out;
  out.class_names = ds.class_names;
  out.norm = ds.norm;
  if (indices.empty()) return out;
  Batch b = gather(ds, indices);
  out.images = std::move(b.images);
  out.labels = std::move(b.labels);
  return out;
}

LabeledDataset class_slice(const LabeledDataset& ds, int label) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i] == label) idx.push_back(i);
  if (idx.empty()) throw DataError("no samples for class label " + std::to_string(label));
  return select(ds, idx);
}

std::vector<std::string> list_classes(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<std::string> resolve_class_subset(const std::vector<std::string>& available, const std::string& selector) {
  if (selector.empty() || selector == "all") return available;
  std::vector<std::string> out;
  if (selector == "digits") {
    for (const auto& n : available)
      if (n.rfind("digit_", 0) == 0) out.push_back(n);
    if (out.empty()) throw DataError("no digit_* class directories found for the 'digits' subset");
    return out;
  }
  std::size_t pos = 0;
  while (pos <= selector.size()) {
    const auto comma = selector.find(',', pos);
    const auto stop = comma == std::string::npos ? selector.size() : comma;
    const std::string name = selector.substr(pos, stop - pos);
    if (!name.empty()) {
      if (std::find(available.begin(), available.end(), name) == available.end())
        throw DataError("unknown class '" + name + "'");
      out.push_back(name);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw DataError("class subset '" + selector + "' selects nothing");
  return out;
}

LabeledDataset load_dataset(const fs::path& root, const std::vector<std::string>& class_subset, Norm norm) {
  const auto available = list_classes(root);
  std::vector<std::string> classes;
  if (class_subset.empty()) {
    classes = available;
  } else {
    classes = class_subset;
    std::sort(classes.begin(), classes.end());
    for (const auto& c : classes)
      if (std::find(available.begin(), available.end(), c) == available.end())
        throw DataError("class directory " + (root / c).string() + " not found");
  }
  if (classes.empty()) throw DataError("no class directories under " + root.string());

  std::vector<GrayImage> images;
  std::vector<int> labels;
  for (std::size_t label = 0; label < classes.size(); ++label) {
    const fs::path dir = root / classes[label];
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      auto ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png") files.push_back(entry.path());
    }
    if (files.empty()) throw DataError("class directory " + dir.string() + " has no PNG images");
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      GrayImage img = read_png(f);
      if (img.width != kImageSide || img.height != kImageSide)
        throw DataError(f.string() + ": image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        ", expected 32x32");
      images.push_back(std::move(img));
      labels.push_back(static_cast<int>(label));
    }
  }
  return from_images(images, std::move(labels), std::move(classes), norm);
}

std::pair<LabeledDataset, LabeledDataset> load_train_test(const fs::path& train_root, const fs::path& test_root,
                                                          const std::vector<std::string>& class_subset, Norm norm) {
  auto train = load_dataset(train_root, class_subset, norm);
  auto test = load_dataset(test_root, class_subset, norm);
  if (train.class_names != test.class_names)
    throw DataError("train and test roots have different class directories");
  return {std::move(train), std::move(test)};
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const LabeledDataset& ds,
                                                                            const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ContractError("split train_fraction must be in (0,1)");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < 2)
      throw DataError("class '" + ds.class_names.at(static_cast<std::size_t>(label)) +
                      "' has fewer than 2 samples and cannot be stratified");
    Rng rng(Rng::derive(spec.seed, static_cast<std::uint64_t>(label)));
    shuffle(idx, rng);
    const auto wanted = static_cast<std::size_t>(std::lround(spec.train_fraction * static_cast<double>(idx.size())));
    const std::size_t n_train = std::clamp<std::size_t>(wanted, 1, idx.size() - 1);
    out.first.insert(out.first.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.second.insert(out.second.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, const SplitSpec& spec) {
  auto [train, val] = split_indices(ds, spec);
  return {select(ds, train), select(ds, val)};
}

Batch gather(const LabeledDataset& ds, const std::vector<std::size_t>& indices) {
  const std::size_t px = kImageSide * kImageSide;
  Batch b;
  b.indices = indices;
  b.images = Tensor({indices.size(), kImageSide, kImageSide, 1});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= ds.size()) throw ContractError("gather: index " + std::to_string(i) + " out of range");
    std::copy_n(ds.images.raw() + i * px, px, b.images.raw() + k * px);
    b.labels.push_back(ds.labels[i]);
  }
  return b;
}

BatchIterator::BatchIterator(const LabeledDataset& ds, std::size_t batch_size, Rng& rng)
    : ds_(&ds), batch_size_(batch_size), order_(ds.size()) {
  if (batch_size == 0) throw ContractError("batch size must be >= 1");
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  shuffle(order_, rng);
}

std::optional<Batch> BatchIterator::next() {
  if (pos_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), pos_ + batch_size_);
  std::vector<std::size_t> idx(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                               order_.begin() + static_cast<std::ptrdiff_t>(end));
  pos_ = end;
  return gather(*ds_, idx);
}

Tensor to_onehot(const std::vector<int>& labels, std::size_t num_classes) {
  if (labels.empty()) throw ContractError("to_onehot: no labels");
  Tensor out({labels.size(), num_classes});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= num_classes)
      throw ContractError("to_onehot: label " + std::to_string(labels[r]) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    out[r * num_classes + static_cast<std::size_t>(labels[r])] = 1.0f;
  }
  return out;
}

Tensor label_tensor(const std::vector<int>& labels) {
  std::vector<float> v(labels.begin(), labels.end());
  return Tensor({labels.size()}, std::move(v));
}

}  // namespace devgan::data
