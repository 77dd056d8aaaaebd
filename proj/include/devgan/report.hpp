#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "devgan/cleaning.hpp"
#include "devgan/dataset.hpp"
#include "devgan/gan.hpp"
#include "devgan/network.hpp"

namespace devgan::report {

struct MetricsRow {
  std::string classifier;
  double loss = 0.0;
  double accuracy = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct MetricsReport {
  std::string dataset_name;
  std::vector<MetricsRow> rows;

  bool has_validation() const;
  const MetricsRow* find(const std::string& classifier) const;
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

using NamedNetwork = std::pair<std::string, const nn::Network*>;

// One evaluate() row per classifier. A width mismatch throws ShapeError
// naming the offending classifier.
MetricsReport score_dataset(const std::vector<NamedNetwork>& classifiers, const data::LabeledDataset& ds,
                            const std::string& name);

enum class Format { csv, markdown };

// Columns: classifier, loss, accuracy and, when any row carries them,
// val_loss, val_accuracy. Numbers use 4-decimal fixed point.
std::string render(const MetricsReport& report, Format format);

// Inverse of render(..., csv). Throws FormatError on malformed input.
MetricsReport parse_csv(const std::string& text, const std::string& dataset_name);

// Writes report_<name>.csv and report_<name>.md under dir; returns the csv path.
std::filesystem::path write_report(const MetricsReport& report, const std::filesystem::path& dir);
MetricsReport read_report(const std::filesystem::path& csv_path);

struct GeneratedData {
  data::LabeledDataset raw;
  data::LabeledDataset cleaned;
  std::vector<GrayImage> raw_images;  // 8-bit intermediates, same order as the datasets
  std::vector<GrayImage> cleaned_images;
};

// For every class in class_names (label = position), draws per_class_count
// latents from Rng(derive(seed, label)), renders the generator output to 8 bits
// and cleans a copy of each image. Raw and cleaned sets therefore share latents.
// Throws DataError naming every class without a generator.
GeneratedData build_generated_data(const std::map<std::string, nn::Network>& generators,
                                   const std::vector<std::string>& class_names, std::size_t per_class_count,
                                   std::uint64_t seed, const cleaning::CleaningConfig& cleaning_cfg);

data::LabeledDataset build_generated_dataset(const std::map<std::string, nn::Network>& generators,
                                             const std::vector<std::string>& class_names,
                                             std::size_t per_class_count, std::uint64_t seed, bool cleaned,
                                             const cleaning::CleaningConfig& cleaning_cfg = {});

// One row per class with up to `per_row` samples each.
GrayImage class_preview_grid(const std::vector<GrayImage>& images, const std::vector<int>& labels,
                             std::size_t num_classes, std::size_t per_row = 10);

}  // namespace devgan::report
