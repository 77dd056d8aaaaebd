#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "devgan/config.hpp"
#include "devgan/report.hpp"

namespace devgan::pipeline {

using Log = std::function<void(const std::string&)>;

// Output layout under cfg.out_dir:
//   config.toml                       resolved configuration
//   classifiers/<id>.bin              best-validation snapshot
//   classifiers/<id>_history.csv      per-epoch TrainReport
//   gan/<class>/ckpt_<it>.bin, grid_<it>.png, loss_log.csv
//   generated/{raw,cleaned}/<class>/<nnnn>.png
//   grid_generated_raw.png, grid_generated_cleaned.png
//   report_original.{csv,md}          best-validation epoch per classifier
//   report_original_final.{csv,md}    last epoch per classifier
//   report_generated_raw.{csv,md}, report_generated_cleaned.{csv,md}
namespace paths {
std::filesystem::path classifier(const RunConfig& cfg, clf::ClassifierId id);
std::filesystem::path history(const RunConfig& cfg, clf::ClassifierId id);
std::filesystem::path gan_dir(const RunConfig& cfg, const std::string& class_name);
}  // namespace paths

struct Splits {
  data::LabeledDataset train;
  data::LabeledDataset val;
};

// Unit-normalized train/validation data. "synthetic" uses the procedural glyph
// set; a root with Train/ and Test/ subtrees uses them as given; otherwise the
// classes under root are split by train_fraction. test_root overrides the split.
Splits load_original(const RunConfig& cfg);
std::vector<std::string> selected_classes(const RunConfig& cfg);

struct ClassifierRun {
  clf::ClassifierId id;
  clf::TrainReport history;
};

// Trains the configured classifiers and writes checkpoints, histories and the
// original-data reports. Returns the best-epoch report.
report::MetricsReport train_classifiers(const RunConfig& cfg, const Log& log = {});

// Trains one GAN per class (in parallel when cfg.jobs > 1). Returns the final
// checkpoint iteration per class.
std::map<std::string, std::uint64_t> train_gans(const RunConfig& cfg, const std::vector<std::string>& class_names,
                                                const Log& log = {});

// Highest ckpt_<n>.bin in dir (non-finite aborts excluded); nullopt if none.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir);

// Latest generator per class. Throws DataError listing every class without one.
std::map<std::string, nn::Network> load_generators(const RunConfig& cfg, const std::vector<std::string>& class_names);

// Loads cfg.classifiers from disk. Throws DataError listing missing files.
std::vector<std::pair<std::string, nn::Network>> load_classifiers(const RunConfig& cfg);

// Generated raw + cleaned images as PNG trees and preview grids.
report::GeneratedData generate(const RunConfig& cfg, const Log& log = {});

struct ScoreResult {
  report::MetricsReport raw;
  report::MetricsReport cleaned;
  std::vector<std::string> regressions;  // classifiers whose accuracy dropped after cleaning
};

// Rebuilds the generated sets from the same latents, scores every classifier
// on both and writes the two reports and grids.
ScoreResult score(const RunConfig& cfg, const Log& log = {});

struct CleanSummary {
  std::size_t cleaned = 0;
  std::vector<std::string> skipped;  // non-PNG names
  std::vector<std::string> failed;   // unreadable PNGs with reasons
  std::size_t already_binary = 0;
};

// Cleans every PNG in in_dir into out_dir under the same name. Throws
// DataError when no PNG is present or every PNG fails.
CleanSummary clean_directory(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir,
                             const cleaning::CleaningConfig& cc, const Log& log = {});

// Full sequence: classifiers, per-class GANs, generate, score.
ScoreResult reproduce(const RunConfig& cfg, const Log& log = {});

void write_resolved_config(const RunConfig& cfg);

}  // namespace devgan::pipeline
