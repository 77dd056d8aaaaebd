#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "devgan/classifier.hpp"
#include "devgan/cleaning.hpp"
#include "devgan/gan.hpp"

namespace devgan {

// Bad configuration or command-line input (CLI exit code 1).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr const char* kDataRootEnv = "DEVGAN_DATA_ROOT";
// data_root value selecting the bundled procedural glyph set.
inline constexpr const char* kSyntheticRoot = "synthetic";

// Everything a pipeline run depends on. Loadable from one TOML-style file:
//
//   [run]        seed, out_dir, jobs
//   [data]       root, test_root, classes, train_fraction, synthetic_per_class
//   [classifier] which, epochs, batch_size
//   [gan]        latent_dim, iterations, checkpoint_every, batch_size,
//                learning_rate, beta1, generator_widths, discriminator_widths
//   [cleaning]   blur_sigma, skip_not
//   [generate]   per_class_count
struct RunConfig {
  std::uint64_t seed = 42;
  std::filesystem::path out_dir = "devgan_out";
  std::size_t jobs = 1;

  // Empty means: $DEVGAN_DATA_ROOT if set, else "synthetic".
  std::string data_root;
  std::string test_root;  // optional held-out tree; replaces the random split
  std::string classes = "digits";
  double train_fraction = 0.8;
  std::size_t synthetic_per_class = 200;

  std::vector<clf::ClassifierId> classifiers{std::begin(clf::kAllClassifiers), std::end(clf::kAllClassifiers)};
  std::size_t classifier_epochs = 30;
  std::size_t classifier_batch_size = 64;

  gan::GanConfig gan;
  cleaning::CleaningConfig cleaning;
  std::size_t per_class_count = 100;

  void validate() const;
  std::string resolved_data_root() const;
  // Serialized form accepted by parse_run_config (round-trips every field).
  std::string to_toml() const;
};

// Applies the file's keys on top of `base`. Unknown sections or keys and
// unparsable values throw UsageError.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

std::vector<clf::ClassifierId> parse_classifier_list(const std::string& csv);
std::string classifier_list_string(const std::vector<clf::ClassifierId>& ids);
std::vector<std::size_t> parse_size_list(const std::string& csv);

}  // namespace devgan
