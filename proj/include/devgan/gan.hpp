#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "devgan/checkpoint.hpp"
#include "devgan/dataset.hpp"
#include "devgan/image.hpp"
#include "devgan/network.hpp"

namespace devgan::gan {

struct GanConfig {
  std::size_t latent_dim = 100;
  std::size_t iterations = 10000;
  std::size_t checkpoint_every = 500;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  nn::OptimizerConfig g_optimizer = nn::OptimizerConfig::adam(2e-4f, 0.5f);
  nn::OptimizerConfig d_optimizer = nn::OptimizerConfig::adam(2e-4f, 0.5f);
  std::vector<std::size_t> generator_widths{256, 512, 1024};
  std::vector<std::size_t> discriminator_widths{512, 256};
  float leaky_alpha = 0.2f;
  float bn_momentum = 0.8f;
  // Per-sample output shape of the generator and input of the discriminator.
  Shape image_shape{data::kImageSide, data::kImageSide, 1};

  // Throws ContractError for an unusable configuration.
  void validate() const;
};

// Dense -> LeakyReLU -> BatchNorm per hidden width, then Dense -> tanh -> reshape.
nn::Network build_generator(const GanConfig& cfg);
// Flatten -> (Dense -> LeakyReLU) per hidden width -> Dense 1 -> sigmoid.
nn::Network build_discriminator(const GanConfig& cfg);

struct StepLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

// Optional probe called between the discriminator and generator sub-steps and
// after the generator sub-step; used to verify the frozen-discriminator rule.
struct StepObserver {
  std::function<void(const nn::Network& disc)> after_d_step;
  std::function<void(const nn::Network& disc)> after_g_step;
};

// One discriminator update on real (label 1) plus generated (label 0) samples
// in a single batch, then one generator update through the frozen
// discriminator against label 1. real_batch is in [-1,1].
StepLosses adversarial_step(nn::Network& gen, nn::Network& disc, const Tensor& real_batch, Rng& rng,
                            const GanConfig& cfg, const StepObserver* observer = nullptr);

struct GanCheckpoint {
  nn::Network generator;
  nn::Network discriminator;
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
};

void write_gan_checkpoint(const GanCheckpoint& ckpt, const std::filesystem::path& path);
GanCheckpoint read_gan_checkpoint(const std::filesystem::path& path);

struct LossRow {
  std::uint64_t iteration = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
};

struct TrainProgress {
  std::uint64_t iteration = 0;
  std::uint64_t total = 0;
  StepLosses losses;
};

// Runs iterations (resume->iteration, cfg.iterations]. Every iteration draws
// its randomness from Rng(derive(cfg.seed, iteration)), so a resumed run
// repeats an uninterrupted one exactly. Writes under out_dir:
//   ckpt_<iter>.bin, grid_<iter>.png   every checkpoint_every iterations
//   loss_log.csv                       iteration,d_loss,g_loss
// A non-finite loss writes ckpt_<iter>_nan.bin and throws NumericError.
GanCheckpoint train_gan(const data::LabeledDataset& class_slice, const GanConfig& cfg,
                        const std::filesystem::path& out_dir, const GanCheckpoint* resume = nullptr,
                        const std::function<void(const TrainProgress&)>& progress = {});

// Generator in inference mode on fresh standard-normal latents; values in [-1,1].
Tensor generate(const nn::Network& generator, std::size_t count, Rng& rng);

// Symmetric-range batch to 8-bit images: round((v + 1) * 127.5).
std::vector<GrayImage> to_gray_images(const Tensor& batch);

// 5x5 mosaic of samples drawn from a fixed grid latent stream of `seed`.
GrayImage sample_grid(const nn::Network& generator, std::uint64_t seed, std::size_t side = 5);

std::vector<LossRow> read_loss_log(const std::filesystem::path& path);

}  // namespace devgan::gan
