#include "devgan/gan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "devgan/errors.hpp"

namespace devgan::gan {
namespace {

namespace fs = std::filesystem;
using nn::LayerSpec;

// Stream labels for Rng::derive.
constexpr std::uint64_t kGeneratorInit = 0x67656e;     // "gen"
constexpr std::uint64_t kDiscriminatorInit = 0x646973; // "dis"
constexpr std::uint64_t kIterationStream = 0x69746572; // "iter"
constexpr std::uint64_t kGridStream = 0x67726964;      // "grid"

Tensor constant_labels(std::size_t ones, std::size_t zeros) {
  Tensor y({ones + zeros, 1}, 0.0f);
  for (std::size_t i = 0; i < ones; ++i) y[i] = 1.0f;
  return y;
}

bool is_image_shape(const Shape& s) { return s.size() == 3 && s[2] == 1; }

std::string ckpt_name(std::uint64_t iter, const char* suffix = "") {
  return "ckpt_" + std::to_string(iter) + suffix + ".bin";
}

void append_row(std::ostream& out, const LossRow& r) {
  char line[96];
  std::snprintf(line, sizeof line, "%llu,%.9g,%.9g\n", static_cast<unsigned long long>(r.iteration), r.d_loss,
                r.g_loss);
  out << line;
}

// Restores per-layer trainable flags on scope exit.
class FreezeGuard {
 public:
  explicit FreezeGuard(nn::Network& net) : net_(net) {
    for (const auto& l : net.layers()) flags_.push_back(l.trainable);
    net.set_trainable(false);
  }
  ~FreezeGuard() {
    for (std::size_t i = 0; i < flags_.size(); ++i) net_.layers()[i].trainable = flags_[i];
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  nn::Network& net_;
  std::vector<bool> flags_;
};

}  // namespace

void GanConfig::validate() const {
  if (latent_dim == 0) throw ContractError("latent_dim must be >= 1");
  if (batch_size < 2) throw ContractError("GAN batch_size must be >= 2");
  if (checkpoint_every == 0) throw ContractError("checkpoint_every must be >= 1");
  if (generator_widths.empty() || discriminator_widths.empty())
    throw ContractError("generator and discriminator need at least one hidden layer");
  for (auto w : generator_widths)
    if (w == 0) throw ContractError("generator widths must be >= 1");
  for (auto w : discriminator_widths)
    if (w == 0) throw ContractError("discriminator widths must be >= 1");
  if (!(leaky_alpha > 0.0f)) throw ContractError("leaky_alpha must be > 0");
  if (!(bn_momentum > 0.0f && bn_momentum < 1.0f)) throw ContractError("bn_momentum must be in (0,1)");
  if (image_shape.empty() || shape_size(image_shape) == 0) throw ContractError("image_shape must be non-empty");
  g_optimizer.validate();
  d_optimizer.validate();
}

nn::Network build_generator(const GanConfig& cfg) {
  cfg.validate();
  std::vector<LayerSpec> specs;
  for (auto w : cfg.generator_widths) {
    specs.push_back(LayerSpec::make_dense(w));
    specs.push_back(LayerSpec::make_activation(nn::Activation::leaky_relu, cfg.leaky_alpha));
    specs.push_back(LayerSpec::make_batchnorm(cfg.bn_momentum));
  }
  specs.push_back(LayerSpec::make_dense(shape_size(cfg.image_shape)));
  specs.push_back(LayerSpec::make_activation(nn::Activation::tanh));
  specs.push_back(LayerSpec::make_reshape(cfg.image_shape));
  return nn::Network({cfg.latent_dim}, std::move(specs), Rng::derive(cfg.seed, kGeneratorInit),
                     {cfg.g_optimizer, nn::LossKind::binary_ce});
}

nn::Network build_discriminator(const GanConfig& cfg) {
  cfg.validate();
  std::vector<LayerSpec> specs{LayerSpec::make_flatten()};
  for (auto w : cfg.discriminator_widths) {
    specs.push_back(LayerSpec::make_dense(w));
    specs.push_back(LayerSpec::make_activation(nn::Activation::leaky_relu, cfg.leaky_alpha));
  }
  specs.push_back(LayerSpec::make_dense(1));
  specs.push_back(LayerSpec::make_activation(nn::Activation::sigmoid));
  return nn::Network(cfg.image_shape, std::move(specs), Rng::derive(cfg.seed, kDiscriminatorInit),
                     {cfg.d_optimizer, nn::LossKind::binary_ce});
}

StepLosses adversarial_step(nn::Network& gen, nn::Network& disc, const Tensor& real_batch, Rng& rng,
                            const GanConfig& cfg, const StepObserver* observer) {
  if (real_batch.rank() == 0 || real_batch.dim(0) < 2)
    throw ContractError("adversarial_step needs a real batch of at least 2 samples, got " +
                        shape_to_string(real_batch.shape()));
  const std::size_t b = real_batch.dim(0);
  StepLosses out;

  // Discriminator: real and generated samples in one batch.
  {
    const Tensor fake = gen.forward(sample_gaussian(rng, {b, cfg.latent_dim}), nn::Mode::train);
    const Tensor both = concat_rows(real_batch, fake);
    const Tensor p = disc.forward(both, nn::Mode::train);
    const auto fl = nn::fused_loss(nn::LossKind::binary_ce, p, constant_labels(b, b));
    disc.backward(fl.grad, nn::GradFrom::logits);
    disc.update();
    out.d_loss = fl.value;
  }
  if (observer && observer->after_d_step) observer->after_d_step(disc);

  // Generator: gradients flow through the frozen discriminator.
  {
    const Tensor fake = gen.forward(sample_gaussian(rng, {b, cfg.latent_dim}), nn::Mode::train);
    Tensor d_fake;
    double value = 0.0;
    {
      FreezeGuard freeze(disc);
      const Tensor p = disc.forward(fake, nn::Mode::train);
      const auto fl = nn::fused_loss(nn::LossKind::binary_ce, p, constant_labels(b, 0));
      d_fake = disc.backward(fl.grad, nn::GradFrom::logits);
      value = fl.value;
    }
    gen.backward(d_fake);
    gen.update();
    out.g_loss = value;
  }
  if (observer && observer->after_g_step) observer->after_g_step(disc);
  return out;
}

void write_gan_checkpoint(const GanCheckpoint& ckpt, const fs::path& path) {
  nn::write_checkpoint({ckpt.seed, ckpt.iteration, {{"generator", ckpt.generator}, {"discriminator", ckpt.discriminator}}},
                       path);
}

GanCheckpoint read_gan_checkpoint(const fs::path& path) {
  const auto ck = nn::read_checkpoint(path);
  return {ck.get("generator"), ck.get("discriminator"), ck.step, ck.seed};
}

std::vector<LossRow> read_loss_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open loss log " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "iteration,d_loss,g_loss") throw FormatError("unexpected loss log header in " + path.string());
  std::vector<LossRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LossRow r;
    unsigned long long it = 0;
    if (std::sscanf(line.c_str(), "%llu,%lf,%lf", &it, &r.d_loss, &r.g_loss) != 3)
      throw FormatError("bad loss log line '" + line + "' in " + path.string());
    r.iteration = it;
    rows.push_back(r);
  }
  return rows;
}

GanCheckpoint train_gan(const data::LabeledDataset& class_slice, const GanConfig& cfg, const fs::path& out_dir,
                        const GanCheckpoint* resume, const std::function<void(const TrainProgress&)>& progress) {
  cfg.validate();
  if (class_slice.size() == 0) throw DataError("train_gan: empty dataset");
  if (class_slice.norm != data::Norm::symmetric)
    throw ContractError("train_gan expects symmetric ([-1,1]) normalization");
  const Shape& shape = class_slice.images.shape();
  if (!std::equal(shape.begin() + 1, shape.end(), cfg.image_shape.begin(), cfg.image_shape.end()))
    throw ShapeError("train_gan: samples " + shape_to_string(shape) + " do not match image_shape " +
                     shape_to_string(cfg.image_shape));

  GanCheckpoint state = resume ? *resume : GanCheckpoint{build_generator(cfg), build_discriminator(cfg), 0, cfg.seed};
  if (resume && resume->seed != cfg.seed)
    throw ContractError("resume checkpoint was trained with seed " + std::to_string(resume->seed) + ", config has " +
                        std::to_string(cfg.seed));

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  // Keep the log consistent with the resume point.
  const fs::path log_path = out_dir / "loss_log.csv";
  std::vector<LossRow> kept;
  if (resume && fs::exists(log_path))
    for (const auto& r : read_loss_log(log_path))
      if (r.iteration <= state.iteration) kept.push_back(r);
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw DataError("cannot write " + log_path.string());
  log << "iteration,d_loss,g_loss\n";
  for (const auto& r : kept) append_row(log, r);

  const std::size_t n = class_slice.size();
  const std::size_t sample = shape_size(cfg.image_shape);
  Shape batch_shape{cfg.batch_size};
  batch_shape.insert(batch_shape.end(), cfg.image_shape.begin(), cfg.image_shape.end());
  const std::uint64_t stream = Rng::derive(cfg.seed, kIterationStream);

  for (std::uint64_t it = state.iteration + 1; it <= cfg.iterations; ++it) {
    Rng rng(Rng::derive(stream, it));
    Tensor real(batch_shape);
    for (std::size_t k = 0; k < cfg.batch_size; ++k) {
      const std::size_t src = rng.index(n);
      std::copy_n(class_slice.images.raw() + src * sample, sample, real.raw() + k * sample);
    }
    const auto losses = adversarial_step(state.generator, state.discriminator, real, rng, cfg);
    state.iteration = it;
    append_row(log, {it, losses.d_loss, losses.g_loss});

    if (!std::isfinite(losses.d_loss) || !std::isfinite(losses.g_loss)) {
      log.flush();
      write_gan_checkpoint(state, out_dir / ckpt_name(it, "_nan"));
      throw NumericError("non-finite GAN loss at iteration " + std::to_string(it) + " (d_loss " +
                         std::to_string(losses.d_loss) + ", g_loss " + std::to_string(losses.g_loss) +
                         "); diagnostic checkpoint written to " + (out_dir / ckpt_name(it, "_nan")).string());
    }
    if (it % cfg.checkpoint_every == 0) {
      log.flush();
      write_gan_checkpoint(state, out_dir / ckpt_name(it));
      if (is_image_shape(cfg.image_shape))
        write_png(sample_grid(state.generator, cfg.seed), out_dir / ("grid_" + std::to_string(it) + ".png"));
    }
    if (progress) progress({it, cfg.iterations, losses});
  }
  log.flush();
  if (!log) throw DataError("failed writing " + log_path.string());
  return state;
}

Tensor generate(const nn::Network& generator, std::size_t count, Rng& rng) {
  if (count == 0) throw ContractError("generate: count must be >= 1");
  if (generator.input_shape().size() != 1) throw ShapeError("generate: generator input must be a latent vector");
  return generator.predict(sample_gaussian(rng, {count, generator.input_shape()[0]}));
}

std::vector<GrayImage> to_gray_images(const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(3) != 1)
    throw ShapeError("to_gray_images expects (n,h,w,1), got " + shape_to_string(batch.shape()));
  const std::size_t n = batch.dim(0), h = batch.dim(1), w = batch.dim(2);
  std::vector<GrayImage> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    GrayImage img(w, h);
    for (std::size_t p = 0; p < w * h; ++p)
      img.pixels[p] = data::denormalize_pixel(batch[i * w * h + p], data::Norm::symmetric);
    out.push_back(std::move(img));
  }
  return out;
}

GrayImage sample_grid(const nn::Network& generator, std::uint64_t seed, std::size_t side) {
  Rng rng(Rng::derive(seed, kGridStream));
  return tile_grid(to_gray_images(generate(generator, side * side, rng)), side, side);
}

}  // namespace devgan::gan
