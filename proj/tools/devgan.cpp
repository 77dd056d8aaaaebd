// devgan command-line driver.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "devgan/config.hpp"
#include "devgan/errors.hpp"
#include "devgan/pipeline.hpp"

using namespace devgan;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string list_str(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// Flag values; unset ones leave the config file (or built-in default) alone.
struct Overrides {
  std::string config_file;
  std::optional<std::string> out_dir, data_root, test_root, classes, classifier;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs, epochs, batch_size, synthetic_per_class, per_class;
  std::optional<double> train_fraction, blur_sigma;
  std::optional<std::size_t> iterations, checkpoint_every, gan_batch_size, latent_dim;
  std::optional<float> learning_rate;
  std::optional<std::string> generator_widths, discriminator_widths;
  bool skip_not = false;

  RunConfig resolve() const {
    RunConfig c = config_file.empty() ? RunConfig{} : load_run_config(config_file);
    if (out_dir) c.out_dir = *out_dir;
    if (data_root) c.data_root = *data_root;
    if (test_root) c.test_root = *test_root;
    if (classes) c.classes = *classes;
    if (classifier) c.classifiers = *classifier == "all" ? RunConfig{}.classifiers : parse_classifier_list(*classifier);
    if (seed) c.seed = *seed;
    if (jobs) c.jobs = *jobs;
    if (epochs) c.classifier_epochs = *epochs;
    if (batch_size) c.classifier_batch_size = *batch_size;
    if (synthetic_per_class) c.synthetic_per_class = *synthetic_per_class;
    if (per_class) c.per_class_count = *per_class;
    if (train_fraction) c.train_fraction = *train_fraction;
    if (blur_sigma) c.cleaning.blur_sigma = *blur_sigma;
    if (skip_not) c.cleaning.skip_not = true;
    if (iterations) c.gan.iterations = *iterations;
    if (checkpoint_every) c.gan.checkpoint_every = *checkpoint_every;
    if (gan_batch_size) c.gan.batch_size = *gan_batch_size;
    if (latent_dim) c.gan.latent_dim = *latent_dim;
    if (learning_rate) c.gan.g_optimizer.learning_rate = c.gan.d_optimizer.learning_rate = *learning_rate;
    if (generator_widths) c.gan.generator_widths = parse_size_list(*generator_widths);
    if (discriminator_widths) c.gan.discriminator_widths = parse_size_list(*discriminator_widths);
    c.validate();
    return c;
  }
};

const RunConfig kDefaults;

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config_file, "TOML-style run configuration; flags override its values")
      ->check(CLI::ExistingFile)
      ->default_str("none");
  sub->add_option("-o,--out-dir", o.out_dir, "Directory receiving every output")
      ->default_str(kDefaults.out_dir.string());
  sub->add_option("--seed", o.seed, "Master seed")->default_str(std::to_string(kDefaults.seed));
  sub->add_option("--data-root", o.data_root,
                  std::string("Dataset root with one directory per class, or 'synthetic' for the bundled glyph "
                              "set; falls back to $") +
                      kDataRootEnv)
      ->default_str("$" + std::string(kDataRootEnv) + " or synthetic");
  sub->add_option("--test-root", o.test_root, "Held-out tree used for validation instead of a random split")
      ->default_str("none");
  sub->add_option("--classes", o.classes, "Class subset: 'all', 'digits' or a comma-separated list")
      ->default_str(kDefaults.classes);
  sub->add_option("--train-fraction", o.train_fraction, "Per-class training share of the random split")
      ->default_str(fmt_g(kDefaults.train_fraction));
  sub->add_option("--synthetic-per-class", o.synthetic_per_class, "Samples per class of the synthetic set")
      ->default_str(std::to_string(kDefaults.synthetic_per_class));
}

void add_classifier_opts(CLI::App* sub, Overrides& o) {
  sub->add_option("--classifier", o.classifier, "c1, c2, c3, a comma-separated list or 'all'")
      ->default_str("all");
}

void add_training_opts(CLI::App* sub, Overrides& o) {
  sub->add_option("--epochs", o.epochs, "Classifier epochs")->default_str(std::to_string(kDefaults.classifier_epochs));
  sub->add_option("--batch-size", o.batch_size, "Classifier mini-batch size")
      ->default_str(std::to_string(kDefaults.classifier_batch_size));
}

void add_gan_opts(CLI::App* sub, Overrides& o) {
  const auto& g = kDefaults.gan;
  sub->add_option("--iterations", o.iterations, "GAN iterations per class")->default_str(std::to_string(g.iterations));
  sub->add_option("--checkpoint-every", o.checkpoint_every, "Checkpoint and sample grid cadence")
      ->default_str(std::to_string(g.checkpoint_every));
  sub->add_option("--gan-batch-size", o.gan_batch_size, "Real samples per adversarial step")
      ->default_str(std::to_string(g.batch_size));
  sub->add_option("--latent-dim", o.latent_dim, "Generator latent size")->default_str(std::to_string(g.latent_dim));
  sub->add_option("--learning-rate", o.learning_rate, "Adam learning rate for both networks")
      ->default_str(fmt_g(g.g_optimizer.learning_rate));
  sub->add_option("--generator-widths", o.generator_widths, "Hidden widths of the generator")
      ->default_str(list_str(g.generator_widths));
  sub->add_option("--discriminator-widths", o.discriminator_widths, "Hidden widths of the discriminator")
      ->default_str(list_str(g.discriminator_widths));
  sub->add_option("-j,--jobs", o.jobs, "Per-class GAN trainings run in parallel")
      ->default_str(std::to_string(kDefaults.jobs));
}

void add_cleaning_opts(CLI::App* sub, Overrides& o) {
  sub->add_flag("--skip-not", o.skip_not, "Omit the final bitwise NOT of the cleaning pipeline")->default_str("false");
  sub->add_option("--blur-sigma", o.blur_sigma, "Gaussian blur sigma")
      ->default_str(fmt_g(kDefaults.cleaning.blur_sigma));
}

void add_generate_opts(CLI::App* sub, Overrides& o) {
  sub->add_option("--per-class", o.per_class, "Generated samples per class")
      ->default_str(std::to_string(kDefaults.per_class_count));
}

void log_line(const std::string& m) { std::cerr << m << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-class GAN generation, cleaning and classifier scoring for handwritten glyphs"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  Overrides o;

  auto* tc = app.add_subcommand("train-classifiers", "Train classifiers on the original data (best/final reports)");
  add_common(tc, o);
  add_classifier_opts(tc, o);
  add_training_opts(tc, o);

  std::string gan_class;
  bool all_classes = false;
  auto* tg = app.add_subcommand("train-gan", "Train one GAN per class");
  add_common(tg, o);
  add_gan_opts(tg, o);
  auto* class_opt = tg->add_option("--class", gan_class, "Class to train")->default_str("none");
  auto* all_opt = tg->add_flag("--all-classes", all_classes, "Train every class of the subset")->default_str("false");
  class_opt->excludes(all_opt);

  auto* gen = app.add_subcommand("generate", "Write raw and cleaned generated images with preview grids");
  add_common(gen, o);
  add_generate_opts(gen, o);
  add_cleaning_opts(gen, o);

  std::string in_dir, out_dir;
  auto* cl = app.add_subcommand("clean", "Clean every PNG of a directory");
  cl->add_option("input", in_dir, "Directory of PNG images")->required();
  cl->add_option("output", out_dir, "Destination directory (same filenames)")->required();
  add_cleaning_opts(cl, o);

  auto* sc = app.add_subcommand("score", "Score classifiers on raw and cleaned generated data");
  add_common(sc, o);
  add_classifier_opts(sc, o);
  add_generate_opts(sc, o);
  add_cleaning_opts(sc, o);

  auto* rp = app.add_subcommand("reproduce", "Run classifiers, GANs, generation and scoring end to end");
  add_common(rp, o);
  add_classifier_opts(rp, o);
  add_training_opts(rp, o);
  add_gan_opts(rp, o);
  add_generate_opts(rp, o);
  add_cleaning_opts(rp, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (cl->parsed()) {
      cleaning::CleaningConfig cc;
      if (o.blur_sigma) cc.blur_sigma = *o.blur_sigma;
      cc.skip_not = o.skip_not;
      if (!(cc.blur_sigma > 0.0)) throw UsageError("blur_sigma must be > 0");
      const auto s = pipeline::clean_directory(in_dir, out_dir, cc, log_line);
      std::cout << "cleaned " << s.cleaned << " image(s) into " << out_dir << "\n";
      return s.failed.empty() ? kOk : kData;
    }

    const RunConfig cfg = o.resolve();
    if (tc->parsed()) {
      const auto rep = pipeline::train_classifiers(cfg, log_line);
      std::cout << report::render(rep, report::Format::markdown);
    } else if (tg->parsed()) {
      std::vector<std::string> classes;
      if (all_classes) {
        classes = pipeline::selected_classes(cfg);
      } else if (!gan_class.empty()) {
        classes = {gan_class};
      } else {
        throw UsageError("train-gan needs --class NAME or --all-classes");
      }
      for (const auto& [name, it] : pipeline::train_gans(cfg, classes, log_line))
        std::cout << name << ": trained to iteration " << it << "\n";
    } else if (gen->parsed()) {
      pipeline::generate(cfg, log_line);
    } else if (sc->parsed() || rp->parsed()) {
      const auto res = rp->parsed() ? pipeline::reproduce(cfg, log_line) : pipeline::score(cfg, log_line);
      std::cout << "raw generated\n" << report::render(res.raw, report::Format::markdown);
      std::cout << "cleaned generated\n" << report::render(res.cleaned, report::Format::markdown);
    }
    return kOk;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
