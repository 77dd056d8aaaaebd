#include "devgan/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <regex>
#include <thread>

#include "devgan/checkpoint.hpp"
#include "devgan/errors.hpp"
#include "devgan/glyphs.hpp"

namespace devgan::pipeline {
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kGanSeedStream = 0x67616e73;   // "gans"
constexpr std::uint64_t kGlyphStream = 0x676c7970;     // "glyp"
constexpr std::uint64_t kSampleStream = 0x73616d70;    // "samp"
constexpr std::uint64_t kClassifierStream = 0x636c66;  // "clf"

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// Keeps only `names` (in that order) and relabels them 0..k-1.
data::LabeledDataset restrict_classes(const data::LabeledDataset& ds, const std::vector<std::string>& names) {
  std::vector<int> remap(ds.num_classes(), -1);
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto it = std::find(ds.class_names.begin(), ds.class_names.end(), names[k]);
    if (it == ds.class_names.end()) throw DataError("unknown class '" + names[k] + "'");
    remap[static_cast<std::size_t>(it - ds.class_names.begin())] = static_cast<int>(k);
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (remap[static_cast<std::size_t>(ds.labels[i])] >= 0) keep.push_back(i);
  auto out = data::select(ds, keep);
  for (auto& l : out.labels) l = remap[static_cast<std::size_t>(l)];
  out.class_names = names;
  return out;
}

std::vector<std::string> synthetic_names() {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < data::kGlyphClasses; ++k) names.push_back("digit_" + std::to_string(k));
  return names;
}

std::vector<std::string> sorted_selection(const std::vector<std::string>& available, const std::string& selector) {
  auto names = data::resolve_class_subset(available, selector);
  std::sort(names.begin(), names.end());
  return names;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void write_generated_tree(const fs::path& root, const std::vector<GrayImage>& imgs, const std::vector<int>& labels,
                          const std::vector<std::string>& names) {
  fs::remove_all(root);
  std::vector<std::size_t> counter(names.size(), 0);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const auto k = static_cast<std::size_t>(labels[i]);
    char file[32];
    std::snprintf(file, sizeof file, "%04zu.png", counter[k]++);
    const auto dir = root / names[k];
    fs::create_directories(dir);
    write_png(imgs[i], dir / file);
  }
}

}  // namespace

namespace paths {
fs::path classifier(const RunConfig& cfg, clf::ClassifierId id) {
  return cfg.out_dir / "classifiers" / (std::string(clf::to_string(id)) + ".bin");
}
fs::path history(const RunConfig& cfg, clf::ClassifierId id) {
  return cfg.out_dir / "classifiers" / (std::string(clf::to_string(id)) + "_history.csv");
}
fs::path gan_dir(const RunConfig& cfg, const std::string& class_name) { return cfg.out_dir / "gan" / class_name; }
}  // namespace paths

void write_resolved_config(const RunConfig& cfg) { write_text(cfg.out_dir / "config.toml", cfg.to_toml()); }

std::vector<std::string> selected_classes(const RunConfig& cfg) {
  const auto root = cfg.resolved_data_root();
  if (root == kSyntheticRoot) return sorted_selection(synthetic_names(), cfg.classes);
  const fs::path train_root = fs::is_directory(fs::path(root) / "Train") ? fs::path(root) / "Train" : fs::path(root);
  return sorted_selection(data::list_classes(train_root), cfg.classes);
}

Splits load_original(const RunConfig& cfg) {
  cfg.validate();
  const auto root = cfg.resolved_data_root();
  const auto names = selected_classes(cfg);
  if (names.size() < 2) throw DataError("need at least 2 classes, selection gives " + std::to_string(names.size()));

  if (root == kSyntheticRoot) {
    const auto all = data::make_glyph_dataset(cfg.synthetic_per_class, Rng::derive(cfg.seed, kGlyphStream),
                                              data::Norm::unit);
    auto [train, val] = data::split(restrict_classes(all, names), {cfg.train_fraction, cfg.seed});
    return {std::move(train), std::move(val)};
  }
  const fs::path r(root);
  if (!cfg.test_root.empty()) {
    auto [train, val] = data::load_train_test(r, cfg.test_root, names, data::Norm::unit);
    return {std::move(train), std::move(val)};
  }
  if (fs::is_directory(r / "Train") && fs::is_directory(r / "Test")) {
    auto [train, val] = data::load_train_test(r / "Train", r / "Test", names, data::Norm::unit);
    return {std::move(train), std::move(val)};
  }
  auto [train, val] = data::split(data::load_dataset(r, names, data::Norm::unit), {cfg.train_fraction, cfg.seed});
  return {std::move(train), std::move(val)};
}

report::MetricsReport train_classifiers(const RunConfig& cfg, const Log& log) {
  const auto splits = load_original(cfg);
  write_resolved_config(cfg);
  say(log, "classifier data: " + std::to_string(splits.train.size()) + " train / " +
               std::to_string(splits.val.size()) + " validation samples, " +
               std::to_string(splits.train.num_classes()) + " classes");
  report::MetricsReport best{"original", {}}, final{"original_final", {}};
  for (auto id : cfg.classifiers) {
    const std::string name(clf::to_string(id));
    clf::TrainConfig tc{cfg.classifier_epochs, cfg.classifier_batch_size,
                        Rng::derive(Rng::derive(cfg.seed, kClassifierStream), static_cast<std::uint64_t>(id))};
    clf::TrainResult res;
    try {
      res = clf::train_classifier(id, splits.train, splits.val, tc, [&](const clf::EpochRow& r) {
        say(log, name + " epoch " + std::to_string(r.epoch) + "/" + std::to_string(tc.epochs) + " loss " +
                     pct(r.loss) + " acc " + pct(r.accuracy) + " val_loss " + pct(r.val_loss) + " val_acc " +
                     pct(r.val_accuracy));
      });
    } catch (const clf::TrainingDiverged& e) {
      write_text(paths::history(cfg, id), e.report.to_csv());
      throw;
    }
    write_text(paths::history(cfg, id), res.report.to_csv());
    nn::save_network(res.net, paths::classifier(cfg, id));
    const auto& b = res.report.best();
    const auto& l = res.report.last();
    best.rows.push_back({name, b.loss, b.accuracy, b.val_loss, b.val_accuracy});
    final.rows.push_back({name, l.loss, l.accuracy, l.val_loss, l.val_accuracy});
  }
  report::write_report(best, cfg.out_dir);
  report::write_report(final, cfg.out_dir);
  return best;
}

std::map<std::string, std::uint64_t> train_gans(const RunConfig& cfg, const std::vector<std::string>& class_names,
                                                const Log& log) {
  const auto splits = load_original(cfg);
  write_resolved_config(cfg);
  const auto sym = data::renormalized(splits.train, data::Norm::symmetric);
  std::vector<int> labels;
  for (const auto& c : class_names) {
    const auto it = std::find(sym.class_names.begin(), sym.class_names.end(), c);
    if (it == sym.class_names.end()) throw DataError("unknown class '" + c + "'");
    labels.push_back(static_cast<int>(it - sym.class_names.begin()));
  }

  std::mutex log_mutex;
  auto locked_log = [&](const std::string& m) {
    std::lock_guard<std::mutex> lock(log_mutex);
    say(log, m);
  };
  std::vector<std::uint64_t> finished(class_names.size(), 0);
  std::vector<std::exception_ptr> errors(class_names.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < class_names.size();) {
      try {
        gan::GanConfig gc = cfg.gan;
        gc.seed = Rng::derive(Rng::derive(cfg.seed, kGanSeedStream), static_cast<std::uint64_t>(labels[i]));
        const auto dir = paths::gan_dir(cfg, class_names[i]);
        fs::remove_all(dir);
        const auto slice = data::class_slice(sym, labels[i]);
        locked_log("gan " + class_names[i] + ": " + std::to_string(slice.size()) + " real samples, " +
                   std::to_string(gc.iterations) + " iterations");
        const std::uint64_t every = std::max<std::uint64_t>(1, gc.iterations / 10);
        const auto state = gan::train_gan(slice, gc, dir, nullptr, [&](const gan::TrainProgress& p) {
          if (p.iteration % every == 0)
            locked_log("gan " + class_names[i] + " iter " + std::to_string(p.iteration) + "/" +
                       std::to_string(p.total) + " d_loss " + pct(p.losses.d_loss) + " g_loss " +
                       pct(p.losses.g_loss));
        });
        finished[i] = state.iteration;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(cfg.jobs, class_names.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::map<std::string, std::uint64_t> out;
  for (std::size_t i = 0; i < class_names.size(); ++i) out[class_names[i]] = finished[i];
  return out;
}

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) return std::nullopt;
  static const std::regex pattern(R"(ckpt_(\d+)\.bin)");
  std::optional<fs::path> best;
  std::uint64_t best_it = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const auto name = e.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    const auto it = std::stoull(m[1].str());
    if (!best || it > best_it) {
      best = e.path();
      best_it = it;
    }
  }
  return best;
}

std::map<std::string, nn::Network> load_generators(const RunConfig& cfg, const std::vector<std::string>& class_names) {
  std::map<std::string, nn::Network> out;
  std::string missing;
  for (const auto& c : class_names) {
    const auto p = latest_checkpoint(paths::gan_dir(cfg, c));
    if (!p) {
      missing += (missing.empty() ? "" : ", ") + paths::gan_dir(cfg, c).string();
      continue;
    }
    out.emplace(c, gan::read_gan_checkpoint(*p).generator);
  }
  if (!missing.empty()) throw DataError("missing GAN checkpoints: " + missing);
  return out;
}

std::vector<std::pair<std::string, nn::Network>> load_classifiers(const RunConfig& cfg) {
  std::vector<std::pair<std::string, nn::Network>> out;
  std::string missing;
  for (auto id : cfg.classifiers) {
    const auto p = paths::classifier(cfg, id);
    if (!fs::exists(p)) {
      missing += (missing.empty() ? "" : ", ") + p.string();
      continue;
    }
    out.emplace_back(std::string(clf::to_string(id)), nn::load_network(p));
  }
  if (!missing.empty()) throw DataError("missing classifier checkpoints: " + missing);
  return out;
}

namespace {

report::GeneratedData build(const RunConfig& cfg, const std::vector<std::string>& names) {
  return report::build_generated_data(load_generators(cfg, names), names, cfg.per_class_count,
                                      Rng::derive(cfg.seed, kSampleStream), cfg.cleaning);
}

void write_grids(const RunConfig& cfg, const report::GeneratedData& g, std::size_t classes) {
  fs::create_directories(cfg.out_dir);
  write_png(report::class_preview_grid(g.raw_images, g.raw.labels, classes),
            cfg.out_dir / "grid_generated_raw.png");
  write_png(report::class_preview_grid(g.cleaned_images, g.cleaned.labels, classes),
            cfg.out_dir / "grid_generated_cleaned.png");
}

}  // namespace

report::GeneratedData generate(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  const auto names = selected_classes(cfg);
  auto g = build(cfg, names);
  write_generated_tree(cfg.out_dir / "generated" / "raw", g.raw_images, g.raw.labels, names);
  write_generated_tree(cfg.out_dir / "generated" / "cleaned", g.cleaned_images, g.cleaned.labels, names);
  write_grids(cfg, g, names.size());
  say(log, "generated " + std::to_string(g.raw.size()) + " raw and cleaned images under " +
               (cfg.out_dir / "generated").string());
  return g;
}

ScoreResult score(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  const auto names = selected_classes(cfg);
  const auto classifiers = load_classifiers(cfg);
  const auto g = build(cfg, names);
  write_grids(cfg, g, names.size());
  std::vector<report::NamedNetwork> refs;
  for (const auto& [n, net] : classifiers) refs.emplace_back(n, &net);
  ScoreResult out{report::score_dataset(refs, g.raw, "generated_raw"),
                  report::score_dataset(refs, g.cleaned, "generated_cleaned"),
                  {}};
  report::write_report(out.raw, cfg.out_dir);
  report::write_report(out.cleaned, cfg.out_dir);
  for (std::size_t i = 0; i < out.raw.rows.size(); ++i) {
    const auto& r = out.raw.rows[i];
    const auto& c = out.cleaned.rows[i];
    say(log, r.classifier + ": raw acc " + pct(r.accuracy) + " -> cleaned acc " + pct(c.accuracy));
    if (c.accuracy < r.accuracy) out.regressions.push_back(r.classifier);
  }
  for (const auto& name : out.regressions)
    say(log, "warning: cleaning lowered " + name + "'s accuracy on generated data");
  return out;
}

CleanSummary clean_directory(const fs::path& in_dir, const fs::path& out_dir, const cleaning::CleaningConfig& cc,
                             const Log& log) {
  if (!fs::is_directory(in_dir)) throw DataError("input directory " + in_dir.string() + " does not exist");
  std::vector<fs::path> pngs;
  CleanSummary s;
  for (const auto& e : fs::directory_iterator(in_dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") pngs.push_back(e.path());
    else s.skipped.push_back(e.path().filename().string());
  }
  std::sort(pngs.begin(), pngs.end());
  std::sort(s.skipped.begin(), s.skipped.end());
  if (pngs.empty()) throw DataError("no images found in " + in_dir.string());
  if (!s.skipped.empty()) {
    std::string list;
    for (const auto& n : s.skipped) list += (list.empty() ? "" : ", ") + n;
    say(log, "warning: skipped non-PNG files: " + list);
  }
  fs::create_directories(out_dir);
  for (const auto& p : pngs) {
    try {
      const auto img = read_png(p);
      if (img.is_binary()) ++s.already_binary;
      write_png(cleaning::clean(img, cc), out_dir / p.filename());
      ++s.cleaned;
    } catch (const std::exception& e) {
      s.failed.push_back(p.filename().string() + ": " + e.what());
    }
  }
  for (const auto& f : s.failed) say(log, "error: " + f);
  if (s.already_binary > 0 && !cc.skip_not)
    say(log, "warning: " + std::to_string(s.already_binary) +
                 " input(s) are already binary; cleaning them again flips polarity with the final NOT "
                 "(use --skip-not if they were cleaned before)");
  if (s.cleaned == 0) throw DataError("all " + std::to_string(pngs.size()) + " images failed to load");
  return s;
}

ScoreResult reproduce(const RunConfig& cfg, const Log& log) {
  cfg.validate();
  say(log, "== training classifiers");
  train_classifiers(cfg, log);
  say(log, "== training per-class GANs");
  train_gans(cfg, selected_classes(cfg), log);
  say(log, "== generating and cleaning");
  generate(cfg, log);
  say(log, "== scoring");
  return score(cfg, log);
}

}  // namespace devgan::pipeline
