#include "devgan/config.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace devgan {
namespace {

std::string joined(const CLI::ConfigItem& item) {
  std::string out;
  for (std::size_t i = 0; i < item.inputs.size(); ++i) out += (i ? "," : "") + item.inputs[i];
  return out;
}

std::string one(const CLI::ConfigItem& item) {
  if (item.inputs.size() != 1) throw UsageError("config key '" + item.fullname() + "' expects a single value");
  return item.inputs.front();
}

std::uint64_t to_u64(const CLI::ConfigItem& item) {
  const auto s = one(item);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw UsageError("config key '" + item.fullname() + "': '" + s + "' is not a non-negative integer");
  return v;
}

double to_double(const CLI::ConfigItem& item) {
  const auto s = one(item);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw UsageError("config key '" + item.fullname() + "': '" + s + "' is not a number");
  return v;
}

bool to_bool(const CLI::ConfigItem& item) {
  const auto s = one(item);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw UsageError("config key '" + item.fullname() + "': '" + s + "' is not a boolean");
}

// Shortest text that parses back to the same value.
template <class T>
std::string shortest(T v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string size_list(const std::vector<std::size_t>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out + "]";
}

// TOML basic string.
std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

void apply(RunConfig& c, const CLI::ConfigItem& item) {
  const std::string section = item.parents.empty() ? "" : item.parents.front();
  const std::string& key = item.name;
  if (item.parents.size() > 1) throw UsageError("nested config section in '" + item.fullname() + "'");
  auto unknown = [&] { throw UsageError("unknown config key '" + item.fullname() + "'"); };

  if (section == "run") {
    if (key == "seed") c.seed = to_u64(item);
    else if (key == "out_dir") c.out_dir = one(item);
    else if (key == "jobs") c.jobs = to_u64(item);
    else unknown();
  } else if (section == "data") {
    if (key == "root") c.data_root = one(item);
    else if (key == "test_root") c.test_root = one(item);
    else if (key == "classes") c.classes = joined(item);
    else if (key == "train_fraction") c.train_fraction = to_double(item);
    else if (key == "synthetic_per_class") c.synthetic_per_class = to_u64(item);
    else unknown();
  } else if (section == "classifier") {
    if (key == "which") c.classifiers = parse_classifier_list(joined(item));
    else if (key == "epochs") c.classifier_epochs = to_u64(item);
    else if (key == "batch_size") c.classifier_batch_size = to_u64(item);
    else unknown();
  } else if (section == "gan") {
    if (key == "latent_dim") c.gan.latent_dim = to_u64(item);
    else if (key == "iterations") c.gan.iterations = to_u64(item);
    else if (key == "checkpoint_every") c.gan.checkpoint_every = to_u64(item);
    else if (key == "batch_size") c.gan.batch_size = to_u64(item);
    else if (key == "learning_rate")
      c.gan.g_optimizer.learning_rate = c.gan.d_optimizer.learning_rate = static_cast<float>(to_double(item));
    else if (key == "beta1")
      c.gan.g_optimizer.beta1 = c.gan.d_optimizer.beta1 = static_cast<float>(to_double(item));
    else if (key == "generator_widths") c.gan.generator_widths = parse_size_list(joined(item));
    else if (key == "discriminator_widths") c.gan.discriminator_widths = parse_size_list(joined(item));
    else unknown();
  } else if (section == "cleaning") {
    if (key == "blur_sigma") c.cleaning.blur_sigma = to_double(item);
    else if (key == "skip_not") c.cleaning.skip_not = to_bool(item);
    else unknown();
  } else if (section == "generate") {
    if (key == "per_class_count") c.per_class_count = to_u64(item);
    else unknown();
  } else {
    unknown();
  }
}

}  // namespace

std::vector<clf::ClassifierId> parse_classifier_list(const std::string& csv) {
  std::vector<clf::ClassifierId> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = CLI::detail::trim_copy(tok);
    if (tok.empty()) continue;
    try {
      const auto id = clf::classifier_from_string(tok);
      if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    } catch (const FormatError& e) {
      throw UsageError(e.what());
    }
  }
  if (out.empty()) throw UsageError("empty classifier list");
  return out;
}

std::string classifier_list_string(const std::vector<clf::ClassifierId>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) out += (i ? "," : "") + std::string(clf::to_string(ids[i]));
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = CLI::detail::trim_copy(tok);
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || p != tok.data() + tok.size())
      throw UsageError("'" + tok + "' is not a positive integer");
    out.push_back(v);
  }
  return out;
}

void RunConfig::validate() const {
  try {
    if (jobs == 0) throw UsageError("jobs must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("train_fraction must be in (0,1)");
    if (synthetic_per_class < 2) throw UsageError("synthetic_per_class must be >= 2");
    if (classifiers.empty()) throw UsageError("no classifiers selected");
    if (classifier_epochs == 0 || classifier_batch_size == 0)
      throw UsageError("classifier epochs and batch_size must be >= 1");
    if (per_class_count == 0) throw UsageError("per_class_count must be >= 1");
    if (!(cleaning.blur_sigma > 0.0)) throw UsageError("blur_sigma must be > 0");
    if (out_dir.empty()) throw UsageError("out_dir must be set");
    gan.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
}

std::string RunConfig::resolved_data_root() const {
  if (!data_root.empty()) return data_root;
  if (const char* env = std::getenv(kDataRootEnv); env && *env) return env;
  return kSyntheticRoot;
}

std::string RunConfig::to_toml() const {
  std::ostringstream o;
  o << "[run]\n"
    << "seed = " << seed << "\n"
    << "out_dir = " << quoted(out_dir.string()) << "\n"
    << "jobs = " << jobs << "\n\n"
    << "[data]\n"
    << "root = " << quoted(data_root) << "\n"
    << "test_root = " << quoted(test_root) << "\n"
    << "classes = " << quoted(classes) << "\n"
    << "train_fraction = " << shortest(train_fraction) << "\n"
    << "synthetic_per_class = " << synthetic_per_class << "\n\n"
    << "[classifier]\n"
    << "which = " << quoted(classifier_list_string(classifiers)) << "\n"
    << "epochs = " << classifier_epochs << "\n"
    << "batch_size = " << classifier_batch_size << "\n\n"
    << "[gan]\n"
    << "latent_dim = " << gan.latent_dim << "\n"
    << "iterations = " << gan.iterations << "\n"
    << "checkpoint_every = " << gan.checkpoint_every << "\n"
    << "batch_size = " << gan.batch_size << "\n"
    << "learning_rate = " << shortest(gan.g_optimizer.learning_rate) << "\n"
    << "beta1 = " << shortest(gan.g_optimizer.beta1) << "\n"
    << "generator_widths = " << size_list(gan.generator_widths) << "\n"
    << "discriminator_widths = " << size_list(gan.discriminator_widths) << "\n\n"
    << "[cleaning]\n"
    << "blur_sigma = " << shortest(cleaning.blur_sigma) << "\n"
    << "skip_not = " << (cleaning.skip_not ? "true" : "false") << "\n\n"
    << "[generate]\n"
    << "per_class_count = " << per_class_count << "\n";
  return o.str();
}

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw UsageError(std::string("config parse error: ") + e.what());
  }
  for (const auto& item : items) {
    // section markers carry no value
    if (item.name == "++" || item.name == "--") continue;
    apply(base, item);
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), std::move(base));
}

}  // namespace devgan
