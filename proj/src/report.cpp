#include "devgan/report.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "devgan/classifier.hpp"
#include "devgan/errors.hpp"

namespace devgan::report {
namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string opt4(const std::optional<double>& v) { return v ? fixed4(*v) : std::string(); }

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, std::size_t line_no) {
  if (s.empty()) throw FormatError("report line " + std::to_string(line_no) + ": missing number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end != s.c_str() + s.size())
    throw FormatError("report line " + std::to_string(line_no) + ": bad number '" + s + "'");
  return v;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace

bool MetricsReport::has_validation() const {
  for (const auto& r : rows)
    if (r.val_loss || r.val_accuracy) return true;
  return false;
}

const MetricsRow* MetricsReport::find(const std::string& classifier) const {
  for (const auto& r : rows)
    if (r.classifier == classifier) return &r;
  return nullptr;
}

MetricsReport score_dataset(const std::vector<NamedNetwork>& classifiers, const data::LabeledDataset& ds,
                            const std::string& name) {
  if (ds.norm != data::Norm::unit) throw ContractError("score_dataset expects unit-normalized data");
  MetricsReport rep{name, {}};
  for (const auto& [id, net] : classifiers) {
    if (!net) throw ContractError("classifier '" + id + "' is null");
    if (net->output_shape() != Shape{ds.num_classes()})
      throw ShapeError("classifier '" + id + "' outputs " + shape_to_string(net->output_shape()) + " but '" + name +
                       "' has " + std::to_string(ds.num_classes()) + " classes");
    const auto ev = clf::evaluate(*net, ds);
    rep.rows.push_back({id, ev.loss, ev.accuracy, std::nullopt, std::nullopt});
  }
  return rep;
}

std::string render(const MetricsReport& report, Format format) {
  const bool val = report.has_validation();
  std::vector<std::string> header{"classifier", "loss", "accuracy"};
  if (val) {
    header.push_back("val_loss");
    header.push_back("val_accuracy");
  }
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : report.rows) {
    std::vector<std::string> row{r.classifier, fixed4(r.loss), fixed4(r.accuracy)};
    if (val) {
      row.push_back(opt4(r.val_loss));
      row.push_back(opt4(r.val_accuracy));
    }
    cells.push_back(std::move(row));
  }

  std::ostringstream out;
  if (format == Format::csv) {
    auto emit = [&](const std::vector<std::string>& row) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << '\n';
    };
    emit(header);
    for (const auto& row : cells) emit(row);
  } else {
    auto emit = [&](const std::vector<std::string>& row) {
      out << '|';
      for (const auto& c : row) out << ' ' << c << " |";
      out << '\n';
    };
    emit(header);
    out << '|';
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? " ---: |" : " --- |");
    out << '\n';
    for (const auto& row : cells) emit(row);
  }
  return out.str();
}

MetricsReport parse_csv(const std::string& text, const std::string& dataset_name) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("report is empty");
  const auto header = split_commas(line);
  const bool val = header.size() == 5;
  const std::vector<std::string> base{"classifier", "loss", "accuracy"};
  if ((header.size() != 3 && !val) || !std::equal(base.begin(), base.end(), header.begin()) ||
      (val && (header[3] != "val_loss" || header[4] != "val_accuracy")))
    throw FormatError("unexpected report header '" + line + "'");

  MetricsReport rep{dataset_name, {}};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_commas(line);
    if (f.size() != header.size())
      throw FormatError("report line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " fields");
    MetricsRow r{f[0], parse_number(f[1], line_no), parse_number(f[2], line_no), std::nullopt, std::nullopt};
    if (val) {
      if (!f[3].empty()) r.val_loss = parse_number(f[3], line_no);
      if (!f[4].empty()) r.val_accuracy = parse_number(f[4], line_no);
    }
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

std::filesystem::path write_report(const MetricsReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto csv = dir / ("report_" + report.dataset_name + ".csv");
  write_text(csv, render(report, Format::csv));
  write_text(dir / ("report_" + report.dataset_name + ".md"), render(report, Format::markdown));
  return csv;
}

MetricsReport read_report(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw DataError("cannot read " + csv_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::string name = csv_path.stem().string();
  if (name.rfind("report_", 0) == 0) name = name.substr(7);
  return parse_csv(ss.str(), name);
}

GeneratedData build_generated_data(const std::map<std::string, nn::Network>& generators,
                                   const std::vector<std::string>& class_names, std::size_t per_class_count,
                                   std::uint64_t seed, const cleaning::CleaningConfig& cleaning_cfg) {
  if (per_class_count == 0) throw ContractError("per_class_count must be >= 1");
  if (class_names.empty()) throw ContractError("no classes to generate");
  std::string missing;
  for (const auto& c : class_names)
    if (!generators.count(c)) missing += (missing.empty() ? "" : ", ") + c;
  if (!missing.empty()) throw DataError("missing GAN checkpoint for class(es): " + missing);

  GeneratedData out;
  std::vector<int> labels;
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    Rng rng(Rng::derive(seed, k));
    auto imgs = gan::to_gray_images(gan::generate(generators.at(class_names[k]), per_class_count, rng));
    for (auto& img : imgs) {
      out.cleaned_images.push_back(cleaning::clean(img, cleaning_cfg));
      out.raw_images.push_back(std::move(img));
      labels.push_back(static_cast<int>(k));
    }
  }
  out.raw = data::from_images(out.raw_images, labels, class_names, data::Norm::unit);
  out.cleaned = data::from_images(out.cleaned_images, labels, class_names, data::Norm::unit);
  return out;
}

data::LabeledDataset build_generated_dataset(const std::map<std::string, nn::Network>& generators,
                                             const std::vector<std::string>& class_names,
                                             std::size_t per_class_count, std::uint64_t seed, bool cleaned,
                                             const cleaning::CleaningConfig& cleaning_cfg) {
  auto d = build_generated_data(generators, class_names, per_class_count, seed, cleaning_cfg);
  return cleaned ? std::move(d.cleaned) : std::move(d.raw);
}

GrayImage class_preview_grid(const std::vector<GrayImage>& images, const std::vector<int>& labels,
                             std::size_t num_classes, std::size_t per_row) {
  if (images.size() != labels.size()) throw ContractError("images and labels differ in length");
  if (images.empty() || num_classes == 0 || per_row == 0) throw ContractError("nothing to preview");
  const GrayImage blank(images.front().width, images.front().height);
  std::vector<GrayImage> tiles(num_classes * per_row, blank);
  std::vector<std::size_t> filled(num_classes, 0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto k = static_cast<std::size_t>(labels[i]);
    if (k >= num_classes) throw ContractError("label outside preview range");
    if (filled[k] < per_row) tiles[k * per_row + filled[k]++] = images[i];
  }
  return tile_grid(tiles, per_row, num_classes);
}

}  // namespace devgan::report
