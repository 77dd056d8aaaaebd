#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "devgan/checkpoint.hpp"
#include "devgan/classifier.hpp"
#include "devgan/cleaning.hpp"
#include "devgan/config.hpp"
#include "devgan/errors.hpp"
#include "devgan/glyphs.hpp"
#include "devgan/pipeline.hpp"
#include "devgan/report.hpp"

namespace py = pybind11;
using namespace devgan;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

GrayImage to_image(const U8Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D uint8 array (height, width)");
  const auto h = static_cast<std::size_t>(a.shape(0)), w = static_cast<std::size_t>(a.shape(1));
  return GrayImage(w, h, std::vector<std::uint8_t>(a.data(), a.data() + w * h));
}

U8Array from_image(const GrayImage& img) {
  U8Array out({img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

Tensor to_tensor(const F32Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

F32Array from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  F32Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::function<GrayImage(const GrayImage&)> lift(GrayImage (*f)(const GrayImage&)) { return f; }

}  // namespace

PYBIND11_MODULE(_devgan, m) {
  m.doc() = "Per-class GAN, glyph cleaning and classifier scoring core";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  // image cleaning
  m.def("gaussian_blur", [](const U8Array& a, double sigma) { return from_image(cleaning::gaussian_blur_3x3(to_image(a), sigma)); },
        py::arg("image"), py::arg("sigma") = 0.8);
  m.def("otsu_threshold", [](const U8Array& a) {
    const auto r = cleaning::otsu_threshold(to_image(a));
    return py::make_tuple(r.threshold, from_image(r.binary));
  });
  for (auto [name, f] : {std::pair{"erode", &cleaning::erode}, std::pair{"dilate", &cleaning::dilate},
                         std::pair{"opening", &cleaning::opening}, std::pair{"closing", &cleaning::closing},
                         std::pair{"bitwise_not", &cleaning::bitwise_not}}) {
    auto fn = lift(f);
    m.def(name, [fn](const U8Array& a) { return from_image(fn(to_image(a))); }, py::arg("image"));
  }
  m.def(
      "clean",
      [](const U8Array& a, double sigma, bool skip_not) {
        return from_image(cleaning::clean(to_image(a), {sigma, skip_not}));
      },
      py::arg("image"), py::arg("sigma") = 0.8, py::arg("skip_not") = false);
  m.def("read_png", [](const std::filesystem::path& p) { return from_image(read_png(p)); });
  m.def("write_png", [](const U8Array& a, const std::filesystem::path& p) { write_png(to_image(a), p); });

  // datasets
  m.def(
      "glyph_dataset",
      [](std::size_t per_class, std::uint64_t seed, std::size_t classes) {
        const auto ds = data::make_glyph_dataset(per_class, seed, data::Norm::unit, classes);
        return py::make_tuple(from_tensor(ds.images), ds.labels, ds.class_names);
      },
      py::arg("per_class"), py::arg("seed") = 0, py::arg("classes") = data::kGlyphClasses,
      "Procedural glyphs as (images[n,32,32,1] in [0,1], labels, class_names).");

  // networks
  py::class_<nn::Network>(m, "Network")
      .def("predict", [](const nn::Network& n, const F32Array& x) { return from_tensor(n.predict(to_tensor(x))); })
      .def_property_readonly("input_shape", &nn::Network::input_shape)
      .def_property_readonly("output_shape", &nn::Network::output_shape)
      .def("parameter_count", &nn::Network::parameter_count)
      .def("parameter_digest", &nn::Network::parameter_digest)
      .def("save", [](const nn::Network& n, const std::filesystem::path& p) { nn::save_network(n, p); });
  m.def("load_network", &nn::load_network);
  m.def(
      "build_classifier",
      [](const std::string& id, std::size_t num_classes, std::uint64_t seed) {
        return clf::build_classifier(clf::classifier_from_string(id), num_classes, seed);
      },
      py::arg("id"), py::arg("num_classes") = 10, py::arg("seed") = 0);
  m.def(
      "evaluate",
      [](const nn::Network& net, const F32Array& images, const std::vector<int>& labels, std::size_t num_classes) {
        data::LabeledDataset ds;
        ds.images = to_tensor(images);
        ds.labels = labels;
        for (std::size_t k = 0; k < num_classes; ++k) ds.class_names.push_back(std::to_string(k));
        ds.validate();
        const auto ev = clf::evaluate(net, ds);
        return py::make_tuple(ev.loss, ev.accuracy);
      },
      py::arg("net"), py::arg("images"), py::arg("labels"), py::arg("num_classes"),
      "Inference-mode (loss, accuracy) on unit-range images.");
  m.def("load_generator", [](const std::filesystem::path& p) { return gan::read_gan_checkpoint(p).generator; });
  m.def(
      "generate",
      [](const nn::Network& g, std::size_t count, std::uint64_t seed) {
        Rng rng(seed);
        return from_tensor(gan::generate(g, count, rng));
      },
      py::arg("generator"), py::arg("count"), py::arg("seed") = 0);

  // configuration and pipeline
  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("parse", [](const std::string& text) { return parse_run_config(text); })
      .def_static("load", [](const std::filesystem::path& p) { return load_run_config(p); })
      .def("to_toml", &RunConfig::to_toml)
      .def("validate", &RunConfig::validate)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("out_dir", &RunConfig::out_dir)
      .def_readwrite("jobs", &RunConfig::jobs)
      .def_readwrite("data_root", &RunConfig::data_root)
      .def_readwrite("test_root", &RunConfig::test_root)
      .def_readwrite("classes", &RunConfig::classes)
      .def_readwrite("train_fraction", &RunConfig::train_fraction)
      .def_readwrite("synthetic_per_class", &RunConfig::synthetic_per_class)
      .def_readwrite("classifier_epochs", &RunConfig::classifier_epochs)
      .def_readwrite("classifier_batch_size", &RunConfig::classifier_batch_size)
      .def_readwrite("per_class_count", &RunConfig::per_class_count)
      .def_property(
          "classifiers", [](const RunConfig& c) { return classifier_list_string(c.classifiers); },
          [](RunConfig& c, const std::string& s) { c.classifiers = parse_classifier_list(s); })
      .def_property(
          "gan_iterations", [](const RunConfig& c) { return c.gan.iterations; },
          [](RunConfig& c, std::uint64_t v) { c.gan.iterations = v; })
      .def_property(
          "gan_checkpoint_every", [](const RunConfig& c) { return c.gan.checkpoint_every; },
          [](RunConfig& c, std::uint64_t v) { c.gan.checkpoint_every = v; })
      .def_property(
          "gan_widths",
          [](const RunConfig& c) { return py::make_tuple(c.gan.generator_widths, c.gan.discriminator_widths); },
          [](RunConfig& c, const std::pair<std::vector<std::size_t>, std::vector<std::size_t>>& w) {
            c.gan.generator_widths = w.first;
            c.gan.discriminator_widths = w.second;
          })
      .def_property(
          "skip_not", [](const RunConfig& c) { return c.cleaning.skip_not; },
          [](RunConfig& c, bool v) { c.cleaning.skip_not = v; });

  auto report_dict = [](const report::MetricsReport& r) {
    py::list rows;
    for (const auto& row : r.rows) {
      py::dict d;
      d["classifier"] = row.classifier;
      d["loss"] = row.loss;
      d["accuracy"] = row.accuracy;
      d["val_loss"] = row.val_loss ? py::cast(*row.val_loss) : py::none();
      d["val_accuracy"] = row.val_accuracy ? py::cast(*row.val_accuracy) : py::none();
      rows.append(d);
    }
    return rows;
  };
  m.def(
      "train_classifiers",
      [report_dict](const RunConfig& c, const pipeline::Log& log) {
        return report_dict(pipeline::train_classifiers(c, log));
      },
      py::arg("config"), py::arg("log") = pipeline::Log{});
  m.def(
      "train_gans",
      [](const RunConfig& c, std::optional<std::vector<std::string>> classes, const pipeline::Log& log) {
        return pipeline::train_gans(c, classes ? *classes : pipeline::selected_classes(c), log);
      },
      py::arg("config"), py::arg("classes") = py::none(), py::arg("log") = pipeline::Log{});
  m.def(
      "score",
      [report_dict](const RunConfig& c, const pipeline::Log& log) {
        const auto r = pipeline::score(c, log);
        return py::make_tuple(report_dict(r.raw), report_dict(r.cleaned));
      },
      py::arg("config"), py::arg("log") = pipeline::Log{});
  m.def(
      "reproduce",
      [report_dict](const RunConfig& c, const pipeline::Log& log) {
        const auto r = pipeline::reproduce(c, log);
        return py::make_tuple(report_dict(r.raw), report_dict(r.cleaned));
      },
      py::arg("config"), py::arg("log") = pipeline::Log{});
  m.def(
      "clean_directory",
      [](const std::filesystem::path& in, const std::filesystem::path& out, bool skip_not) {
        return pipeline::clean_directory(in, out, {0.8, skip_not}).cleaned;
      },
      py::arg("input"), py::arg("output"), py::arg("skip_not") = false);
}
