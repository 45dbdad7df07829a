// Python bindings for the augmentation, loss, model and CLI entry points.
// Images cross the boundary as float64 numpy arrays of shape (H, W, C).

#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "commands.hpp"
#include "robustft/augment.hpp"
#include "robustft/calibration.hpp"
#include "robustft/dataset.hpp"
#include "robustft/errors.hpp"
#include "robustft/losses.hpp"
#include "robustft/model.hpp"
#include "robustft/report.hpp"

namespace py = pybind11;
using namespace robustft;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const Array& a) {
  if (a.ndim() != 3) throw DimensionError("expected an (H, W, C) array, got " + std::to_string(a.ndim()) + " dims");
  Image img(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
            static_cast<std::size_t>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

Array to_array(const Image& img) {
  Array out({img.height, img.width, img.channels});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.raw(), t.raw() + t.numel(), out.mutable_data());
  return out;
}

std::vector<Image> to_images(const Array& batch) {
  if (batch.ndim() != 4) throw DimensionError("expected an (N, H, W, C) array");
  std::vector<Image> out;
  const auto n = batch.shape(0), h = batch.shape(1), w = batch.shape(2), c = batch.shape(3);
  const double* p = batch.data();
  for (py::ssize_t i = 0; i < n; ++i) {
    Image img(static_cast<std::size_t>(h), static_cast<std::size_t>(w), static_cast<std::size_t>(c));
    std::copy(p + i * h * w * c, p + (i + 1) * h * w * c, img.pixels.begin());
    out.push_back(std::move(img));
  }
  return out;
}

LabeledDataset to_dataset(const Array& images, const std::vector<int>& labels, std::size_t classes) {
  LabeledDataset ds;
  ds.images = to_images(images);
  ds.labels = labels;
  ds.class_count = classes;
  ds.validate();
  return ds;
}

py::tuple dataset_arrays(const LabeledDataset& ds) {
  const std::size_t n = ds.size();
  const Image& first = ds.images.at(0);
  Array out({n, first.height, first.width, first.channels});
  double* p = out.mutable_data();
  for (const auto& img : ds.images) p = std::copy(img.pixels.begin(), img.pixels.end(), p);
  return py::make_tuple(out, ds.labels);
}

AugmentationSet named_set(const PresetTable& presets, const std::string& name, const std::string& dataset) {
  if (name == "combined_plus") return combined_plus(presets, dataset);
  if (name == "combined_minus") return combined_minus(presets, dataset);
  throw ParameterError("unknown set '" + name + "' (expected combined_plus or combined_minus)");
}

}  // namespace

PYBIND11_MODULE(_robustft, m) {
  m.doc() = "Robustness finetuning core: augmentations, losses, models and the experiment CLI";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<CalibrationError>(m, "CalibrationError", PyExc_RuntimeError);

  py::enum_<AugmentKind>(m, "AugmentKind")
      .value("BrightnessPlus", AugmentKind::BrightnessPlus)
      .value("BrightnessMinus", AugmentKind::BrightnessMinus)
      .value("SaturationPlus", AugmentKind::SaturationPlus)
      .value("SaturationMinus", AugmentKind::SaturationMinus)
      .value("GaussianNoise", AugmentKind::GaussianNoise)
      .value("GaussianBlur", AugmentKind::GaussianBlur)
      .value("AdditiveSAP", AugmentKind::AdditiveSAP);
  m.def("parse_kind", [](const std::string& s) { return parse_kind(s); });
  m.def("short_name", [](AugmentKind k) { return std::string(short_name(k)); });

  py::class_<AugmentationSpec>(m, "AugmentationSpec")
      .def(py::init<>())
      .def_readwrite("kind", &AugmentationSpec::kind)
      .def_readwrite("delta", &AugmentationSpec::delta)
      .def_readwrite("alpha", &AugmentationSpec::alpha)
      .def_readwrite("mu", &AugmentationSpec::mu)
      .def_readwrite("sigma", &AugmentationSpec::sigma)
      .def_readwrite("size", &AugmentationSpec::size)
      .def_readwrite("p", &AugmentationSpec::p)
      .def_readwrite("q", &AugmentationSpec::q)
      .def_readwrite("rho", &AugmentationSpec::rho)
      .def("validate", &AugmentationSpec::validate)
      .def("is_identity", &AugmentationSpec::is_identity)
      .def("__repr__", &AugmentationSpec::describe)
      .def(py::self == py::self);

  py::class_<PresetTable>(m, "PresetTable")
      .def_static("builtin", &PresetTable::builtin)
      .def_static("parse", [](const std::string& text) { return PresetTable::parse(text); })
      .def_static("load", &PresetTable::load)
      .def("to_text", &PresetTable::to_text)
      .def("save", &PresetTable::save)
      .def("get", py::overload_cast<const std::string&>(&PresetTable::get, py::const_))
      .def("get_kind", py::overload_cast<const std::string&, AugmentKind>(&PresetTable::get, py::const_))
      .def("set", &PresetTable::set)
      .def("names", [](const PresetTable& t) {
        std::vector<std::string> out;
        for (const auto& [k, v] : t.entries()) out.push_back(k);
        return out;
      });

  m.def("brightness", [](const Array& img, double delta) { return to_array(brightness(to_image(img), delta)); });
  m.def("saturation", [](const Array& img, double alpha) { return to_array(saturation(to_image(img), alpha)); });
  m.def("gaussian_noise", [](const Array& img, double mu, double sigma, std::uint64_t seed) {
    RandomStream rng(seed);
    return to_array(gaussian_noise(to_image(img), mu, sigma, rng));
  }, py::arg("img"), py::arg("mu"), py::arg("sigma"), py::arg("seed") = 0);
  m.def("gaussian_blur", [](const Array& img, int size, double sigma) {
    return to_array(gaussian_blur(to_image(img), size, sigma));
  });
  m.def("additive_sap", [](const Array& img, double p, double q, double rho, std::uint64_t seed) {
    RandomStream rng(seed);
    return to_array(additive_sap(to_image(img), p, q, rho, rng));
  }, py::arg("img"), py::arg("p"), py::arg("q"), py::arg("rho"), py::arg("seed") = 0);
  m.def("apply", [](const Array& img, const AugmentationSpec& spec, std::uint64_t seed) {
    RandomStream rng(seed);
    return to_array(apply(to_image(img), spec, rng));
  }, py::arg("img"), py::arg("spec"), py::arg("seed") = 0);
  m.def("compose", [](const Array& img, const std::string& set, const PresetTable& presets, const std::string& dataset,
                      std::uint64_t seed) {
    return to_array(compose(to_image(img), named_set(presets, set, dataset), RandomStream(seed)));
  }, py::arg("img"), py::arg("set"), py::arg("presets") = PresetTable::builtin(), py::arg("dataset") = "cifar10",
     py::arg("seed") = 0);
  m.def("gaussian_kernel", &gaussian_kernel);
  m.def("composition_order", &composition_order);

  m.def("fma_loss", [](const std::vector<Array>& clean, const std::vector<Array>& aug, double epsilon_mean) {
    std::vector<Var> c, a;
    for (const auto& t : clean) c.push_back(constant(to_tensor(t)));
    for (const auto& t : aug) a.push_back(constant(to_tensor(t)));
    return fma_loss(c, a, epsilon_mean)->value[0];
  }, py::arg("clean"), py::arg("aug"), py::arg("epsilon_mean") = 1e-8);
  m.def("st_loss", [](const Array& logits_clean, const Array& logits_aug, bool l2) {
    return st_loss(log_softmax(constant(to_tensor(logits_clean))), log_softmax(constant(to_tensor(logits_aug))),
                   l2 ? StDistance::L2 : StDistance::KL)
        ->value[0];
  }, py::arg("logits_clean"), py::arg("logits_aug"), py::arg("l2") = false);

  py::class_<ArchitectureDescriptor>(m, "ArchitectureDescriptor")
      .def(py::init<>())
      .def_static("parse", [](const std::string& text) { return ArchitectureDescriptor::parse(text); })
      .def("to_text", &ArchitectureDescriptor::to_text)
      .def_readwrite("height", &ArchitectureDescriptor::height)
      .def_readwrite("width", &ArchitectureDescriptor::width)
      .def_readwrite("channels", &ArchitectureDescriptor::channels)
      .def_readwrite("dense_widths", &ArchitectureDescriptor::dense_widths)
      .def_readwrite("classes", &ArchitectureDescriptor::classes);

  py::class_<Model>(m, "Model")
      .def_static("create", &Model::create, py::arg("descriptor") = ArchitectureDescriptor{}, py::arg("seed") = 0)
      .def_static("load", &load_model_file)
      .def("save", [](const Model& model, const std::string& path) { save_model_file(model, path); })
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("descriptor", &Model::descriptor)
      .def("parameter_names", [](const Model& model) {
        std::vector<std::string> out;
        for (const auto& [n, v] : model.parameters()) out.push_back(n);
        return out;
      })
      .def("logits", [](const Model& model, const Array& batch) {
        NoGradGuard guard;
        return from_tensor(forward(model, to_batch(to_images(batch)), false).logits->value);
      }, "Logits for an (N, H, W, C) batch.")
      .def("feature_maps", [](const Model& model, const Array& batch) {
        NoGradGuard guard;
        std::vector<Array> out;
        for (const auto& t : forward(model, to_batch(to_images(batch)), true).taps) out.push_back(from_tensor(t->value));
        return out;
      })
      .def("predict", [](const Model& model, const Array& batch) {
        const auto images = to_images(batch);
        return ModelClassifier(model).predict(images);
      })
      .def("accuracy", [](const Model& model, const Array& images, const std::vector<int>& labels,
                          std::optional<AugmentationSpec> spec) {
        const auto ds = to_dataset(images, labels, model.descriptor().classes);
        return eval_accuracy(ModelClassifier(model), ds, spec);
      }, py::arg("images"), py::arg("labels"), py::arg("spec") = std::nullopt);

  m.def("synth_dataset", [](std::size_t per_class, std::size_t classes, std::uint64_t seed) {
    return dataset_arrays(synth_dataset(per_class, classes, seed));
  }, py::arg("per_class"), py::arg("classes") = 10, py::arg("seed") = 0,
     "Returns (images[N, 32, 32, 3], labels).");

  m.def("average_improvement", [](const std::string& grid_csv, const std::string& model) {
    return MetricGrid::from_csv(grid_csv).average_improvement(model);
  });

  m.def("cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "robustft");
    py::gil_scoped_release release;
    return cli::run(args);
  }, "Runs the robustft command line with the given arguments; returns the exit code.");
}
