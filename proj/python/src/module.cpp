#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "trapwatch/core/box.hpp"
#include "trapwatch/core/catalog.hpp"
#include "trapwatch/core/error.hpp"
#include "trapwatch/dataset/split.hpp"
#include "trapwatch/dataset/voc.hpp"
#include "trapwatch/dataset/yolo.hpp"
#include "trapwatch/eval/confusion.hpp"
#include "trapwatch/eval/iou.hpp"
#include "trapwatch/eval/metrics.hpp"
#include "trapwatch/gateway/letterbox.hpp"

namespace py = pybind11;
using namespace trapwatch;

namespace {

using Box = std::tuple<double, double, double, double>;

BoundingBox to_box(const Box& b, Frame frame = Frame::original) {
  return {std::get<0>(b), std::get<1>(b), std::get<2>(b), std::get<3>(b), frame};
}

Box from_box(const BoundingBox& b) { return {b.x_min, b.y_min, b.x_max, b.y_max}; }

py::dict ratio_dict(const eval::Ratio& r) {
  py::dict d;
  d["num"] = r.num;
  d["den"] = r.den;
  d["value"] = r.value();
  d["percent"] = eval::format_percent(r);
  return d;
}

py::dict class_metrics(const std::vector<int>& classes, const std::vector<std::vector<std::int64_t>>& counts,
                       int class_id) {
  const auto cm = eval::ConfusionMatrix::from_counts(classes, counts);
  const auto m = eval::class_metrics(cm, class_id);
  py::dict d;
  d["class_id"] = m.class_id;
  d["tp"] = m.tp;
  d["fp"] = m.fp;
  d["tn"] = m.tn;
  d["fn"] = m.fn;
  d["precision"] = ratio_dict(m.precision);
  d["sensitivity"] = ratio_dict(m.recall);
  d["specificity"] = ratio_dict(m.specificity);
  d["f1"] = ratio_dict(m.f1);
  d["accuracy"] = ratio_dict(m.accuracy);
  return d;
}

std::tuple<std::string, std::string> voc_to_yolo(const std::string& xml) {
  const auto doc = dataset::parse_voc(xml);
  const auto labels = dataset::voc_to_yolo(doc, SpeciesCatalog::default_catalog());
  return {labels.image_stem, labels.to_text()};
}

Box yolo_to_box(const std::string& line, int width, int height) {
  return from_box(dataset::yolo_to_box(dataset::parse_row(line), width, height));
}

std::tuple<std::vector<std::string>, std::vector<std::string>, std::vector<std::string>> split(
    std::vector<std::string> ids, std::uint64_t seed, double train, double val, double test) {
  auto s = dataset::split_dataset(std::move(ids), dataset::SplitRatios{train, val, test}, seed);
  return {std::move(s.train), std::move(s.val), std::move(s.test)};
}

}  // namespace

PYBIND11_MODULE(_trapwatch, m) {
  m.doc() = "Camera-trap evaluation and dataset helpers";

  // The module keeps the type alive.
  static PyObject* error = py::exception<Error>(m, "TrapwatchError", PyExc_ValueError).ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error)(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error, exc.ptr());
    }
  });

  m.def("class_metrics", &class_metrics, py::arg("classes"), py::arg("counts"), py::arg("class_id"),
        "One-vs-rest metrics from an actual x predicted count matrix.");

  m.def(
      "iou", [](const Box& a, const Box& b) { return eval::iou(to_box(a), to_box(b)); }, py::arg("a"),
      py::arg("b"), "Intersection over union of two (x_min, y_min, x_max, y_max) boxes.");

  py::class_<gateway::LetterboxTransform>(m, "Letterbox")
      .def_readonly("scale", &gateway::LetterboxTransform::scale)
      .def_readonly("pad_left", &gateway::LetterboxTransform::pad_left)
      .def_readonly("pad_top", &gateway::LetterboxTransform::pad_top)
      .def_readonly("scaled_width", &gateway::LetterboxTransform::scaled_width)
      .def_readonly("scaled_height", &gateway::LetterboxTransform::scaled_height)
      .def_readonly("target", &gateway::LetterboxTransform::target)
      .def_property_readonly("pad_right", &gateway::LetterboxTransform::pad_right)
      .def_property_readonly("pad_bottom", &gateway::LetterboxTransform::pad_bottom)
      .def("__repr__", [](const gateway::LetterboxTransform& t) {
        return "Letterbox(scale=" + std::to_string(t.scale) + ", scaled=" + std::to_string(t.scaled_width) + "x" +
               std::to_string(t.scaled_height) + ", pad_top=" + std::to_string(t.pad_top) + ")";
      });

  m.def("letterbox", &gateway::letterbox, py::arg("width"), py::arg("height"),
        py::arg("target") = gateway::kDefaultTarget);
  m.def(
      "letterbox_box",
      [](const Box& b, const gateway::LetterboxTransform& t) {
        return from_box(gateway::letterbox_box(to_box(b), t));
      },
      py::arg("box"), py::arg("transform"), "Original-frame box to model-input pixels.");
  m.def(
      "unletterbox_box",
      [](const Box& b, const gateway::LetterboxTransform& t, int width, int height) {
        return from_box(gateway::unletterbox_box(to_box(b, Frame::model_input), t, width, height));
      },
      py::arg("box"), py::arg("transform"), py::arg("width"), py::arg("height"),
      "Model-input box back to the original frame, clamped to the image.");

  m.def("voc_to_yolo", &voc_to_yolo, py::arg("xml"),
        "Pascal VOC XML to (image stem, YOLO label text). Rejected documents raise.");
  m.def("yolo_to_box", &yolo_to_box, py::arg("line"), py::arg("width"), py::arg("height"));

  m.def("split_sizes", [](std::size_t n, double train, double val, double test) {
    return dataset::split_sizes(n, dataset::SplitRatios{train, val, test});
  }, py::arg("n"), py::arg("train") = 0.8, py::arg("val") = 0.1, py::arg("test") = 0.1);
  m.def("split", &split, py::arg("ids"), py::arg("seed"), py::arg("train") = 0.8, py::arg("val") = 0.1,
        py::arg("test") = 0.1, "Deterministic (train, val, test) partition of the ids.");
}
