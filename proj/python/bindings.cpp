#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dear/errors.hpp"
#include "dear/experiment.hpp"
#include "dear/ssm.hpp"

namespace py = pybind11;
namespace ex = dear::experiment;

namespace {

ex::ExperimentConfig config_from(const std::string& json_text) {
  ex::ExperimentConfig cfg = ex::parse_config(json_text);
  cfg.resolve();
  return cfg;
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
  py::array_t<T> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> flat(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                         std::size_t rows, std::size_t cols, const char* name) {
  const bool ok = (a.ndim() == 2 && static_cast<std::size_t>(a.shape(0)) == rows &&
                   static_cast<std::size_t>(a.shape(1)) == cols) ||
                  (cols == 1 && a.ndim() == 1 && static_cast<std::size_t>(a.shape(0)) == rows);
  if (!ok) throw dear::ShapeError(std::string("selective_scan: ") + name + " has the wrong shape");
  return {a.data(), a.data() + a.size()};
}

py::dict metrics_dict(const dear::training::MetricsRecord& m) {
  py::dict d;
  d["epoch"] = m.epoch;
  d["train_loss"] = m.train_loss;
  d["train_top1"] = m.train_top1;
  d["val_top1"] = m.val_top1;
  d["per_class"] = m.per_class;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the dear package";

  py::register_exception<dear::ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<dear::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<dear::NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<dear::IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<dear::FormatError>(m, "FormatError", PyExc_ValueError);

  m.def("resolve_config", [](const std::string& text) { return ex::to_json(config_from(text)); },
        py::arg("config_json"), "Parse, fill in shared fields and validate; returns JSON.");

  m.def("standard_classes", [] {
    py::list out;
    for (const auto& c : dear::synthvid::standard_classes()) {
      py::dict d;
      d["id"] = c.id;
      d["name"] = c.name;
      d["rgb_partner"] = c.rgb_partner ? py::cast(*c.rgb_partner) : py::none();
      out.append(d);
    }
    return out;
  });

  m.def(
      "generate_clip",
      [](std::uint32_t class_id, std::uint64_t seed, const std::string& config_json, bool sampled) {
        const ex::ExperimentConfig cfg = config_from(config_json);
        const auto clip = sampled ? dear::synthvid::make_training_clip(class_id, seed, cfg.gen)
                                  : dear::synthvid::generate_clip(class_id, seed, cfg.gen);
        const py::ssize_t T = clip.frames, H = clip.height, W = clip.width;
        py::dict d;
        d["rgb"] = to_array(clip.rgb, {T, H, W, 3});
        d["depth"] = to_array(clip.depth, {T, H, W});
        d["label"] = clip.label;
        d["seed"] = clip.seed;
        return d;
      },
      py::arg("class_id"), py::arg("seed"), py::arg("config_json") = "{}", py::arg("sampled") = true);

  m.def(
      "selective_scan",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> x,
         py::array_t<double, py::array::c_style | py::array::forcecast> delta,
         py::array_t<double, py::array::c_style | py::array::forcecast> a,
         py::array_t<double, py::array::c_style | py::array::forcecast> b,
         py::array_t<double, py::array::c_style | py::array::forcecast> c,
         py::array_t<double, py::array::c_style | py::array::forcecast> d, std::size_t block) {
        if (x.ndim() != 2 || a.ndim() != 2) throw dear::ShapeError("selective_scan: x and a must be 2-D");
        dear::ssm::ScanInputs in;
        in.len = x.shape(0);
        in.channels = x.shape(1);
        in.state = a.shape(1);
        in.x = flat(x, in.len, in.channels, "x");
        in.delta = flat(delta, in.len, in.channels, "delta");
        in.a = flat(a, in.channels, in.state, "a");
        in.b = flat(b, in.len, in.state, "b");
        in.c = flat(c, in.len, in.state, "c");
        in.d_skip = flat(d, in.channels, 1, "d");
        const auto y = block == 0 ? dear::ssm::scan_sequential(in) : dear::ssm::scan_blocked(in, block);
        return to_array(y, {static_cast<py::ssize_t>(in.len), static_cast<py::ssize_t>(in.channels)});
      },
      py::arg("x"), py::arg("delta"), py::arg("a"), py::arg("b"), py::arg("c"), py::arg("d"),
      py::arg("block") = 0, "Selective scan; block 0 runs the sequential recurrence.");

  m.def(
      "model_summary",
      [](const std::string& config_json) {
        const ex::ExperimentConfig cfg = config_from(config_json);
        const dear::model::DearModel model(cfg.model);
        py::dict d;
        d["mode"] = dear::model::to_string(cfg.model.mode);
        d["trainable_values"] = model.trainable_count();
        d["frozen_values"] = dear::count_elements(model.frozen());
        py::list names;
        for (const auto& p : model.trainable()) names.append(p.name);
        d["trainable_tensors"] = names;
        return d;
      },
      py::arg("config_json") = "{}");

  m.def(
      "predict_clip",
      [](std::uint32_t class_id, std::uint64_t seed, const std::string& config_json) {
        const ex::ExperimentConfig cfg = config_from(config_json);
        const dear::model::DearModel model(cfg.model);
        const auto clip = dear::synthvid::make_training_clip(class_id, seed, cfg.gen);
        const auto out = model.forward(model.encode_frozen(clip));
        const auto p = out.probs.data();
        return std::vector<double>(p.begin(), p.end());
      },
      py::arg("class_id"), py::arg("seed"), py::arg("config_json") = "{}",
      "Class probabilities of a freshly initialised model for one generated clip.");

  m.def(
      "generate",
      [](const std::string& config_json, const std::string& out) {
        std::ostringstream log;
        ex::cmd_generate(ex::parse_config(config_json), out, log);
        return log.str();
      },
      py::arg("config_json"), py::arg("out"));

  m.def(
      "train",
      [](const std::string& config_json, const std::string& out) {
        std::ostringstream log;
        const ex::ExperimentConfig cfg = ex::parse_config(config_json);
        std::vector<dear::training::MetricsRecord> ms;
        {
          py::gil_scoped_release release;
          ms = ex::cmd_train(cfg, out, log);
        }
        py::list metrics;
        for (const auto& r : ms) metrics.append(metrics_dict(r));
        return metrics;
      },
      py::arg("config_json"), py::arg("out"));

  m.def(
      "evaluate",
      [](const std::string& config_json, const std::string& out, const std::string& checkpoint,
         const std::string& manifest, const std::string& depth_mode, const std::string& split) {
        ex::EvalRequest req;
        req.checkpoint = checkpoint;
        req.manifest = manifest;
        req.split = split;
        if (!depth_mode.empty()) req.depth_mode = dear::synthvid::DepthMode::parse(depth_mode);
        std::ostringstream log;
        return metrics_dict(ex::cmd_eval(ex::parse_config(config_json), req, out, log));
      },
      py::arg("config_json"), py::arg("out"), py::arg("checkpoint"), py::arg("manifest") = "",
      py::arg("depth_mode") = "", py::arg("split") = "val");

  m.def(
      "ablate",
      [](const std::string& config_json, const std::string& out) {
        std::ostringstream log;
        const ex::AblationReport r = ex::cmd_ablate(ex::parse_config(config_json), out, log);
        py::dict d;
        for (const auto& row : r.rows) d[py::str(dear::model::to_string(row.mode))] = row.final_metrics.val_top1;
        return d;
      },
      py::arg("config_json"), py::arg("out"));
}
