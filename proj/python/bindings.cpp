#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "smoothkit/diagnostics.hpp"
#include "smoothkit/errors.hpp"
#include "smoothkit/harness.hpp"
#include "smoothkit/param_store.hpp"
#include "smoothkit/smoothing.hpp"

namespace py = pybind11;
using namespace smoothkit;

namespace {

py::array_t<double> unit_array(const Unit& u) {
    std::vector<py::ssize_t> shape(u.shape.begin(), u.shape.end());
    py::array_t<double> out(shape);
    std::copy(u.data.begin(), u.data.end(), out.mutable_data());
    return out;
}

void set_unit(ParamStore& store, const std::string& name, const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    auto& u = store.at(name);
    if (static_cast<std::size_t>(a.size()) != u.size())
        throw ShapeError("unit '" + name + "' holds " + std::to_string(u.size()) + " values, got " +
                         std::to_string(a.size()));
    std::copy(a.data(), a.data() + a.size(), u.data.begin());
}

py::dict row_dict(const MetricsRow& r) {
    py::dict d;
    d["step"] = r.step;
    d["epoch"] = r.epoch;
    d["lr"] = r.lr;
    d["loss_total"] = r.loss_total;
    d["loss_supervised"] = r.loss_supervised;
    d["loss_unsupervised"] = r.loss_unsupervised;
    d["pseudo_label_rate"] = r.pseudo_label_rate;
    d["teacher_param_mse"] = r.teacher_param_mse;
    d["teacher_signal_mse"] = r.teacher_signal_mse;
    d["preserved_fraction"] = r.preserved_fraction;
    d["eval_accuracy_student"] = r.eval_accuracy_student;
    d["eval_accuracy_teacher"] = r.eval_accuracy_teacher;
    return d;
}

}  // namespace

PYBIND11_MODULE(_smoothkit, m) {
    m.doc() = "Teacher-model smoothing (TMA / SE / STS) on small parameter stores and toy training runs";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<ConstructionError>(m, "ConstructionError", base.ptr());
    py::register_exception<CongruenceError>(m, "CongruenceError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<MaskError>(m, "MaskError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    // Same exception type, with the offending config field attached.
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            py::object type = py::module_::import("smoothkit._smoothkit").attr("ConfigError");
            py::object exc = type(e.what());
            exc.attr("field") = e.field();
            PyErr_SetObject(type.ptr(), exc.ptr());
        }
    });

    py::enum_<UnitKind>(m, "UnitKind")
        .value("Weight", UnitKind::Weight)
        .value("Bias", UnitKind::Bias)
        .value("Buffer", UnitKind::Buffer);
    py::enum_<Granularity>(m, "Granularity")
        .value("LayerWise", Granularity::LayerWise)
        .value("ChannelWise", Granularity::ChannelWise)
        .value("NeuronWise", Granularity::NeuronWise);
    py::enum_<Method>(m, "Method")
        .value("None_", Method::None)
        .value("TMA", Method::TMA)
        .value("SE", Method::SE)
        .value("STS", Method::STS);

    py::class_<ParamStore>(m, "ParamStore")
        .def(py::init<>())
        .def(
            "add_unit",
            [](ParamStore& s, const std::string& name, const Shape& shape, UnitKind kind,
               std::optional<std::vector<double>> data) {
                if (data)
                    s.add_unit({name, shape, kind}, std::move(*data));
                else
                    s.add_unit({name, shape, kind});
            },
            py::arg("name"), py::arg("shape"), py::arg("kind") = UnitKind::Weight, py::arg("data") = std::nullopt)
        .def("names",
             [](const ParamStore& s) {
                 std::vector<std::string> out;
                 for (const auto& u : s.units()) out.push_back(u.name);
                 return out;
             })
        .def("__getitem__", [](const ParamStore& s, const std::string& name) { return unit_array(s.at(name)); })
        .def("__setitem__", &set_unit)
        .def("__len__", &ParamStore::unit_count)
        .def("__eq__", [](const ParamStore& a, const ParamStore& b) { return bitwise_equal(a, b); })
        .def("scalar_count", &ParamStore::scalar_count)
        .def("flatten", &ParamStore::flatten)
        .def("copy", [](const ParamStore& s) { return clone(s); });

    m.def("enumerate_slot_count", [](const ParamStore& s, Granularity g) { return enumerate_slots(s, g).size(); });
    m.def("mse", &mse);
    m.def("snapshot_to_json", &snapshot_to_json);
    m.def("snapshot_from_json", [](const std::string& text) { return snapshot_from_json(text); });
    m.def("save_snapshot", &save_snapshot);
    m.def("load_snapshot", &load_snapshot);

    py::class_<SmoothingConfig>(m, "SmoothingConfig")
        .def(py::init([](Method method, double p, double mm, Granularity g, std::uint64_t seed, bool buffers) {
                 SmoothingConfig c{method, p, mm, g, seed, buffers};
                 c.validate();
                 return c;
             }),
             py::arg("method") = Method::None, py::arg("p") = 0.5, py::arg("m") = 0.99,
             py::arg("granularity") = Granularity::LayerWise, py::arg("seed") = 0, py::arg("include_buffers") = true)
        .def_readwrite("method", &SmoothingConfig::method)
        .def_readwrite("p", &SmoothingConfig::p)
        .def_readwrite("m", &SmoothingConfig::m)
        .def_readwrite("granularity", &SmoothingConfig::granularity)
        .def_readwrite("seed", &SmoothingConfig::seed)
        .def_readwrite("include_buffers", &SmoothingConfig::include_buffers);

    py::class_<MaskSample>(m, "MaskSample")
        .def_readonly("flags", &MaskSample::flags)
        .def_readonly("seed_used", &MaskSample::seed_used)
        .def_readonly("draw_index", &MaskSample::draw_index)
        .def("preserved_fraction", &MaskSample::preserved_fraction)
        .def("to_hex", &MaskSample::to_hex)
        .def("__len__", &MaskSample::size);

    m.def("sample_mask", &sample_mask, py::arg("slot_count"), py::arg("p"), py::arg("seed"), py::arg("draw_index"));
    m.def("apply_tma", &apply_tma, py::arg("teacher"), py::arg("student"), py::arg("m"));
    m.def(
        "smooth_step",
        [](const SmoothingConfig& cfg, ParamStore& teacher, const ParamStore& student, std::uint64_t step) {
            return smooth_step(cfg, teacher, student, StepIndex{step});
        },
        py::arg("cfg"), py::arg("teacher"), py::arg("student"), py::arg("step"));
    m.def("effective_momentum", &effective_momentum, py::arg("p"), py::arg("m"));
    m.def("monte_carlo_mean_update", &diag::monte_carlo_mean_update, py::arg("teacher"), py::arg("student"),
          py::arg("cfg"), py::arg("trials"));

    m.def(
        "run_config",
        [](const std::string& json_text, std::optional<std::uint64_t> seed) {
            auto cfg = harness::parse_config(json_text);
            if (seed) cfg.run.seed = *seed;
            train::TrainOutcome out;
            {
                py::gil_scoped_release release;
                out = train::run_training(cfg.run);
            }
            py::list rows;
            for (const auto& r : out.log.rows) rows.append(row_dict(r));
            return py::make_tuple(rows, std::move(out.final_teacher));
        },
        py::arg("config_json"), py::arg("seed") = std::nullopt,
        "Runs one training job from a JSON config; returns (metrics rows, final teacher store).");
    m.def("config_to_json", [](const std::string& json_text) {
        return harness::config_to_json(harness::parse_config(json_text));
    });
}
