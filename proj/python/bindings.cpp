#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "docnn/conv.hpp"
#include "docnn/experiment.hpp"
#include "docnn/hsi.hpp"
#include "docnn/metrics.hpp"
#include "docnn/network.hpp"
#include "docnn/selfcheck.hpp"
#include "docnn/train.hpp"

namespace py = pybind11;
using namespace docnn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    if (shape.empty()) shape = {1};
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

DoConvKernel make_doconv(const Array& d, const Array& w, const Array& bias, std::size_t kernel) {
    DoConvKernel k{DepthwiseKernel{to_tensor(d), kernel, kernel}, to_tensor(w), to_tensor(bias)};
    k.validate();
    return k;
}

ConfusionMatrix to_confusion(const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& m) {
    if (m.ndim() != 2 || m.shape(0) != m.shape(1)) throw std::invalid_argument("confusion matrix must be square");
    return ConfusionMatrix{static_cast<std::size_t>(m.shape(0)), std::vector<std::uint64_t>(m.data(), m.data() + m.size())};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "DO-Conv layers and the shallow DOCNN-DRC classifier for hyperspectral images.";

    py::register_exception<LoadError>(m, "LoadError", PyExc_RuntimeError);

    m.def("conv_std", [](const Array& x, const Array& w, const Array& b, bool same) {
        return to_array(conv_std(to_tensor(x), StdKernel{to_tensor(w), to_tensor(b)}, same));
    }, py::arg("x"), py::arg("weights"), py::arg("bias"), py::arg("same_pad") = true);
    m.def("doconv_fold", [](const Array& d, const Array& w, const Array& b, std::size_t kernel) {
        return to_array(doconv_fold(make_doconv(d, w, b, kernel)).weights);
    }, py::arg("depthwise"), py::arg("weights"), py::arg("bias"), py::arg("kernel") = 3,
       "Folded kernel Q [C_out, k, k, C_in] from D [k*k, D_mul, C_in] and W [C_out, D_mul, C_in].");
    m.def("doconv_compose", [](const Array& x, const Array& d, const Array& w, const Array& b, std::size_t kernel, bool same) {
        return to_array(doconv_compose(to_tensor(x), make_doconv(d, w, b, kernel), same));
    }, py::arg("x"), py::arg("depthwise"), py::arg("weights"), py::arg("bias"), py::arg("kernel") = 3, py::arg("same_pad") = true);

    py::class_<NetworkConfig>(m, "NetworkConfig")
        .def(py::init<>())
        .def_readwrite("input_size", &NetworkConfig::input_size)
        .def_readwrite("in_channels", &NetworkConfig::in_channels)
        .def_readwrite("mid_channels", &NetworkConfig::mid_channels)
        .def_readwrite("out_channels", &NetworkConfig::out_channels)
        .def_readwrite("num_classes", &NetworkConfig::num_classes)
        .def_readwrite("drc_enabled", &NetworkConfig::drc_enabled)
        .def_readwrite("d_mul", &NetworkConfig::d_mul)
        .def_readwrite("kernel_size", &NetworkConfig::kernel_size)
        .def_property("layer_type", [](const NetworkConfig& c) { return to_string(c.layer_type); },
                      [](NetworkConfig& c, const std::string& s) { c.layer_type = parse_layer_type(s); })
        .def("__repr__", [](const NetworkConfig& c) { return "NetworkConfig(" + config_to_json(c).dump() + ")"; });

    m.def("variant_config", [](const std::string& v, std::size_t classes, std::size_t in_channels) {
        NetworkConfig c = variant_config(v);
        c.num_classes = classes;
        c.in_channels = in_channels;
        return c;
    }, py::arg("variant"), py::arg("num_classes") = 9, py::arg("in_channels") = 15);
    m.def("analytic_parameter_count", &analytic_parameter_count);

    py::class_<Model>(m, "Model")
        .def_static("build", [](const NetworkConfig& c, std::uint64_t seed) {
            RngStream rng(seed);
            return build(c, rng);
        }, py::arg("config"), py::arg("seed") = 0)
        .def_static("load", [](const std::filesystem::path& p) { return load(p); })
        .def_readonly("config", &Model::config)
        .def("parameter_count", [](const Model& self) { return parameter_count(self); })
        .def("parameters", [](const Model& self) {
            py::dict out;
            for (const auto& p : parameters(self)) out[py::str(p.name)] = to_array(*p.tensor);
            return out;
        })
        .def("forward", [](const Model& self, const Array& patch, bool composed) {
            return to_array(forward(self, to_tensor(patch), composed ? DoConvPath::composed : DoConvPath::folded));
        }, py::arg("patch"), py::arg("composed") = false)
        .def("predict", [](const Model& self, const Array& patch) { return predict(self, to_tensor(patch)); })
        .def("fold", [](const Model& self) { return fold_model(self); })
        .def("save", [](const Model& self, const std::filesystem::path& p) { save(self, p); })
        .def("export_folded", [](const Model& self, const std::filesystem::path& p) { export_folded(self, p); })
        .def("train", [](Model& self, const Array& patches, const std::vector<std::size_t>& labels, double lr, double momentum,
                         std::size_t batch_size, std::size_t epochs, std::uint64_t seed) {
            if (patches.ndim() != 4) throw std::invalid_argument("patches must be [N, h, w, c]");
            Dataset d;
            const std::size_t n = patches.shape(0), per = patches.size() / std::max<std::size_t>(n, 1);
            const Shape shape(patches.shape() + 1, patches.shape() + 4);
            for (std::size_t i = 0; i < n; ++i)
                d.patches.emplace_back(shape, std::vector<double>(patches.data() + i * per, patches.data() + (i + 1) * per));
            d.labels = labels;
            const TrainConfig cfg{lr, momentum, batch_size, epochs, seed};
            py::gil_scoped_release release;
            return train(self, d, cfg).loss_trace;
        }, py::arg("patches"), py::arg("labels"), py::arg("learning_rate") = 0.01, py::arg("momentum") = 0.9,
           py::arg("batch_size") = 64, py::arg("epochs") = 1, py::arg("seed") = 0);

    m.def("overall_accuracy", [](const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& cm) {
        return overall_accuracy(to_confusion(cm));
    });
    m.def("kappa", [](const py::array_t<std::uint64_t, py::array::c_style | py::array::forcecast>& cm) { return kappa(to_confusion(cm)); });
    m.def("confusion", [](const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted, std::size_t classes) {
        const ConfusionMatrix cm = confusion(truth, predicted, classes);
        py::array_t<std::uint64_t> out({cm.classes, cm.classes});
        std::copy(cm.counts.begin(), cm.counts.end(), out.mutable_data());
        return out;
    });

    m.def("pca_fit", [](const Array& cube, std::size_t k) {
        const PcaModel p = pca_fit(to_tensor(cube), k);
        py::dict out;
        out["mean"] = to_array(p.mean);
        out["components"] = to_array(p.components);
        out["explained_variance"] = to_array(p.explained_variance);
        return out;
    });

    m.def("synthetic_scene", [](std::size_t height, std::size_t width, std::size_t bands, double noise, std::uint64_t seed) {
        const HsiScene s = synthetic_scene({height, width, bands, noise, seed});
        py::array_t<std::uint16_t> labels({s.height, s.width});
        std::copy(s.labels.begin(), s.labels.end(), labels.mutable_data());
        return py::make_tuple(to_array(s.cube), labels, s.class_names);
    }, py::arg("height") = 32, py::arg("width") = 32, py::arg("bands") = 20, py::arg("noise") = 0.15, py::arg("seed") = 7);

    m.def("selfcheck", [] {
        std::vector<py::tuple> out;
        for (const auto& c : run_selfcheck()) out.push_back(py::make_tuple(c.name, c.passed, c.detail));
        return out;
    });
}
