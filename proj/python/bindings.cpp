#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "softsparse/accel.hpp"
#include "softsparse/conv.hpp"
#include "softsparse/error.hpp"
#include "softsparse/lenet.hpp"
#include "softsparse/mnist.hpp"
#include "softsparse/prune.hpp"
#include "softsparse/weights.hpp"

namespace py = pybind11;
using namespace softsparse;

namespace {

using I32Array = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

ConvMode make_mode(const std::string& mode, std::optional<int> t, std::optional<double> f) {
    if (mode == "exact") return ConvMode::exact();
    if (mode == "zeroskip") return ConvMode::zero_skip();
    if (mode != "approx") throw ConfigError("unknown mode '" + mode + "'");
    if (t && f) throw ConfigError("give either t or f, not both");
    if (t) return ConvMode::approx(PruneThreshold::from_int(*t));
    if (f) return ConvMode::approx(PruneThreshold::from_fraction(*f));
    throw ConfigError("approx mode needs t or f");
}

QuantTensor to_tensor(const I32Array& a, int scale) {
    std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
    return QuantTensor(std::move(shape), std::vector<std::int32_t>(a.data(), a.data() + a.size()), scale);
}

py::array_t<std::int32_t> to_array(const QuantTensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<std::int32_t> out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

py::dict counters(const MacCounters& c) {
    py::dict d;
    d["exact"] = c.exact_total;
    d["nonzero"] = c.nonzero_total;
    d["performed"] = c.performed;
    return d;
}

std::span<const std::uint8_t> image_span(const U8Array& img) {
    if (img.size() != 784) throw ShapeError("expected a 28x28 image");
    return {img.data(), static_cast<std::size_t>(img.size())};
}

} // namespace

PYBIND11_MODULE(_softsparse, m) {
    m.doc() = "MSB-proxy approximate convolution and LeNet-5 integer inference";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<DomainError>(m, "DomainError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<OverflowError>(m, "OverflowError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<StateError>(m, "StateError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<AssertionFailure>(m, "AssertionFailure", base.ptr());

    m.def(
        "msb",
        [](std::int32_t x) -> std::optional<int> {
            const auto p = msb_pos(x);
            if (p.is_zero()) return std::nullopt;
            return p.position();
        },
        py::arg("x"), "floor(log2|x|), or None for 0.");

    m.def(
        "threshold_from_fraction", [](double f) { return PruneThreshold::from_fraction(f).t_int(); }, py::arg("f"),
        "Integer threshold ceil(log2(1/f)), at least 1.");

    m.def(
        "approx_dot",
        [](const I32Array& a, const I32Array& b, int t) {
            const auto r = approx_dot(std::span<const std::int32_t>(a.data(), a.size()),
                                      std::span<const std::int32_t>(b.data(), b.size()), PruneThreshold::from_int(t));
            py::dict d;
            d["sum"] = r.sum;
            d["kept"] = r.kept_mask;
            d["performed"] = r.mults_performed;
            d["msb_max"] = r.msb_max.is_zero() ? py::object(py::none()) : py::int_(r.msb_max.sum());
            return d;
        },
        py::arg("a"), py::arg("b"), py::arg("t"),
        "Approximate dot product keeping products within t MSB units of the largest.");

    m.def(
        "conv2d",
        [](const I32Array& input, const I32Array& weights, std::optional<I32Array> bias, const std::string& mode,
           std::optional<int> t, std::optional<double> f) {
            if (weights.ndim() != 4) throw ShapeError("weights must be (out, in, kh, kw)");
            const auto b = bias ? to_tensor(*bias, 0) : QuantTensor::zeros({std::size_t(weights.shape(0))}, 0);
            const ConvLayer layer(to_tensor(weights, 0), b);
            const auto r = conv2d(to_tensor(input, 0), layer, make_mode(mode, t, f));
            return py::make_tuple(to_array(r.output), counters(r.counters));
        },
        py::arg("input"), py::arg("weights"), py::arg("bias") = py::none(), py::arg("mode") = "exact",
        py::arg("t") = py::none(), py::arg("f") = py::none(),
        "Valid stride-1 integer convolution. Returns (output, counters).");

    m.def(
        "accel_run",
        [](const I32Array& window, const I32Array& kernel, int t) {
            if (window.size() != 16 || kernel.size() != 9) throw ShapeError("need a 16-word window and a 9-tap kernel");
            accel::ConvAccelerator acc;
            acc.load_kernel(std::span<const std::int32_t, 9>(kernel.data(), 9));
            accel::VectorMemory mem(std::vector<std::int32_t>(window.data(), window.data() + 16));
            const auto h = acc.issue(accel::AccelRequest{}, mem, PruneThreshold::from_int(t));
            const auto cycles = acc.run_until_done(h);
            const auto y = acc.read_outputs(h);
            std::ostringstream trace;
            accel::write_trace_jsonl(trace, acc.trace());
            py::dict d;
            d["outputs"] = std::vector<std::int32_t>(y.begin(), y.end());
            d["cycles"] = cycles;
            d["trace"] = trace.str();
            return d;
        },
        py::arg("window"), py::arg("kernel"), py::arg("t"),
        "Runs the accelerator model on one 4x4 window. Returns outputs, cycles and the JSONL trace.");

    m.def(
        "load_idx_images",
        [](const std::filesystem::path& p) {
            auto imgs = load_idx_images(p);
            py::array_t<std::uint8_t> out({imgs.count, imgs.rows, imgs.cols});
            std::copy(imgs.pixels.begin(), imgs.pixels.end(), out.mutable_data());
            return out;
        },
        py::arg("path"));
    m.def(
        "load_idx_labels",
        [](const std::filesystem::path& p) {
            const auto l = load_idx_labels(p);
            py::array_t<std::uint8_t> out(l.size());
            std::copy(l.begin(), l.end(), out.mutable_data());
            return out;
        },
        py::arg("path"));
    m.def(
        "dataset_stats",
        [](const U8Array& images) {
            if (images.ndim() != 3) throw ShapeError("images must be (count, rows, cols)");
            const auto s = dataset_stats(std::span<const std::uint8_t>(images.data(), images.size()),
                                         images.shape(1) * images.shape(2));
            py::dict d;
            d["images"] = s.images;
            d["zero_fraction"] = s.zero_fraction;
            d["mean_zero_pixels"] = s.mean_zero_pixels;
            d["stddev_zero_pixels"] = s.stddev_zero_pixels;
            d["min_zero_pixels"] = s.min_zero_pixels;
            d["max_zero_pixels"] = s.max_zero_pixels;
            d["pixel_mean"] = s.pixel_mean;
            d["pixel_stddev"] = s.pixel_stddev;
            return d;
        },
        py::arg("images"));

    py::class_<LeNet5Model>(m, "LeNet5")
        .def_static(
            "load", [](const std::filesystem::path& p) { return model_from(load_weights(p)); }, py::arg("path"),
            "Loads a float (quantized on load) or quantized LNW1 file.")
        .def_static(
            "random",
            [](const std::string& act, std::uint64_t seed) {
                return quantize_model(FloatLeNet::init(parse_activation(act), seed));
            },
            py::arg("activation") = "relu", py::arg("seed") = 1, "Quantized randomly initialized network.")
        .def_property_readonly("activation", [](const LeNet5Model& mdl) { return to_string(mdl.activation()); })
        .def(
            "save", [](const LeNet5Model& mdl, const std::filesystem::path& p) { save_weights(p, to_container(mdl)); },
            py::arg("path"))
        .def(
            "infer",
            [](const LeNet5Model& mdl, const U8Array& image, const std::string& mode, std::optional<int> t,
               std::optional<double> f) {
                const auto r = infer(image_span(image), mdl, make_mode(mode, t, f));
                py::dict d;
                d["logits"] = r.logits;
                d["predicted"] = r.predicted;
                py::list conv;
                for (const auto& c : r.conv) conv.append(counters(c));
                d["conv"] = conv;
                d["total"] = counters(r.total());
                d["sparsity"] = std::vector<double>(r.sparsity.begin(), r.sparsity.end());
                return d;
            },
            py::arg("image"), py::arg("mode") = "exact", py::arg("t") = py::none(), py::arg("f") = py::none());
}
