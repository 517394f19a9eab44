#include "softsparse/lenet.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "softsparse/error.hpp"

namespace softsparse {

namespace {

constexpr std::size_t kImageSide = 28;

QuantTensor quantize(const std::vector<float>& w, std::vector<std::size_t> shape, int scale, Rounding rounding,
                     const std::string& what) {
    std::vector<std::int32_t> q(w.size());
    const double unit = std::ldexp(1.0, scale);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!std::isfinite(w[i])) {
            throw DomainError(what + " holds a non-finite value");
        }
        const double v = double(w[i]) * unit;
        if (std::fabs(v) > double(kTensorMagnitudeLimit)) {
            throw OverflowError(what + " leaves the tensor range at scale " + std::to_string(scale));
        }
        q[i] = static_cast<std::int32_t>(round_real(v, rounding));
    }
    return QuantTensor(std::move(shape), std::move(q), scale);
}

ConvLayer quantize_conv(const std::vector<float>& w, const std::vector<float>& b, std::size_t out,
                        std::size_t in, std::size_t k, int in_scale, int w_scale, Rounding rounding,
                        const std::string& name) {
    return ConvLayer(quantize(w, {out, in, k, k}, w_scale, rounding, name + ".weight"),
                     quantize(b, {out}, in_scale + w_scale, rounding, name + ".bias"));
}

// Activation followed by the move to the planned activation scale.
QuantTensor activate(const QuantTensor& t, Activation a, int scale, Rounding rounding) {
    if (a == Activation::Tanh) {
        return apply_activation(t, a, scale, rounding);
    }
    return requantize(apply_activation(t, a, scale, rounding), scale, rounding);
}

std::vector<std::uint32_t> dims32(const std::vector<std::size_t>& shape) {
    return {shape.begin(), shape.end()};
}

std::vector<std::size_t> dims(const WeightRecord& r) {
    return {r.shape.begin(), r.shape.end()};
}

constexpr std::size_t kScaleWords = 11; // input, 5 weight, 4 activation, rounding

SampleStats summarize(const std::vector<double>& v) {
    SampleStats s;
    if (v.empty()) return s;
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    double sum = 0;
    for (double x : v) sum += x;
    s.mean = sum / double(v.size());
    double sq = 0;
    for (double x : v) sq += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(sq / double(v.size()));
    return s;
}

} // namespace

ScalePlan ScalePlan::defaults(Activation activation) {
    ScalePlan p;
    if (activation == Activation::Tanh) {
        // Fine resolution on the maps feeding C3 and C5 makes exact zeros
        // from pooling cancellation rare; 16 bits still leaves C3/C5
        // accumulators several bits of int32 headroom.
        p.activation = {16, 16, 12, 12};
        p.rounding = Rounding::HalfAwayKeepNonzero;
    }
    return p;
}

LeNet5Model::LeNet5Model(Activation activation, ScalePlan plan, ConvLayer c1, ConvLayer c3, ConvLayer c5,
                         QuantTensor f6_w, QuantTensor f6_b, QuantTensor out_w, QuantTensor out_b)
    : activation_(activation), plan_(plan), c1_(std::move(c1)), c3_(std::move(c3)), c5_(std::move(c5)),
      f6_w_(std::move(f6_w)), f6_b_(std::move(f6_b)), out_w_(std::move(out_w)), out_b_(std::move(out_b)) {
    auto expect = [](bool ok, const char* what) {
        if (!ok) throw ShapeError(std::string("LeNet-5 ") + what + " has the wrong shape");
    };
    expect(c1_.weights().shape() == std::vector<std::size_t>{6, 1, 5, 5}, "C1");
    expect(c3_.weights().shape() == std::vector<std::size_t>{16, 6, 5, 5}, "C3");
    expect(c5_.weights().shape() == std::vector<std::size_t>{120, 16, 4, 4}, "C5");
    expect(f6_w_.shape() == std::vector<std::size_t>{84, 120} && f6_b_.size() == 84, "F6");
    expect(out_w_.shape() == std::vector<std::size_t>{10, 84} && out_b_.size() == 10, "output layer");
}

LeNet5Model quantize_model(const FloatLeNet& n, const ScalePlan& p) {
    const auto& w = p.weight;
    const auto& a = p.activation;
    const Rounding r = p.rounding;
    return LeNet5Model(n.activation, p, quantize_conv(n.c1_w, n.c1_b, 6, 1, 5, p.input, w[0], r, "c1"),
                       quantize_conv(n.c3_w, n.c3_b, 16, 6, 5, a[0], w[1], r, "c3"),
                       quantize_conv(n.c5_w, n.c5_b, 120, 16, 4, a[1], w[2], r, "c5"),
                       quantize(n.f6_w, {84, 120}, w[3], r, "f6.weight"),
                       quantize(n.f6_b, {84}, a[2] + w[3], r, "f6.bias"),
                       quantize(n.out_w, {10, 84}, w[4], r, "out.weight"),
                       quantize(n.out_b, {10}, a[3] + w[4], r, "out.bias"));
}

LeNet5Model quantize_model(const FloatLeNet& net) {
    return quantize_model(net, ScalePlan::defaults(net.activation));
}

MacCounters InferenceReport::total() const {
    MacCounters t;
    for (const auto& c : conv) t += c;
    return t;
}

QuantTensor image_tensor(std::span<const std::uint8_t> image, int input_scale) {
    if (image.size() != kImageSide * kImageSide) {
        throw ShapeError("LeNet-5 expects a 28x28 image, got " + std::to_string(image.size()) + " pixels");
    }
    return QuantTensor({1, kImageSide, kImageSide}, std::vector<std::int32_t>(image.begin(), image.end()),
                       input_scale);
}

InferenceReport infer(std::span<const std::uint8_t> image, const LeNet5Model& model, const ConvMode& mode) {
    return infer(image, model, {mode, mode, mode});
}

InferenceReport infer(std::span<const std::uint8_t> image, const LeNet5Model& model,
                      const std::array<ConvMode, 3>& modes) {
    const auto& p = model.plan();
    const Activation act = model.activation();
    InferenceReport rep;

    auto r1 = conv2d(image_tensor(image, p.input), model.c1(), modes[0]);
    const auto h1 = activate(r1.output, act, p.activation[0], p.rounding);
    const auto s2 = avg_pool_2x2(h1, p.rounding);
    auto r3 = conv2d(s2, model.c3(), modes[1]);
    const auto h3 = activate(r3.output, act, p.activation[1], p.rounding);
    const auto s4 = avg_pool_2x2(h3, p.rounding);
    auto r5 = conv2d(s4, model.c5(), modes[2]);
    const auto h5 = activate(r5.output, act, p.activation[2], p.rounding).reshaped({120});
    const auto f6 = fully_connected(h5, model.f6_weights(), model.f6_bias());
    const auto h6 = activate(f6, act, p.activation[3], p.rounding);
    const auto out = fully_connected(h6, model.out_weights(), model.out_bias());

    rep.conv = {r1.counters, r3.counters, r5.counters};
    rep.sparsity = {sparsity_of(h1), sparsity_of(s2), sparsity_of(h3),
                    sparsity_of(s4), sparsity_of(h5), sparsity_of(h6)};
    const auto logits = out.data();
    rep.logits.assign(logits.begin(), logits.end());
    rep.predicted = static_cast<int>(std::max_element(rep.logits.begin(), rep.logits.end()) - rep.logits.begin());
    return rep;
}

double EvaluationReport::mean_performed_total() const {
    return mean_conv[0][2] + mean_conv[1][2] + mean_conv[2][2];
}

double EvaluationReport::mean_nonzero_total() const {
    return mean_conv[0][1] + mean_conv[1][1] + mean_conv[2][1];
}

EvaluationReport evaluate(const MnistSet& set, const LeNet5Model& model, const ConvMode& mode, unsigned workers) {
    const std::size_t n = set.size();
    std::vector<InferenceReport> reports(n);
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));

    auto run_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) reports[i] = infer(set.image(i), model, mode);
    };
    if (workers == 1) {
        run_range(0, n);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + workers - 1) / workers;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    run_range(std::min(n, w * chunk), std::min(n, (w + 1) * chunk));
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    EvaluationReport ev;
    ev.mode = mode.label();
    ev.images = n;
    std::array<std::array<std::uint64_t, 3>, 3> sums{};
    std::array<std::vector<double>, 6> sparsity;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = reports[i];
        ev.predictions.push_back(r.predicted);
        ev.correct += r.predicted == set.label(i);
        for (std::size_t l = 0; l < 3; ++l) {
            sums[l][0] += r.conv[l].exact_total;
            sums[l][1] += r.conv[l].nonzero_total;
            sums[l][2] += r.conv[l].performed;
        }
        if (r.conv[1].nonzero_total != r.conv[1].exact_total || r.conv[2].nonzero_total != r.conv[2].exact_total) {
            ++ev.images_with_conv_zeros;
        }
        for (std::size_t l = 0; l < 6; ++l) sparsity[l].push_back(r.sparsity[l]);
    }
    if (n > 0) {
        ev.accuracy = double(ev.correct) / double(n);
        for (std::size_t l = 0; l < 3; ++l)
            for (std::size_t k = 0; k < 3; ++k) ev.mean_conv[l][k] = double(sums[l][k]) / double(n);
    }
    for (std::size_t l = 0; l < 6; ++l) ev.sparsity[l] = summarize(sparsity[l]);
    return ev;
}

WeightContainer to_container(const FloatLeNet& net) {
    WeightContainer c;
    c.add_float32("c1.weight", {6, 1, 5, 5}, net.c1_w);
    c.add_float32("c1.bias", {6}, net.c1_b);
    c.add_float32("c3.weight", {16, 6, 5, 5}, net.c3_w);
    c.add_float32("c3.bias", {16}, net.c3_b);
    c.add_float32("c5.weight", {120, 16, 4, 4}, net.c5_w);
    c.add_float32("c5.bias", {120}, net.c5_b);
    c.add_float32("f6.weight", {84, 120}, net.f6_w);
    c.add_float32("f6.bias", {84}, net.f6_b);
    c.add_float32("out.weight", {10, 84}, net.out_w);
    c.add_float32("out.bias", {10}, net.out_b);
    c.add_int32("meta.activation", {1}, {static_cast<std::int32_t>(net.activation)});
    return c;
}

WeightContainer to_container(const LeNet5Model& m) {
    WeightContainer c;
    auto put = [&](const std::string& name, const QuantTensor& t) {
        const auto d = t.data();
        c.add_int32(name, dims32(t.shape()), {d.begin(), d.end()});
    };
    put("c1.weight", m.c1().weights());
    put("c1.bias", m.c1().bias());
    put("c3.weight", m.c3().weights());
    put("c3.bias", m.c3().bias());
    put("c5.weight", m.c5().weights());
    put("c5.bias", m.c5().bias());
    put("f6.weight", m.f6_weights());
    put("f6.bias", m.f6_bias());
    put("out.weight", m.out_weights());
    put("out.bias", m.out_bias());
    c.add_int32("meta.activation", {1}, {static_cast<std::int32_t>(m.activation())});
    const auto& p = m.plan();
    std::vector<std::int32_t> scales{p.input};
    scales.insert(scales.end(), p.weight.begin(), p.weight.end());
    scales.insert(scales.end(), p.activation.begin(), p.activation.end());
    scales.push_back(static_cast<std::int32_t>(p.rounding));
    c.add_int32("meta.scales", {kScaleWords}, scales);
    return c;
}

bool is_quantized_container(const WeightContainer& c) {
    return c.get("c1.weight").dtype() == DType::Int32;
}

namespace {

Activation activation_from(const WeightContainer& c) {
    const auto& a = c.int32("meta.activation");
    if (a.size() != 1 || a[0] < 0 || a[0] > 1) {
        throw FormatError("meta.activation must hold 0 (relu) or 1 (tanh)");
    }
    return static_cast<Activation>(a[0]);
}

} // namespace

FloatLeNet float_model_from(const WeightContainer& c) {
    FloatLeNet n;
    n.activation = activation_from(c);
    auto get = [&](const char* name, std::size_t expected) {
        const auto& v = c.float32(name);
        if (v.size() != expected) {
            throw FormatError(std::string("record '") + name + "' has " + std::to_string(v.size()) +
                              " elements, expected " + std::to_string(expected));
        }
        return v;
    };
    n.c1_w = get("c1.weight", 150);
    n.c1_b = get("c1.bias", 6);
    n.c3_w = get("c3.weight", 2400);
    n.c3_b = get("c3.bias", 16);
    n.c5_w = get("c5.weight", 30720);
    n.c5_b = get("c5.bias", 120);
    n.f6_w = get("f6.weight", 10080);
    n.f6_b = get("f6.bias", 84);
    n.out_w = get("out.weight", 840);
    n.out_b = get("out.bias", 10);
    return n;
}

LeNet5Model quantized_model_from(const WeightContainer& c) {
    const auto& s = c.int32("meta.scales");
    if (s.size() != kScaleWords || s.back() < 0 || s.back() > 1) {
        throw FormatError("meta.scales must hold 11 words");
    }
    ScalePlan p;
    p.input = s[0];
    std::copy(s.begin() + 1, s.begin() + 6, p.weight.begin());
    std::copy(s.begin() + 6, s.begin() + 10, p.activation.begin());
    p.rounding = static_cast<Rounding>(s[10]);

    auto tensor = [&](const char* name, int scale) {
        const auto& r = c.get(name);
        try {
            return QuantTensor(dims(r), c.int32(name), scale);
        } catch (const ShapeError& e) {
            throw FormatError(std::string("record '") + name + "': " + e.what());
        }
    };
    const auto& w = p.weight;
    const auto& a = p.activation;
    try {
        return LeNet5Model(activation_from(c), p,
                           ConvLayer(tensor("c1.weight", w[0]), tensor("c1.bias", p.input + w[0])),
                           ConvLayer(tensor("c3.weight", w[1]), tensor("c3.bias", a[0] + w[1])),
                           ConvLayer(tensor("c5.weight", w[2]), tensor("c5.bias", a[1] + w[2])),
                           tensor("f6.weight", w[3]), tensor("f6.bias", a[2] + w[3]), tensor("out.weight", w[4]),
                           tensor("out.bias", a[3] + w[4]));
    } catch (const ShapeError& e) {
        throw FormatError(e.what());
    }
}

LeNet5Model model_from(const WeightContainer& c, const std::optional<ScalePlan>& plan) {
    if (is_quantized_container(c)) {
        return quantized_model_from(c);
    }
    const auto net = float_model_from(c);
    return quantize_model(net, plan ? *plan : ScalePlan::defaults(net.activation));
}

} // namespace softsparse
