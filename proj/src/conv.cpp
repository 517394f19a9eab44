#include "softsparse/conv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "softsparse/error.hpp"

namespace softsparse {

namespace {

std::int32_t checked_accumulator(std::int64_t v) {
    if (v > std::numeric_limits<std::int32_t>::max() ||
        v < std::numeric_limits<std::int32_t>::min()) {
        throw OverflowError("convolution output " + std::to_string(v) +
                            " does not fit a signed 32-bit accumulator");
    }
    return checked_element(v, "convolution output");
}

void require_rank(const QuantTensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + " expects a rank-" + std::to_string(rank) +
                         " tensor, got " + t.shape_string());
    }
}

} // namespace

const PruneThreshold& ConvMode::threshold() const {
    if (!threshold_) {
        throw DomainError("conv mode " + name() + " carries no threshold");
    }
    return *threshold_;
}

std::string ConvMode::name() const {
    switch (kind_) {
    case Kind::Exact: return "exact";
    case Kind::ZeroSkip: return "zeroskip";
    case Kind::Approx: return "approx";
    }
    return "?";
}

std::string ConvMode::label() const {
    return kind_ == Kind::Approx ? "approx(" + threshold_->label() + ")" : name();
}

ConvLayer::ConvLayer(QuantTensor weights, QuantTensor bias)
    : weights_(std::move(weights)), bias_(std::move(bias)) {
    require_rank(weights_, 4, "conv weights");
    require_rank(bias_, 1, "conv bias");
    if (bias_.dim(0) != weights_.dim(0)) {
        throw ShapeError("conv bias length " + std::to_string(bias_.dim(0)) +
                         " does not match " + std::to_string(weights_.dim(0)) + " filters");
    }
    if (weights_.size() == 0) {
        throw ShapeError("conv layer with an empty kernel");
    }
    weight_msbs_ = msb_codes(weights_.data());
}

ConvResult conv2d(const QuantTensor& input, const ConvLayer& layer, const ConvMode& mode,
                  bool record_masks) {
    require_rank(input, 3, "conv2d input");
    const std::size_t in_c = input.dim(0);
    const std::size_t in_h = input.dim(1);
    const std::size_t in_w = input.dim(2);
    const std::size_t kh = layer.kernel_h();
    const std::size_t kw = layer.kernel_w();
    if (in_c != layer.in_channels()) {
        throw ShapeError("conv2d input has " + std::to_string(in_c) + " channels, layer expects " +
                         std::to_string(layer.in_channels()));
    }
    if (in_h < kh || in_w < kw) {
        throw ShapeError("conv2d input " + input.shape_string() + " smaller than kernel");
    }
    const int out_scale = input.scale_exp() + layer.weights().scale_exp();
    if (layer.bias().scale_exp() != out_scale) {
        throw ShapeError("conv bias scale " + std::to_string(layer.bias().scale_exp()) +
                         " must equal input+weight scale " + std::to_string(out_scale));
    }

    const std::size_t out_c = layer.out_channels();
    const std::size_t out_h = in_h - kh + 1;
    const std::size_t out_w = in_w - kw + 1;
    const std::size_t taps = layer.taps();
    const std::size_t plane = out_h * out_w;

    const auto in = input.data();
    const auto weights = layer.weights().data();
    const auto bias = layer.bias().data();
    const auto& w_msb = layer.weight_msbs();
    std::vector<std::int8_t> in_msb;
    if (mode.kind() == ConvMode::Kind::Approx) {
        in_msb = msb_codes(in);
    }
    const int t_int = mode.kind() == ConvMode::Kind::Approx ? mode.threshold().t_int() : 0;

    std::vector<std::int32_t> out(out_c * plane);
    ConvResult result;
    if (record_masks) {
        result.kept_masks.resize(out_c * plane);
    }

    std::vector<std::int32_t> window(taps);
    std::vector<std::int8_t> window_msb(taps);
    std::vector<std::uint8_t> kept(record_masks ? taps : 0);
    MacCounters counters;

    for (std::size_t oy = 0; oy < out_h; ++oy) {
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            // Receptive field in (in_ch, r, s) order, matching the weight layout.
            std::size_t k = 0;
            for (std::size_t c = 0; c < in_c; ++c) {
                for (std::size_t r = 0; r < kh; ++r) {
                    const std::size_t row = (c * in_h + oy + r) * in_w + ox;
                    for (std::size_t s = 0; s < kw; ++s, ++k) {
                        window[k] = in[row + s];
                        if (!in_msb.empty()) {
                            window_msb[k] = in_msb[row + s];
                        }
                    }
                }
            }

            for (std::size_t oc = 0; oc < out_c; ++oc) {
                const std::int32_t* wrow = weights.data() + oc * taps;
                std::int64_t sum = 0;
                std::uint64_t nonzero = 0;
                std::uint64_t performed = 0;
                switch (mode.kind()) {
                case ConvMode::Kind::Exact:
                    for (std::size_t i = 0; i < taps; ++i) {
                        sum += static_cast<std::int64_t>(window[i]) * wrow[i];
                        nonzero += (window[i] != 0 && wrow[i] != 0);
                    }
                    performed = taps;
                    break;
                case ConvMode::Kind::ZeroSkip:
                    for (std::size_t i = 0; i < taps; ++i) {
                        if (window[i] != 0 && wrow[i] != 0) {
                            sum += static_cast<std::int64_t>(window[i]) * wrow[i];
                            ++nonzero;
                        }
                    }
                    performed = nonzero;
                    break;
                case ConvMode::Kind::Approx: {
                    const DotTally tally = approx_dot_packed(
                        window, window_msb, std::span<const std::int32_t>(wrow, taps),
                        std::span<const std::int8_t>(w_msb.data() + oc * taps, taps), t_int, kept);
                    sum = tally.sum;
                    nonzero = tally.nonzero;
                    performed = tally.performed;
                    break;
                }
                }
                const std::size_t idx = oc * plane + oy * out_w + ox;
                out[idx] = checked_accumulator(sum + bias[oc]);
                counters.exact_total += taps;
                counters.nonzero_total += nonzero;
                counters.performed += performed;
                if (record_masks) {
                    auto& mask = result.kept_masks[idx];
                    if (mode.kind() == ConvMode::Kind::Approx) {
                        mask.assign(kept.begin(), kept.end());
                    } else {
                        mask.resize(taps);
                        for (std::size_t i = 0; i < taps; ++i) {
                            mask[i] = mode.kind() == ConvMode::Kind::Exact ||
                                      (window[i] != 0 && wrow[i] != 0);
                        }
                    }
                }
            }
        }
    }

    result.output = QuantTensor({out_c, out_h, out_w}, std::move(out), out_scale);
    result.counters = counters;
    return result;
}

QuantTensor avg_pool_2x2(const QuantTensor& input, Rounding rounding) {
    require_rank(input, 3, "avg_pool_2x2");
    const std::size_t c = input.dim(0);
    const std::size_t h = input.dim(1);
    const std::size_t w = input.dim(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("avg_pool_2x2 needs even spatial dims, got " + input.shape_string());
    }
    const std::size_t oh = h / 2;
    const std::size_t ow = w / 2;
    std::vector<std::int32_t> out(c * oh * ow);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const std::int64_t sum = std::int64_t{input.at(ch, 2 * y, 2 * x)} +
                                         input.at(ch, 2 * y, 2 * x + 1) +
                                         input.at(ch, 2 * y + 1, 2 * x) +
                                         input.at(ch, 2 * y + 1, 2 * x + 1);
                out[(ch * oh + y) * ow + x] = static_cast<std::int32_t>(round_div(sum, 4, rounding));
            }
        }
    }
    return QuantTensor({c, oh, ow}, std::move(out), input.scale_exp());
}

std::string to_string(Activation a) {
    return a == Activation::ReLU ? "relu" : "tanh";
}

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "tanh") return Activation::Tanh;
    throw DomainError("unknown activation '" + s + "' (expected relu or tanh)");
}

QuantTensor apply_activation(const QuantTensor& input, Activation kind, int out_scale_exp,
                             Rounding rounding) {
    const auto in = input.data();
    std::vector<std::int32_t> out(in.size());
    if (kind == Activation::ReLU) {
        std::transform(in.begin(), in.end(), out.begin(),
                       [](std::int32_t v) { return std::max(v, std::int32_t{0}); });
        return QuantTensor(input.shape(), std::move(out), input.scale_exp());
    }
    if (out_scale_exp < 0 || out_scale_exp > 30) {
        throw DomainError("tanh output scale must lie in [0, 30]");
    }
    const double in_step = std::ldexp(1.0, -input.scale_exp());
    const double out_unit = std::ldexp(1.0, out_scale_exp);
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = static_cast<std::int32_t>(round_real(std::tanh(in[i] * in_step) * out_unit, rounding));
    }
    return QuantTensor(input.shape(), std::move(out), out_scale_exp);
}

QuantTensor requantize(const QuantTensor& input, int out_scale_exp, Rounding rounding) {
    const int shift = input.scale_exp() - out_scale_exp;
    const auto in = input.data();
    std::vector<std::int32_t> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        const std::int64_t v = shift >= 0 ? round_shift(in[i], shift, rounding)
                                          : static_cast<std::int64_t>(in[i]) * (std::int64_t{1} << -shift);
        out[i] = checked_element(v, "requantize");
    }
    return QuantTensor(input.shape(), std::move(out), out_scale_exp);
}

QuantTensor fully_connected(const QuantTensor& input, const QuantTensor& weights,
                            const QuantTensor& bias, std::optional<int> out_scale_exp,
                            Rounding rounding) {
    require_rank(weights, 2, "fully_connected weights");
    require_rank(bias, 1, "fully_connected bias");
    const std::size_t rows = weights.dim(0);
    const std::size_t cols = weights.dim(1);
    if (input.size() != cols) {
        throw ShapeError("fully_connected input length " + std::to_string(input.size()) +
                         " does not match " + std::to_string(cols) + " weight columns");
    }
    if (bias.dim(0) != rows) {
        throw ShapeError("fully_connected bias length mismatch");
    }
    const int acc_scale = input.scale_exp() + weights.scale_exp();
    if (bias.scale_exp() != acc_scale) {
        throw ShapeError("fully_connected bias scale " + std::to_string(bias.scale_exp()) +
                         " must equal input+weight scale " + std::to_string(acc_scale));
    }
    const auto x = input.data();
    const auto w = weights.data();
    const auto b = bias.data();
    std::vector<std::int32_t> out(rows);
    const int shift = out_scale_exp ? acc_scale - *out_scale_exp : 0;
    if (shift < 0) {
        throw DomainError("fully_connected cannot raise the accumulator scale");
    }
    for (std::size_t r = 0; r < rows; ++r) {
        std::int64_t acc = b[r];
        const std::int32_t* wr = w.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) {
            acc += static_cast<std::int64_t>(wr[c]) * x[c];
        }
        out[r] = checked_element(round_shift(acc, shift, rounding), "fully_connected output");
    }
    return QuantTensor({rows}, std::move(out), acc_scale - shift);
}

double sparsity_of(const QuantTensor& input) {
    if (input.size() == 0) {
        return 0.0;
    }
    const auto d = input.data();
    const auto zeros = std::count(d.begin(), d.end(), 0);
    return static_cast<double>(zeros) / static_cast<double>(d.size());
}

} // namespace softsparse
