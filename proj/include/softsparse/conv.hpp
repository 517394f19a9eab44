#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "softsparse/prune.hpp"
#include "softsparse/rounding.hpp"
#include "softsparse/tensor.hpp"

namespace softsparse {

/// Multiplication tallies. Bias additions are never counted.
struct MacCounters {
    std::uint64_t exact_total = 0;   // every product in the layer definition
    std::uint64_t nonzero_total = 0; // products with both operands nonzero
    std::uint64_t performed = 0;     // multiplications actually executed

    MacCounters& operator+=(const MacCounters& o) {
        exact_total += o.exact_total;
        nonzero_total += o.nonzero_total;
        performed += o.performed;
        return *this;
    }
    bool operator==(const MacCounters&) const = default;
};

class ConvMode {
public:
    enum class Kind { Exact, ZeroSkip, Approx };

    static ConvMode exact() { return ConvMode(Kind::Exact, std::nullopt); }
    static ConvMode zero_skip() { return ConvMode(Kind::ZeroSkip, std::nullopt); }
    static ConvMode approx(PruneThreshold t) { return ConvMode(Kind::Approx, t); }

    Kind kind() const { return kind_; }
    /// Only valid for Approx; throws DomainError otherwise.
    const PruneThreshold& threshold() const;

    /// "exact", "zeroskip" or "approx".
    std::string name() const;
    /// name plus threshold label for Approx, e.g. "approx(f:0.3)".
    std::string label() const;

private:
    ConvMode(Kind k, std::optional<PruneThreshold> t) : kind_(k), threshold_(t) {}
    Kind kind_;
    std::optional<PruneThreshold> threshold_;
};

/// Valid, stride-1 convolution layer. Weights are (out, in, kh, kw); bias is
/// (out) and must carry scale input_scale + weight_scale at evaluation time.
class ConvLayer {
public:
    ConvLayer(QuantTensor weights, QuantTensor bias);

    std::size_t in_channels() const { return weights_.dim(1); }
    std::size_t out_channels() const { return weights_.dim(0); }
    std::size_t kernel_h() const { return weights_.dim(2); }
    std::size_t kernel_w() const { return weights_.dim(3); }
    /// Receptive field length in_channels * kernel_h * kernel_w.
    std::size_t taps() const { return in_channels() * kernel_h() * kernel_w(); }

    const QuantTensor& weights() const { return weights_; }
    const QuantTensor& bias() const { return bias_; }
    const std::vector<std::int8_t>& weight_msbs() const { return weight_msbs_; }

private:
    QuantTensor weights_;
    QuantTensor bias_;
    std::vector<std::int8_t> weight_msbs_;
};

struct ConvResult {
    QuantTensor output;
    MacCounters counters;
    /// Per output element (out_ch, y, x order), the kept flag of each tap in
    /// (in_ch, r, s) order. Filled only when requested.
    std::vector<std::vector<bool>> kept_masks;
};

/// 2-D valid convolution of a (C, H, W) tensor in the requested mode.
/// Approx mode runs one approx_dot per output element over its full
/// receptive field. Throws ShapeError on mismatched shapes/scales and
/// OverflowError if an output does not fit a signed 32-bit register.
ConvResult conv2d(const QuantTensor& input, const ConvLayer& layer, const ConvMode& mode,
                  bool record_masks = false);

/// 2x2 mean pooling, stride 2.
QuantTensor avg_pool_2x2(const QuantTensor& input, Rounding rounding = Rounding::HalfAway);

enum class Activation { ReLU, Tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

/// ReLU keeps the input scale and ignores out_scale_exp. Tanh dequantizes,
/// applies tanh and requantizes to out_scale_exp.
QuantTensor apply_activation(const QuantTensor& input, Activation kind, int out_scale_exp,
                             Rounding rounding = Rounding::HalfAway);

/// Moves a tensor to a smaller (right shift) or larger (left shift) scale.
QuantTensor requantize(const QuantTensor& input, int out_scale_exp,
                       Rounding rounding = Rounding::HalfAway);

/// Exact dense layer: weights (out, in), bias (out) at input+weight scale.
/// The result stays at the accumulator scale unless out_scale_exp is given.
QuantTensor fully_connected(const QuantTensor& input, const QuantTensor& weights,
                            const QuantTensor& bias, std::optional<int> out_scale_exp = std::nullopt,
                            Rounding rounding = Rounding::HalfAway);

/// Fraction of elements that are exactly zero; 0 for an empty tensor.
double sparsity_of(const QuantTensor& input);

} // namespace softsparse
