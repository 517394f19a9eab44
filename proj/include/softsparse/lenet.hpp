#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "softsparse/conv.hpp"
#include "softsparse/mnist.hpp"
#include "softsparse/weights.hpp"

namespace softsparse {

/// Layer names used for weight records and reports.
inline constexpr std::array<const char*, 5> kLeNetParamLayers{"c1", "c3", "c5", "f6", "out"};
inline constexpr std::array<const char*, 3> kLeNetConvLayers{"C1", "C3", "C5"};
inline constexpr std::array<const char*, 6> kLeNetMapLayers{"C1", "S2", "C3", "S4", "C5", "F6"};

/// Exact multiplication counts of C1, C3 and C5 for a 28x28 input.
inline constexpr std::array<std::uint64_t, 3> kLeNetExactMacs{86400, 153600, 30720};
inline constexpr std::uint64_t kLeNetExactTotal = 270720;

/// Real-valued LeNet-5 parameters, row-major like the quantized layers.
struct FloatLeNet {
    Activation activation = Activation::ReLU;
    std::vector<float> c1_w, c1_b; // (6, 1, 5, 5), (6)
    std::vector<float> c3_w, c3_b; // (16, 6, 5, 5), (16)
    std::vector<float> c5_w, c5_b; // (120, 16, 4, 4), (120)
    std::vector<float> f6_w, f6_b; // (84, 120), (84)
    std::vector<float> out_w, out_b; // (10, 84), (10)

    /// Randomly initialized parameters (He for ReLU, Glorot for Tanh).
    static FloatLeNet init(Activation activation, std::uint64_t seed);

    /// FNV-1a over all parameter bytes; used to check reproducibility.
    std::uint64_t checksum() const;

    bool operator==(const FloatLeNet&) const = default;
};

struct TrainConfig {
    int epochs = 4;
    double learning_rate = 0.02;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    /// Learning rate multiplier applied after every epoch.
    double lr_decay = 0.5;
    /// L2 penalty on weights (biases are not decayed).
    double weight_decay = 0.0;
};

/// Pixels are fed as p / 256, matching the quantized input scale.
std::vector<float> float_forward(const FloatLeNet& net, std::span<const std::uint8_t> image);
double float_accuracy(const FloatLeNet& net, const MnistSet& set);

/// Mini-batch SGD with momentum on softmax cross-entropy. `progress` is
/// called after every epoch with (epoch, mean training loss).
FloatLeNet train_float(const MnistSet& train, Activation activation, const TrainConfig& config,
                       const std::function<void(int, double)>& progress = {});

/// Fixed-point layout of a quantized model. Weight i lives at scale weight[i]
/// (c1, c3, c5, f6, out); post-activation maps of C1, C3, C5 and F6 live at
/// activation[i]. Biases use input scale + weight scale of their layer.
struct ScalePlan {
    int input = 8;
    std::array<int, 5> weight{8, 8, 8, 8, 8};
    std::array<int, 4> activation{8, 8, 8, 8};
    Rounding rounding = Rounding::HalfAway;

    static ScalePlan defaults(Activation activation);
    bool operator==(const ScalePlan&) const = default;
};

class LeNet5Model {
public:
    LeNet5Model(Activation activation, ScalePlan plan, ConvLayer c1, ConvLayer c3, ConvLayer c5,
                QuantTensor f6_w, QuantTensor f6_b, QuantTensor out_w, QuantTensor out_b);

    Activation activation() const { return activation_; }
    const ScalePlan& plan() const { return plan_; }
    const ConvLayer& c1() const { return c1_; }
    const ConvLayer& c3() const { return c3_; }
    const ConvLayer& c5() const { return c5_; }
    const QuantTensor& f6_weights() const { return f6_w_; }
    const QuantTensor& f6_bias() const { return f6_b_; }
    const QuantTensor& out_weights() const { return out_w_; }
    const QuantTensor& out_bias() const { return out_b_; }

private:
    Activation activation_;
    ScalePlan plan_;
    ConvLayer c1_, c3_, c5_;
    QuantTensor f6_w_, f6_b_, out_w_, out_b_;
};

/// round(w * 2^s) per tensor at its planned scale. Throws OverflowError if a
/// value leaves the tensor range and DomainError on non-finite weights.
LeNet5Model quantize_model(const FloatLeNet& net, const ScalePlan& plan);
LeNet5Model quantize_model(const FloatLeNet& net);

struct InferenceReport {
    std::vector<std::int64_t> logits; // at the output accumulator scale
    int predicted = 0;
    std::array<MacCounters, 3> conv;  // C1, C3, C5
    std::array<double, 6> sparsity{}; // C1, S2, C3, S4, C5, F6 outputs

    MacCounters total() const;
};

/// Image as a (1, 28, 28) tensor at the plan's input scale.
QuantTensor image_tensor(std::span<const std::uint8_t> image, int input_scale);

/// C1->act->S2->C3->act->S4->C5->act->F6->act->out. Conv layers honor `mode`,
/// dense layers are always exact.
InferenceReport infer(std::span<const std::uint8_t> image, const LeNet5Model& model, const ConvMode& mode);
/// Same with a separate mode for C1, C3 and C5.
InferenceReport infer(std::span<const std::uint8_t> image, const LeNet5Model& model,
                      const std::array<ConvMode, 3>& modes);

struct SampleStats {
    double mean = 0, min = 0, max = 0, stddev = 0; // population stddev
};

struct EvaluationReport {
    std::string mode;
    std::size_t images = 0;
    std::size_t correct = 0;
    double accuracy = 0;
    std::array<std::array<double, 3>, 3> mean_conv{}; // [layer][exact, nonzero, performed]
    std::array<SampleStats, 6> sparsity{};
    /// Images on which C3 or C5 saw a zero operand (nonzero < exact).
    std::size_t images_with_conv_zeros = 0;
    std::vector<int> predictions;

    double mean_performed_total() const;
    double mean_nonzero_total() const;
};

/// Parallel over images; per-image reports are merged in index order so the
/// result does not depend on the worker count.
EvaluationReport evaluate(const MnistSet& set, const LeNet5Model& model, const ConvMode& mode,
                          unsigned workers = 1);

/// LNW1 conversion. Float models store float32 records and meta.activation;
/// quantized models store int32 records plus meta.scales.
WeightContainer to_container(const FloatLeNet& net);
WeightContainer to_container(const LeNet5Model& model);
bool is_quantized_container(const WeightContainer& c);
FloatLeNet float_model_from(const WeightContainer& c);
LeNet5Model quantized_model_from(const WeightContainer& c);
/// Quantized models load as is; float models are quantized with `plan` or the
/// activation's default plan.
LeNet5Model model_from(const WeightContainer& c, const std::optional<ScalePlan>& plan = std::nullopt);

} // namespace softsparse
