#pragma once

// Subcommand implementations behind the softsparse CLI. Each command writes
// its artifacts under RunConfig::out, logs to `log` and returns its results
// so they can be checked programmatically.

#include <array>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "softsparse/lenet.hpp"
#include "softsparse/mnist.hpp"
#include "softsparse/prune.hpp"
#include "softsparse/report.hpp"

namespace softsparse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitAssertion = 4;

/// Environment variable naming the default MNIST directory.
inline constexpr const char* kDataDirEnv = "SOFTSPARSE_DATA_DIR";

/// Maps an exception to the process exit code.
int exit_code_for(const std::exception& e);

/// "f:0.1" (fraction) or "t:7" (integer MSB units). Throws ConfigError.
PruneThreshold parse_threshold(const std::string& text);
/// Comma-separated list of parse_threshold items.
std::vector<PruneThreshold> parse_thresholds(const std::string& text);
/// "exact", "zeroskip" or "approx"; approx takes the first threshold.
ConvMode parse_mode(const std::string& name, const std::vector<PruneThreshold>& thresholds);
/// Comma-separated integers; `expected` of 0 accepts any count.
std::vector<std::int32_t> parse_int_list(const std::string& text, std::size_t expected, const char* what);

/// $SOFTSPARSE_DATA_DIR, or "data/mnist" when unset.
std::filesystem::path default_data_dir();

struct RunConfig {
    std::filesystem::path data_dir = default_data_dir();
    std::vector<std::filesystem::path> weights;
    std::optional<std::filesystem::path> output; // explicit file for train/quantize
    std::optional<Activation> activation;
    std::string mode = "exact";
    std::vector<PruneThreshold> thresholds;
    std::filesystem::path out = "out";
    std::uint64_t seed = 1;
    unsigned workers = 1;
    std::size_t limit = 0; // images to evaluate, 0 = all

    // conv-demo / fsm-trace
    std::optional<std::size_t> image;
    std::size_t images = 1;
    std::vector<std::int32_t> kernel;
    std::vector<std::int32_t> window;
    std::size_t row = 8;
    std::size_t col = 8;

    // train
    TrainConfig train;
    double min_accuracy = 0.9;
};

struct MnistStatsResult {
    SparsityStats train, test, all;
};
MnistStatsResult cmd_mnist_stats(const RunConfig& cfg, std::ostream& log);

/// A fixed pseudo-random 3x3 kernel with entries in [-128, 127] \ {0}.
std::vector<std::int32_t> random_kernel(std::uint64_t seed);

struct DemoConfigResult {
    std::string configuration; // "exact", "zeroskip" or a threshold label
    double mean_performed = 0;
    double median_error = 0;       // over pixels whose window has a nonzero product
    double median_error_all = 0;   // over every output pixel
    double mean_error = 0;         // over pixels whose window has a nonzero product
    std::vector<std::size_t> histogram; // kErrorBins bins of width 0.01, last is open
};
inline constexpr std::size_t kErrorBins = 21;

struct ConvDemoResult {
    std::vector<std::int32_t> kernel;
    std::size_t images = 0;
    double mean_exact = 0;
    double mean_nonzero = 0;
    std::vector<DemoConfigResult> configs; // exact, zeroskip, then thresholds
};
/// 3x3 single-kernel convolution of MNIST test images. Grids (PGM, CSV) are
/// written for the first image; counts and errors cover `images` images.
ConvDemoResult cmd_conv_demo(const RunConfig& cfg, std::ostream& log);

FloatLeNet cmd_train(const RunConfig& cfg, std::ostream& log);
LeNet5Model cmd_quantize(const RunConfig& cfg, std::ostream& log);
EvaluationReport cmd_infer(const RunConfig& cfg, std::ostream& log);

struct SweepResult {
    Activation activation;
    std::vector<EvaluationReport> reports; // exact, zeroskip, then thresholds
};
std::vector<SweepResult> cmd_sweep(const RunConfig& cfg, std::ostream& log);

struct FsmTraceResult {
    std::vector<std::int32_t> window;
    std::vector<std::int32_t> kernel;
    int t_int = 0;
    std::array<std::int32_t, 4> outputs{};
    std::size_t cycles = 0;
    std::size_t products = 0;
};
/// Runs the accelerator model, checks outputs and kept sets against the
/// conv engine (AssertionFailure on mismatch) and writes fsm_trace.jsonl.
FsmTraceResult cmd_fsm_trace(const RunConfig& cfg, std::ostream& log);

/// Report rows (C1, C3, C5, total) for one evaluation.
std::vector<ReportRow> evaluation_rows(const EvaluationReport& ev, const ConvMode& mode);

} // namespace softsparse::cli
