#include <iostream>

#include <CLI11.hpp>

#include "softsparse/commands.hpp"
#include "softsparse/error.hpp"

using namespace softsparse;
using namespace softsparse::cli;

int main(int argc, char** argv) {
    CLI::App app{"MSB-proxy soft-sparsity convolution toolkit"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string data_dir = cfg.data_dir.string();
    std::vector<std::string> weights;
    std::string output, activation, thresholds, kernel, window, out = cfg.out.string();
    std::size_t image = 0;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--data-dir", data_dir, "MNIST IDX directory (default $SOFTSPARSE_DATA_DIR)");
        sub->add_option("--out", out, "output directory")->capture_default_str();
        sub->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
        sub->add_option("--workers", cfg.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    };
    auto model_opts = [&](CLI::App* sub) {
        sub->add_option("--weights", weights, "LNW1 weight file(s)")->delimiter(',');
        sub->add_option("--limit", cfg.limit, "evaluate only the first N test images (0 = all)");
        sub->add_option("--thresholds", thresholds, "thresholds, e.g. f:0.05,f:0.1,t:7");
    };

    auto* stats = app.add_subcommand("mnist-stats", "zero-pixel and intensity statistics of MNIST");
    common(stats);

    auto* demo = app.add_subcommand("conv-demo", "3x3 convolution of test images: grids, error histograms, counts");
    common(demo);
    demo->add_option("--image", image, "first test image index");
    demo->add_option("--images", cfg.images, "number of images to average counts over")->capture_default_str();
    demo->add_option("--kernel", kernel, "9 comma-separated integers (default: random from --seed)");
    demo->add_option("--thresholds", thresholds, "thresholds")->default_str("f:0.03,f:0.06,f:0.1,f:0.25");

    auto* train = app.add_subcommand("train", "train a float LeNet-5 and save it as LNW1");
    common(train);
    train->add_option("--activation", activation, "relu or tanh")->check(CLI::IsMember({"relu", "tanh"}));
    train->add_option("--epochs", cfg.train.epochs, "epochs")->capture_default_str();
    train->add_option("--lr", cfg.train.learning_rate, "learning rate")->capture_default_str();
    train->add_option("--batch", cfg.train.batch_size, "batch size")->capture_default_str();
    train->add_option("--output", output, "weight file (default <out>/lenet_<activation>.lnw)");
    train->add_option("--min-accuracy", cfg.min_accuracy, "fail below this float test accuracy")->capture_default_str();

    auto* quant = app.add_subcommand("quantize", "quantize a float LNW1 model");
    common(quant);
    model_opts(quant);
    quant->add_option("--output", output, "weight file (default <out>/<stem>_q.lnw)");

    auto* inf = app.add_subcommand("infer", "run instrumented integer inference");
    common(inf);
    model_opts(inf);
    inf->add_option("--mode", cfg.mode, "exact, zeroskip or approx")->capture_default_str()
        ->check(CLI::IsMember({"exact", "zeroskip", "approx"}));
    inf->add_option("--image", image, "single test image index");

    auto* sweep = app.add_subcommand("sweep", "accuracy and MACs over modes and thresholds");
    common(sweep);
    model_opts(sweep);

    auto* fsm = app.add_subcommand("fsm-trace", "run the accelerator model and write its cycle trace");
    common(fsm);
    fsm->add_option("--window", window, "16 comma-separated integers (default: patch of a test image)");
    fsm->add_option("--kernel", kernel, "9 comma-separated integers (default: random from --seed)");
    fsm->add_option("--thresholds", thresholds, "threshold (first is used)")->default_str("t:7");
    fsm->add_option("--image", image, "test image for the default window");
    fsm->add_option("--row", cfg.row, "window top row")->capture_default_str();
    fsm->add_option("--col", cfg.col, "window left column")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        cfg.data_dir = data_dir;
        cfg.out = out;
        cfg.weights.assign(weights.begin(), weights.end());
        if (!output.empty()) cfg.output = output;
        if (!activation.empty()) cfg.activation = parse_activation(activation);
        if (!kernel.empty()) cfg.kernel = parse_int_list(kernel, 9, "--kernel");
        if (!window.empty()) cfg.window = parse_int_list(window, 16, "--window");
        for (auto* sub : {demo, inf, fsm}) {
            if (sub->parsed() && sub->count("--image") > 0) cfg.image = image;
        }
        if (!thresholds.empty()) {
            cfg.thresholds = parse_thresholds(thresholds);
        } else if (demo->parsed()) {
            cfg.thresholds = parse_thresholds("f:0.03,f:0.06,f:0.1,f:0.25");
        }

        if (stats->parsed()) cmd_mnist_stats(cfg, std::cout);
        if (demo->parsed()) cmd_conv_demo(cfg, std::cout);
        if (train->parsed()) cmd_train(cfg, std::cout);
        if (quant->parsed()) cmd_quantize(cfg, std::cout);
        if (inf->parsed()) cmd_infer(cfg, std::cout);
        if (sweep->parsed()) cmd_sweep(cfg, std::cout);
        if (fsm->parsed()) cmd_fsm_trace(cfg, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kExitOk;
}
