#include "softsparse/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

#include "softsparse/accel.hpp"
#include "softsparse/error.hpp"

namespace softsparse::cli {

namespace {

using nlohmann::ordered_json;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(trim(item));
    if (!text.empty() && text.back() == sep) parts.emplace_back();
    return parts;
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw ConfigError("cannot create output directory " + dir.string());
    }
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::trunc | std::ios::binary);
    if (!f) {
        throw Error("cannot write " + path.string());
    }
    return f;
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + mid);
    return 0.5 * (lo + hi);
}

ordered_json stats_json(const SparsityStats& s) {
    ordered_json j;
    j["images"] = s.images;
    j["zero_fraction"] = s.zero_fraction;
    j["mean_zero_pixels"] = s.mean_zero_pixels;
    j["stddev_zero_pixels"] = s.stddev_zero_pixels;
    j["min_zero_pixels"] = s.min_zero_pixels;
    j["max_zero_pixels"] = s.max_zero_pixels;
    j["pixel_mean"] = s.pixel_mean;
    j["pixel_stddev"] = s.pixel_stddev;
    return j;
}

MnistSet load_test_set(const RunConfig& cfg) {
    auto test = load_mnist(cfg.data_dir, MnistSplit::Test);
    return cfg.limit > 0 ? test.head(cfg.limit) : test;
}

LeNet5Model load_model(const std::filesystem::path& path) {
    return model_from(load_weights(path));
}

const std::filesystem::path& single_weights(const RunConfig& cfg, const char* command) {
    if (cfg.weights.empty()) {
        throw ConfigError(std::string(command) + " needs --weights");
    }
    if (cfg.weights.size() != 1) {
        throw ConfigError(std::string(command) + " takes a single --weights file");
    }
    return cfg.weights.front();
}

std::vector<ConvMode> sweep_modes(const std::vector<PruneThreshold>& thresholds) {
    std::vector<ConvMode> modes{ConvMode::exact(), ConvMode::zero_skip()};
    for (const auto& t : thresholds) modes.push_back(ConvMode::approx(t));
    return modes;
}

std::string threshold_cell(const ConvMode& mode) {
    return mode.kind() == ConvMode::Kind::Approx ? mode.threshold().label() : "";
}

void write_sparsity_csv(const std::filesystem::path& path, const EvaluationReport& ev) {
    auto f = open_out(path);
    f << "layer,mean,min,max,stddev\n";
    for (std::size_t l = 0; l < kLeNetMapLayers.size(); ++l) {
        const auto& s = ev.sparsity[l];
        f << kLeNetMapLayers[l] << ',' << format_number(s.mean) << ',' << format_number(s.min) << ','
          << format_number(s.max) << ',' << format_number(s.stddev) << '\n';
    }
}

void log_evaluation(std::ostream& log, const EvaluationReport& ev) {
    log << std::left << std::setw(18) << ev.mode << " acc " << fixed(100 * ev.accuracy, 2) << "%  MACs";
    for (std::size_t l = 0; l < 3; ++l) log << ' ' << kLeNetConvLayers[l] << '=' << fixed(ev.mean_conv[l][2], 1);
    log << "  total " << fixed(ev.mean_performed_total(), 1) << " ("
        << fixed(100 * ev.mean_performed_total() / double(kLeNetExactTotal), 2) << "%)\n";
}

// Linear map of a grid onto 0..255 using the exact grid's range.
void write_pgm(const std::filesystem::path& path, const std::vector<std::int32_t>& grid, std::size_t h,
               std::size_t w, std::int32_t lo, std::int32_t hi) {
    auto f = open_out(path);
    f << "P5\n" << w << ' ' << h << "\n255\n";
    const double span = hi > lo ? double(hi) - double(lo) : 1.0;
    for (auto v : grid) {
        const double t = std::clamp((double(v) - lo) / span, 0.0, 1.0);
        f.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
    }
}

void write_grid_csv(const std::filesystem::path& path, const std::vector<std::int32_t>& grid, std::size_t h,
                    std::size_t w) {
    auto f = open_out(path);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) f << (x ? "," : "") << grid[y * w + x];
        f << '\n';
    }
}

std::string file_label(const std::string& label) {
    std::string s = label;
    std::replace(s.begin(), s.end(), ':', '_');
    return s;
}

} // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e)) return kExitConfig;
    if (dynamic_cast<const AssertionFailure*>(&e)) return kExitAssertion;
    if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const ShapeError*>(&e) ||
        dynamic_cast<const OverflowError*>(&e) || dynamic_cast<const std::filesystem::filesystem_error*>(&e)) {
        return kExitData;
    }
    return kExitFailure;
}

PruneThreshold parse_threshold(const std::string& raw) {
    const std::string text = trim(raw);
    if (text.size() < 3 || text[1] != ':' || (text[0] != 'f' && text[0] != 't')) {
        throw ConfigError("threshold '" + text + "' must look like f:0.1 or t:7");
    }
    const std::string body = text.substr(2);
    try {
        if (text[0] == 't') {
            int t = 0;
            const auto [p, ec] = std::from_chars(body.data(), body.data() + body.size(), t);
            if (ec != std::errc() || p != body.data() + body.size()) {
                throw ConfigError("threshold '" + text + "' needs an integer after t:");
            }
            return PruneThreshold::from_int(t);
        }
        std::size_t used = 0;
        double f = 0;
        try {
            f = std::stod(body, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != body.size()) {
            throw ConfigError("threshold '" + text + "' needs a number after f:");
        }
        return PruneThreshold::from_fraction(f);
    } catch (const DomainError& e) {
        throw ConfigError("threshold '" + text + "': " + e.what());
    }
}

std::vector<PruneThreshold> parse_thresholds(const std::string& text) {
    std::vector<PruneThreshold> out;
    for (const auto& item : split(text, ',')) out.push_back(parse_threshold(item));
    if (out.empty()) {
        throw ConfigError("empty threshold list");
    }
    return out;
}

ConvMode parse_mode(const std::string& name, const std::vector<PruneThreshold>& thresholds) {
    if (name == "exact") return ConvMode::exact();
    if (name == "zeroskip") return ConvMode::zero_skip();
    if (name == "approx") {
        if (thresholds.empty()) {
            throw ConfigError("--mode approx needs --thresholds");
        }
        return ConvMode::approx(thresholds.front());
    }
    throw ConfigError("unknown mode '" + name + "' (expected exact, zeroskip or approx)");
}

std::vector<std::int32_t> parse_int_list(const std::string& text, std::size_t expected, const char* what) {
    std::vector<std::int32_t> out;
    for (const auto& item : split(text, ',')) {
        std::int32_t v = 0;
        const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
            throw ConfigError(std::string(what) + ": '" + item + "' is not a 32-bit integer");
        }
        out.push_back(v);
    }
    if (expected != 0 && out.size() != expected) {
        throw ConfigError(std::string(what) + " needs " + std::to_string(expected) + " values, got " +
                          std::to_string(out.size()));
    }
    return out;
}

std::filesystem::path default_data_dir() {
    const char* env = std::getenv(kDataDirEnv);
    return env && *env ? std::filesystem::path(env) : std::filesystem::path("data/mnist");
}

std::vector<ReportRow> evaluation_rows(const EvaluationReport& ev, const ConvMode& mode) {
    std::vector<ReportRow> rows;
    constexpr std::array<std::size_t, 3> map_of_conv{0, 2, 4}; // C1, C3, C5 in the sparsity array
    for (std::size_t l = 0; l < 3; ++l) {
        rows.push_back(ReportRow{kLeNetConvLayers[l], mode.name(), threshold_cell(mode), ev.mean_conv[l][0],
                                 ev.mean_conv[l][1], ev.mean_conv[l][2], ev.sparsity[map_of_conv[l]].mean,
                                 ev.accuracy});
    }
    rows.push_back(ReportRow{"total", mode.name(), threshold_cell(mode),
                             ev.mean_conv[0][0] + ev.mean_conv[1][0] + ev.mean_conv[2][0], ev.mean_nonzero_total(),
                             ev.mean_performed_total(), std::nullopt, ev.accuracy});
    return rows;
}

MnistStatsResult cmd_mnist_stats(const RunConfig& cfg, std::ostream& log) {
    ensure_dir(cfg.out);
    const auto train = load_mnist(cfg.data_dir, MnistSplit::Train);
    const auto test = load_mnist(cfg.data_dir, MnistSplit::Test);
    MnistStatsResult r{dataset_stats(train), dataset_stats(test), dataset_stats(MnistSet::concat(train, test))};

    auto csv = open_out(cfg.out / "mnist_stats.csv");
    csv << "subset,images,zero_fraction,mean_zero_pixels,stddev_zero_pixels,min_zero_pixels,max_zero_pixels,"
           "pixel_mean,pixel_stddev\n";
    ordered_json doc;
    for (const auto& [name, s] : {std::pair{"train", &r.train}, {"test", &r.test}, {"all", &r.all}}) {
        csv << name << ',' << s->images << ',' << format_number(s->zero_fraction) << ','
            << format_number(s->mean_zero_pixels) << ',' << format_number(s->stddev_zero_pixels) << ','
            << s->min_zero_pixels << ',' << s->max_zero_pixels << ',' << format_number(s->pixel_mean) << ','
            << format_number(s->pixel_stddev) << '\n';
        doc[name] = stats_json(*s);
    }
    write_json_file(cfg.out / "mnist_stats.json", doc);

    const auto& a = r.all;
    log << "MNIST train+test (" << a.images << " images)\n"
        << "  zero pixels        " << fixed(100 * a.zero_fraction, 2) << "%\n"
        << "  zeros per image    mean " << fixed(a.mean_zero_pixels, 2) << ", stddev "
        << fixed(a.stddev_zero_pixels, 2) << ", min " << a.min_zero_pixels << ", max " << a.max_zero_pixels << '\n'
        << "  pixel intensity    mean " << fixed(a.pixel_mean, 2) << ", stddev " << fixed(a.pixel_stddev, 2)
        << '\n';
    return r;
}

std::vector<std::int32_t> random_kernel(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::int32_t> k(9);
    for (auto& v : k) {
        // 255 nonzero values in [-128, 127]
        const auto u = static_cast<std::int32_t>(rng() % 255);
        v = u < 128 ? u - 128 : u - 127;
    }
    return k;
}

ConvDemoResult cmd_conv_demo(const RunConfig& cfg, std::ostream& log) {
    ensure_dir(cfg.out);
    ConvDemoResult res;
    res.kernel = cfg.kernel.empty() ? random_kernel(cfg.seed) : cfg.kernel;
    if (res.kernel.size() != 9) {
        throw ConfigError("conv-demo needs a 3x3 kernel (9 values)");
    }
    const auto test = load_mnist(cfg.data_dir, MnistSplit::Test);
    const std::size_t first = cfg.image.value_or(0);
    if (first >= test.size()) {
        throw ConfigError("image index " + std::to_string(first) + " outside the test set");
    }
    const std::size_t count = std::min(std::max<std::size_t>(cfg.images, 1), test.size() - first);
    res.images = count;

    const ConvLayer layer(QuantTensor({1, 1, 3, 3}, res.kernel, 0), QuantTensor({1}, {0}, 0));
    std::vector<ConvMode> modes = sweep_modes(cfg.thresholds);
    res.configs.resize(modes.size());
    std::vector<std::vector<double>> errors(modes.size()), errors_all(modes.size());
    std::vector<std::uint64_t> performed(modes.size(), 0);
    std::uint64_t exact_total = 0, nonzero_total = 0;

    for (std::size_t i = first; i < first + count; ++i) {
        const auto img = test.image(i);
        const QuantTensor input({1, test.rows(), test.cols()}, {img.begin(), img.end()}, 0);
        const auto exact = conv2d(input, layer, ConvMode::exact());
        exact_total += exact.counters.exact_total;
        nonzero_total += exact.counters.nonzero_total;
        const std::size_t oh = exact.output.dim(1), ow = exact.output.dim(2);

        // Windows with at least one nonzero product.
        std::vector<bool> live(oh * ow, false);
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x)
                for (std::size_t t = 0; t < 9 && !live[y * ow + x]; ++t)
                    live[y * ow + x] = res.kernel[t] != 0 && input.at(0, y + t / 3, x + t % 3) != 0;

        const auto ex = exact.output.data();
        const std::vector<std::int32_t> exact_grid(ex.begin(), ex.end());
        const auto [lo_it, hi_it] = std::minmax_element(exact_grid.begin(), exact_grid.end());
        for (std::size_t m = 0; m < modes.size(); ++m) {
            const auto r = m == 0 ? exact : conv2d(input, layer, modes[m]);
            performed[m] += r.counters.performed;
            const auto ap = r.output.data();
            for (std::size_t p = 0; p < ap.size(); ++p) {
                const double err = std::fabs(double(ap[p]) - double(ex[p])) / std::max(1.0, std::fabs(double(ex[p])));
                errors_all[m].push_back(err);
                if (live[p]) errors[m].push_back(err);
            }
            if (i == first) {
                const std::vector<std::int32_t> grid(ap.begin(), ap.end());
                const std::string name = m == 0 ? "exact" : m == 1 ? "zeroskip" : "approx_" + file_label(modes[m].threshold().label());
                if (m != 1) {
                    write_pgm(cfg.out / (name + ".pgm"), grid, oh, ow, *lo_it, *hi_it);
                    write_grid_csv(cfg.out / (name + ".csv"), grid, oh, ow);
                }
            }
        }
    }

    res.mean_exact = double(exact_total) / double(count);
    res.mean_nonzero = double(nonzero_total) / double(count);
    auto counts = open_out(cfg.out / "counts.csv");
    counts << "configuration,exact,nonzero,performed,median_error,median_error_all,mean_error\n";
    auto hist = open_out(cfg.out / "error_histogram.csv");
    hist << "configuration,bin_lo,bin_hi,count\n";
    ordered_json doc;
    doc["kernel"] = res.kernel;
    doc["first_image"] = first;
    doc["images"] = count;
    doc["configs"] = ordered_json::array();
    log << "kernel " << ordered_json(res.kernel).dump() << ", " << count << " image(s) from #" << first << '\n';
    for (std::size_t m = 0; m < modes.size(); ++m) {
        auto& c = res.configs[m];
        c.configuration = m == 0 ? "exact" : m == 1 ? "zeroskip" : modes[m].threshold().label();
        c.mean_performed = double(performed[m]) / double(count);
        c.median_error = median(errors[m]);
        c.median_error_all = median(errors_all[m]);
        double sum = 0;
        for (double e : errors[m]) sum += e;
        c.mean_error = errors[m].empty() ? 0.0 : sum / double(errors[m].size());
        c.histogram.assign(kErrorBins, 0);
        for (double e : errors[m]) {
            c.histogram[std::min<std::size_t>(kErrorBins - 1, static_cast<std::size_t>(e * 100.0))]++;
        }
        counts << c.configuration << ',' << format_number(res.mean_exact) << ',' << format_number(res.mean_nonzero)
               << ',' << format_number(c.mean_performed) << ',' << format_number(c.median_error) << ','
               << format_number(c.median_error_all) << ',' << format_number(c.mean_error) << '\n';
        if (m >= 2) {
            for (std::size_t b = 0; b < kErrorBins; ++b) {
                hist << c.configuration << ',' << format_number(b / 100.0) << ','
                     << (b + 1 == kErrorBins ? std::string("inf") : format_number((b + 1) / 100.0)) << ','
                     << c.histogram[b] << '\n';
            }
        }
        ordered_json j;
        j["configuration"] = c.configuration;
        j["mean_performed"] = c.mean_performed;
        j["median_error"] = c.median_error;
        j["median_error_all"] = c.median_error_all;
        j["mean_error"] = c.mean_error;
        j["histogram"] = c.histogram;
        doc["configs"].push_back(j);
        log << "  " << std::left << std::setw(10) << c.configuration << " mults " << std::right << std::setw(10)
            << fixed(c.mean_performed, 2) << "   median frac. error " << fixed(100 * c.median_error, 3) << "%\n";
    }
    doc["mean_exact"] = res.mean_exact;
    doc["mean_nonzero"] = res.mean_nonzero;
    write_json_file(cfg.out / "conv_demo.json", doc);
    return res;
}

FloatLeNet cmd_train(const RunConfig& cfg, std::ostream& log) {
    const Activation act = cfg.activation.value_or(Activation::ReLU);
    const auto train = load_mnist(cfg.data_dir, MnistSplit::Train);
    const auto test = load_mnist(cfg.data_dir, MnistSplit::Test);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    log << "training " << to_string(act) << " LeNet-5: " << tc.epochs << " epoch(s), lr " << tc.learning_rate
        << ", batch " << tc.batch_size << ", seed " << tc.seed << '\n';
    const auto net = train_float(train, act, tc, [&](int epoch, double loss) {
        log << "  epoch " << epoch << "  loss " << fixed(loss, 4) << '\n' << std::flush;
    });
    const double acc = float_accuracy(net, test);
    const auto path = cfg.output.value_or(cfg.out / ("lenet_" + to_string(act) + ".lnw"));
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    save_weights(path, to_container(net));
    log << "float test accuracy " << fixed(100 * acc, 2) << "%, checksum " << std::hex << net.checksum() << std::dec
        << ", wrote " << path.string() << '\n';
    if (acc < cfg.min_accuracy) {
        throw AssertionFailure("training did not converge: test accuracy " + fixed(100 * acc, 2) + "% below " +
                               fixed(100 * cfg.min_accuracy, 2) + "%");
    }
    return net;
}

LeNet5Model cmd_quantize(const RunConfig& cfg, std::ostream& log) {
    const auto& in = single_weights(cfg, "quantize");
    const auto container = load_weights(in);
    if (is_quantized_container(container)) {
        throw ConfigError(in.string() + " is already quantized");
    }
    const auto net = float_model_from(container);
    const auto model = quantize_model(net);
    auto path = cfg.output.value_or(cfg.out / (in.stem().string() + "_q.lnw"));
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    save_weights(path, to_container(model));
    log << "quantized " << in.string() << " -> " << path.string() << '\n';
    if (std::filesystem::exists(cfg.data_dir / "t10k-images-idx3-ubyte")) {
        const auto test = load_test_set(cfg);
        const double fa = float_accuracy(net, test);
        const auto ev = evaluate(test, model, ConvMode::exact(), cfg.workers);
        log << "float accuracy " << fixed(100 * fa, 2) << "%, quantized exact accuracy " << fixed(100 * ev.accuracy, 2)
            << "% on " << test.size() << " test images\n";
    }
    return model;
}

EvaluationReport cmd_infer(const RunConfig& cfg, std::ostream& log) {
    const auto model = load_model(single_weights(cfg, "infer"));
    const ConvMode mode = parse_mode(cfg.mode, cfg.thresholds);
    ensure_dir(cfg.out);
    MnistSet set = load_mnist(cfg.data_dir, MnistSplit::Test);
    if (cfg.image) {
        if (*cfg.image >= set.size()) {
            throw ConfigError("image index " + std::to_string(*cfg.image) + " outside the test set");
        }
        const auto rep = infer(set.image(*cfg.image), model, mode);
        log << "image #" << *cfg.image << " label " << int(set.label(*cfg.image)) << " predicted " << rep.predicted
            << "\n  logits " << ordered_json(rep.logits).dump() << '\n';
        for (std::size_t l = 0; l < 3; ++l) {
            log << "  " << kLeNetConvLayers[l] << " exact " << rep.conv[l].exact_total << " nonzero "
                << rep.conv[l].nonzero_total << " performed " << rep.conv[l].performed << '\n';
        }
        const auto img = set.image(*cfg.image);
        IdxImages one{1, set.rows(), set.cols(), {img.begin(), img.end()}};
        set = MnistSet(std::move(one), {set.label(*cfg.image)});
    } else if (cfg.limit > 0) {
        set = set.head(cfg.limit);
    }
    const auto ev = evaluate(set, model, mode, cfg.workers);
    log_evaluation(log, ev);
    const std::string stem = "infer_" + to_string(model.activation()) + "_" + file_label(mode.label());
    write_report_files(cfg.out / stem, evaluation_rows(ev, mode));
    write_sparsity_csv(cfg.out / (stem + "_sparsity.csv"), ev);
    return ev;
}

std::vector<SweepResult> cmd_sweep(const RunConfig& cfg, std::ostream& log) {
    if (cfg.weights.empty()) {
        throw ConfigError("sweep needs --weights");
    }
    ensure_dir(cfg.out);
    const auto test = load_test_set(cfg);
    const auto thresholds =
        cfg.thresholds.empty() ? parse_thresholds("f:0.05,f:0.1,f:0.15,f:0.2,f:0.3,f:0.5") : cfg.thresholds;
    std::vector<SweepResult> results;
    for (const auto& path : cfg.weights) {
        const auto model = load_model(path);
        SweepResult sr{model.activation(), {}};
        std::vector<ReportRow> rows;
        log << to_string(model.activation()) << " model " << path.string() << ", " << test.size() << " images\n";
        for (const auto& mode : sweep_modes(thresholds)) {
            sr.reports.push_back(evaluate(test, model, mode, cfg.workers));
            log_evaluation(log, sr.reports.back());
            const auto r = evaluation_rows(sr.reports.back(), mode);
            rows.insert(rows.end(), r.begin(), r.end());
        }
        const std::string act = to_string(model.activation());
        write_report_files(cfg.out / ("sweep_" + act), rows);
        write_sparsity_csv(cfg.out / ("sparsity_" + act + ".csv"), sr.reports.front());
        results.push_back(std::move(sr));
    }
    return results;
}

FsmTraceResult cmd_fsm_trace(const RunConfig& cfg, std::ostream& log) {
    ensure_dir(cfg.out);
    FsmTraceResult res;
    res.kernel = cfg.kernel.empty() ? random_kernel(cfg.seed) : cfg.kernel;
    if (res.kernel.size() != accel::kKernelTaps) {
        throw ConfigError("fsm-trace needs a 3x3 kernel (9 values)");
    }
    if (!cfg.window.empty()) {
        if (cfg.window.size() != accel::kWindowWords) {
            throw ConfigError("fsm-trace needs a 4x4 window (16 values)");
        }
        res.window = cfg.window;
    } else {
        const auto test = load_mnist(cfg.data_dir, MnistSplit::Test);
        const std::size_t idx = cfg.image.value_or(0);
        if (idx >= test.size() || cfg.row + 4 > test.rows() || cfg.col + 4 > test.cols()) {
            throw ConfigError("window outside the test image");
        }
        const auto img = test.image(idx);
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t c = 0; c < 4; ++c) res.window.push_back(img[(cfg.row + r) * test.cols() + cfg.col + c]);
    }
    const PruneThreshold t = cfg.thresholds.empty() ? PruneThreshold::from_int(7) : cfg.thresholds.front();
    res.t_int = t.t_int();

    accel::ConvAccelerator acc;
    acc.load_kernel(std::span<const std::int32_t, accel::kKernelTaps>(res.kernel.data(), accel::kKernelTaps));
    accel::VectorMemory mem(res.window);
    const auto h = acc.issue(accel::AccelRequest{0, accel::kWindowWords}, mem, t);
    res.cycles = acc.run_until_done(h);
    res.outputs = acc.read_outputs(h);
    acc.acknowledge(h);

    // Cross-check against the conv engine on the same 4x4 input.
    const ConvLayer layer(QuantTensor({1, 1, 3, 3}, res.kernel, 0), QuantTensor({1}, {0}, 0));
    const auto ref = conv2d(QuantTensor({1, 4, 4}, res.window, 0), layer, ConvMode::approx(t), true);
    std::array<std::array<bool, 9>, 4> kept{};
    for (const auto& ev : acc.trace()) {
        for (const auto& r : ev.records) {
            if (r.kind == accel::RecordKind::Product) {
                kept[*r.output][*r.index] = *r.kept;
                res.products += *r.kept;
            }
        }
    }
    for (std::size_t o = 0; o < 4; ++o) {
        if (ref.output.data()[o] != res.outputs[o]) {
            throw AssertionFailure("FSM output y" + std::to_string(o) + " = " + std::to_string(res.outputs[o]) +
                                   " differs from the conv engine (" + std::to_string(ref.output.data()[o]) + ")");
        }
        for (std::size_t k = 0; k < 9; ++k) {
            if (ref.kept_masks[o][k] != kept[o][k]) {
                throw AssertionFailure("FSM kept set differs from the conv engine at y" + std::to_string(o));
            }
        }
    }
    if (res.cycles != accel::kCyclesToDone || res.products != ref.counters.performed) {
        throw AssertionFailure("FSM trace is inconsistent with the conv engine counters");
    }

    auto f = open_out(cfg.out / "fsm_trace.jsonl");
    accel::write_trace_jsonl(f, acc.trace());
    log << "window " << ordered_json(res.window).dump() << "\nkernel " << ordered_json(res.kernel).dump() << "\nT = "
        << res.t_int << ", " << res.cycles << " cycles to DONE, " << res.products << " of 36 products evaluated\n"
        << "y = " << ordered_json(res.outputs).dump() << " (matches conv engine)\n"
        << "trace: " << (cfg.out / "fsm_trace.jsonl").string() << '\n';
    return res;
}

} // namespace softsparse::cli
