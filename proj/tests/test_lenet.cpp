#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "softsparse/error.hpp"
#include "softsparse/lenet.hpp"

using namespace softsparse;

namespace {

std::filesystem::path data_dir() {
    const char* env = std::getenv("SOFTSPARSE_DATA_DIR");
    return env ? env : "/root/data/mnist";
}

bool have_mnist() {
    return std::filesystem::exists(data_dir() / "train-images-idx3-ubyte");
}

// Random-init network with small nonzero biases so that no layer is
// degenerate on blank input.
FloatLeNet random_net(Activation a, std::uint64_t seed) {
    auto n = FloatLeNet::init(a, seed);
    std::mt19937_64 rng(seed + 100);
    std::uniform_real_distribution<float> u(0.02f, 0.2f);
    for (auto* b : {&n.c1_b, &n.c3_b, &n.c5_b, &n.f6_b, &n.out_b})
        for (auto& v : *b) v = (rng() & 1) ? u(rng) : -u(rng);
    return n;
}

// Synthetic digit-like image: a bright stroke on a zero background.
std::vector<std::uint8_t> stroke_image(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::uint8_t> img(784, 0);
    int y = 4 + int(rng() % 6), x = 6 + int(rng() % 10);
    for (int k = 0; k < 18; ++k) {
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 3; ++dx) img[(y + dy) * 28 + x + dx] = static_cast<std::uint8_t>(128 + rng() % 128);
        y = std::min(24, y + 1);
        x = std::clamp(x + int(rng() % 3) - 1, 1, 23);
    }
    return img;
}

std::int64_t shift_round(std::int64_t v, int shift) {
    return static_cast<std::int64_t>(
        std::copysign(std::floor(std::fabs(double(v)) / std::ldexp(1.0, shift) + 0.5), double(v)));
}

std::vector<std::int32_t> vec(const QuantTensor& t) {
    return {t.data().begin(), t.data().end()};
}

std::vector<std::int32_t> pool(const std::vector<std::int32_t>& in, int c, int h, int w) {
    std::vector<std::int32_t> out;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h / 2; ++y)
            for (int x = 0; x < w / 2; ++x) {
                auto at = [&](int yy, int xx) { return std::int64_t{in[(ch * h + yy) * w + xx]}; };
                out.push_back(static_cast<std::int32_t>(oracle::rounded_mean(
                    {at(2 * y, 2 * x), at(2 * y, 2 * x + 1), at(2 * y + 1, 2 * x), at(2 * y + 1, 2 * x + 1)})));
            }
    return out;
}

std::vector<std::int32_t> relu_requant(const std::vector<std::int64_t>& acc, int shift) {
    std::vector<std::int32_t> out;
    for (auto v : acc) out.push_back(static_cast<std::int32_t>(shift_round(std::max<std::int64_t>(v, 0), shift)));
    return out;
}

// Naive integer forward pass of a ReLU model with half-away rounding.
std::vector<std::int64_t> oracle_logits(const std::vector<std::uint8_t>& img, const LeNet5Model& m) {
    const auto& p = m.plan();
    const std::vector<std::int32_t> x(img.begin(), img.end());
    auto a1 = oracle::conv(x, 1, 28, 28, vec(m.c1().weights()), 6, 5, 5, vec(m.c1().bias()));
    auto s2 = pool(relu_requant(a1, p.input + p.weight[0] - p.activation[0]), 6, 24, 24);
    auto a3 = oracle::conv(s2, 6, 12, 12, vec(m.c3().weights()), 16, 5, 5, vec(m.c3().bias()));
    auto s4 = pool(relu_requant(a3, p.activation[0] + p.weight[1] - p.activation[1]), 16, 8, 8);
    auto a5 = oracle::conv(s4, 16, 4, 4, vec(m.c5().weights()), 120, 4, 4, vec(m.c5().bias()));
    auto h5 = relu_requant(a5, p.activation[1] + p.weight[2] - p.activation[2]);
    auto dense = [](const std::vector<std::int32_t>& in, const QuantTensor& w, const QuantTensor& b) {
        std::vector<std::int64_t> out;
        for (std::size_t r = 0; r < w.dim(0); ++r) {
            std::int64_t acc = b.data()[r];
            for (std::size_t c = 0; c < w.dim(1); ++c) acc += std::int64_t{w.data()[r * w.dim(1) + c]} * in[c];
            out.push_back(acc);
        }
        return out;
    };
    auto h6 = relu_requant(dense(h5, m.f6_weights(), m.f6_bias()), p.activation[2] + p.weight[3] - p.activation[3]);
    return dense(h6, m.out_weights(), m.out_bias());
}

} // namespace

TEST_CASE("quantization examples") {
    auto n = random_net(Activation::ReLU, 1);
    n.c1_w[0] = 0.5f;
    n.c1_w[1] = -0.25f;
    ScalePlan p;
    const auto m = quantize_model(n, p);
    CHECK(m.c1().weights().data()[0] == 128);
    CHECK(m.c1().weights().data()[1] == -64);
    CHECK(m.c1().weights().scale_exp() == 8);
    CHECK(m.c1().bias().scale_exp() == p.input + p.weight[0]);

    auto big = n;
    big.f6_w[3] = 1e9f;
    CHECK_THROWS_AS(quantize_model(big, p), OverflowError);
    auto nan = n;
    nan.out_b[0] = std::nanf("");
    CHECK_THROWS_AS(quantize_model(nan, p), DomainError);
}

TEST_CASE("exact MAC counts and layer shapes for every image") {
    const auto m = quantize_model(random_net(Activation::ReLU, 2));
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto img = stroke_image(s);
        const auto r = infer(img, m, ConvMode::exact());
        CHECK(r.conv[0].exact_total == 86400);
        CHECK(r.conv[1].exact_total == 153600);
        CHECK(r.conv[2].exact_total == 30720);
        CHECK(r.total().exact_total == 270720);
        CHECK(r.total().performed == 270720);
        CHECK(r.logits.size() == 10);
    }
    CHECK_THROWS_AS(infer(std::vector<std::uint8_t>(100, 0), m, ConvMode::exact()), ShapeError);
}

TEST_CASE("integer pipeline matches a naive oracle") {
    for (std::uint64_t seed = 3; seed < 6; ++seed) {
        const auto m = quantize_model(random_net(Activation::ReLU, seed));
        for (std::uint64_t s = 0; s < 3; ++s) {
            const auto img = stroke_image(seed * 10 + s);
            CHECK(infer(img, m, ConvMode::exact()).logits == oracle_logits(img, m));
        }
    }
}

TEST_CASE("quantized logits track the float network") {
    for (auto act : {Activation::ReLU, Activation::Tanh}) {
        const auto net = random_net(act, 7);
        const auto m = quantize_model(net);
        const int out_scale = m.plan().activation[3] + m.plan().weight[4];
        for (std::uint64_t s = 0; s < 4; ++s) {
            const auto img = stroke_image(s);
            const auto fl = float_forward(net, img);
            const auto q = infer(img, m, ConvMode::exact());
            double max_mag = 0;
            for (float v : fl) max_mag = std::max(max_mag, std::fabs(double(v)));
            for (std::size_t k = 0; k < 10; ++k) {
                CHECK(std::fabs(std::ldexp(double(q.logits[k]), -out_scale) - fl[k]) <= 0.05 * max_mag + 0.02);
            }
        }
    }
}

TEST_CASE("zero-skip is exact and approx is monotone") {
    const auto m = quantize_model(random_net(Activation::ReLU, 8));
    const auto img = stroke_image(4);
    const auto ex = infer(img, m, ConvMode::exact());
    const auto zs = infer(img, m, ConvMode::zero_skip());
    CHECK(ex.logits == zs.logits);
    CHECK(zs.total().performed == zs.total().nonzero_total);
    CHECK(zs.total().nonzero_total < zs.total().exact_total);

    std::uint64_t prev = 0;
    for (int t = 1; t <= 12; ++t) {
        const auto r = infer(img, m, ConvMode::approx(PruneThreshold::from_int(t)));
        // Counters depend on upstream activations, so only C1 is strictly
        // comparable across thresholds.
        CHECK(r.conv[0].performed >= prev);
        prev = r.conv[0].performed;
    }
    CHECK(infer(img, m, ConvMode::approx(PruneThreshold::from_int(62))).logits == ex.logits);
}

TEST_CASE("blank image with ReLU performs no C1 multiplications") {
    const auto m = quantize_model(random_net(Activation::ReLU, 9));
    const std::vector<std::uint8_t> blank(784, 0);
    const auto r = infer(blank, m, ConvMode::approx(PruneThreshold::from_fraction(0.1)));
    CHECK(r.conv[0].performed == 0);
    CHECK(r.conv[0].nonzero_total == 0);
}

TEST_CASE("tanh maps carry no zeros into C3 and C5") {
    const auto m = quantize_model(random_net(Activation::Tanh, 10));
    CHECK(m.plan().rounding == Rounding::HalfAwayKeepNonzero);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto r = infer(stroke_image(s), m, ConvMode::zero_skip());
        CHECK(r.conv[1].nonzero_total == r.conv[1].exact_total);
        CHECK(r.conv[2].nonzero_total == r.conv[2].exact_total);
        CHECK(r.sparsity[2] == 0.0);
    }
}

TEST_CASE("argmax picks the lowest index on ties") {
    auto net = random_net(Activation::ReLU, 11);
    std::fill(net.out_w.begin(), net.out_w.end(), 0.0f);
    std::fill(net.out_b.begin(), net.out_b.end(), 0.25f);
    net.out_b[3] = 0.5f;
    net.out_b[7] = 0.5f;
    const auto r = infer(stroke_image(1), quantize_model(net), ConvMode::exact());
    CHECK(r.predicted == 3);
}

TEST_CASE("model containers round trip") {
    const auto net = random_net(Activation::Tanh, 12);
    std::stringstream fs;
    save_weights(fs, to_container(net));
    const auto back = load_weights(fs);
    CHECK_FALSE(is_quantized_container(back));
    CHECK(float_model_from(back) == net);

    const auto m = quantize_model(net);
    std::stringstream qs;
    save_weights(qs, to_container(m));
    const auto qback = model_from(load_weights(qs));
    CHECK(qback.plan() == m.plan());
    CHECK(qback.activation() == Activation::Tanh);
    CHECK(qback.c3().weights() == m.c3().weights());
    CHECK(qback.out_bias() == m.out_bias());
    const auto img = stroke_image(2);
    CHECK(infer(img, qback, ConvMode::exact()).logits == infer(img, m, ConvMode::exact()).logits);

    WeightContainer missing = to_container(net);
    WeightContainer partial;
    for (const auto& r : missing.records())
        if (r.name != "c5.bias") partial.add(r);
    CHECK_THROWS_AS(float_model_from(partial), FormatError);
}

TEST_CASE("training is reproducible and learns") {
    if (!have_mnist()) {
        MESSAGE("MNIST not available, skipping");
        return;
    }
    const auto train = load_mnist(data_dir(), MnistSplit::Train).head(3000);
    const auto test = load_mnist(data_dir(), MnistSplit::Test).head(1000);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 5;
    const auto a = train_float(train.head(300), Activation::ReLU, cfg);
    const auto b = train_float(train.head(300), Activation::ReLU, cfg);
    CHECK(a.checksum() == b.checksum());
    cfg.seed = 6;
    CHECK(train_float(train.head(300), Activation::ReLU, cfg).checksum() != a.checksum());

    cfg.epochs = 0;
    const double chance = float_accuracy(train_float(train, Activation::Tanh, cfg), test);
    CHECK(chance < 0.3);

    cfg.epochs = 2;
    std::vector<double> losses;
    const auto net = train_float(train, Activation::ReLU, cfg, [&](int, double l) { losses.push_back(l); });
    CHECK(losses.size() == 2);
    CHECK(losses[1] < losses[0]);
    const double acc = float_accuracy(net, test);
    CHECK(acc > 0.85);
    const auto ev = evaluate(test, quantize_model(net), ConvMode::exact());
    CHECK(std::fabs(ev.accuracy - acc) <= 0.005);
}

TEST_CASE("evaluation is independent of the worker count") {
    if (!have_mnist()) {
        MESSAGE("MNIST not available, skipping");
        return;
    }
    const auto test = load_mnist(data_dir(), MnistSplit::Test).head(60);
    const auto m = quantize_model(random_net(Activation::ReLU, 13));
    const auto mode = ConvMode::approx(PruneThreshold::from_fraction(0.1));
    const auto one = evaluate(test, m, mode, 1);
    const auto three = evaluate(test, m, mode, 3);
    CHECK(one.predictions == three.predictions);
    CHECK(one.mean_conv == three.mean_conv);
    CHECK(one.sparsity[3].stddev == three.sparsity[3].stddev);
    CHECK(one.images == 60);

    const auto ex = evaluate(test, m, ConvMode::exact(), 2);
    const auto zs = evaluate(test, m, ConvMode::zero_skip(), 2);
    CHECK(ex.predictions == zs.predictions);
    CHECK(ex.mean_conv[0][0] == 86400);
    CHECK(zs.mean_conv[1][2] == zs.mean_conv[1][1]);
}
