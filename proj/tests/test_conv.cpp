#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "softsparse/conv.hpp"
#include "softsparse/error.hpp"

using namespace softsparse;

namespace {

QuantTensor random_tensor(std::mt19937_64& rng, std::vector<std::size_t> shape, int bits, int scale,
                          double zero_prob = 0.2) {
    std::vector<std::int32_t> d(element_count(shape));
    for (auto& v : d) v = oracle::log_uniform(rng, bits, zero_prob);
    return QuantTensor(std::move(shape), std::move(d), scale);
}

ConvLayer random_layer(std::mt19937_64& rng, std::size_t out, std::size_t in, std::size_t kh,
                       std::size_t kw, int in_scale) {
    auto w = random_tensor(rng, {out, in, kh, kw}, 8, 8);
    auto b = random_tensor(rng, {out}, 10, in_scale + 8);
    return ConvLayer(std::move(w), std::move(b));
}

std::vector<std::int64_t> widen(std::span<const std::int32_t> v) {
    return {v.begin(), v.end()};
}

} // namespace

TEST_CASE("QuantTensor validates length and range") {
    CHECK_THROWS_AS(QuantTensor({2, 2}, {1, 2, 3}, 0), ShapeError);
    CHECK_THROWS_AS(QuantTensor({1}, {(1 << 30) + 1}, 0), OverflowError);
    CHECK_NOTHROW(QuantTensor({2}, {1 << 30, -(1 << 30)}, 0));
}

TEST_CASE("single 3x3 kernel over 28x28 counts 6084 products") {
    std::mt19937_64 rng(1);
    auto input = random_tensor(rng, {1, 28, 28}, 8, 0, 0.8);
    auto layer = random_layer(rng, 1, 1, 3, 3, 0);
    const auto r = conv2d(input, layer, ConvMode::exact());
    CHECK(r.counters.exact_total == 26 * 26 * 9);
    CHECK(r.counters.exact_total == 6084);
    CHECK(r.counters.performed == 6084);
}

TEST_CASE("all-zero kernel gives all-zero output and no work") {
    std::mt19937_64 rng(2);
    auto input = random_tensor(rng, {2, 6, 6}, 10, 0);
    ConvLayer layer(QuantTensor::zeros({3, 2, 3, 3}, 8), QuantTensor::zeros({3}, 8));
    for (const auto& mode : {ConvMode::exact(), ConvMode::zero_skip(),
                             ConvMode::approx(PruneThreshold::from_int(3))}) {
        const auto r = conv2d(input, layer, mode);
        for (auto v : r.output.data()) CHECK(v == 0);
        if (mode.kind() != ConvMode::Kind::Exact) {
            CHECK(r.counters.performed == 0);
        }
        CHECK(r.counters.nonzero_total == 0);
    }
}

TEST_CASE("exact and zero-skip match the naive oracle") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> dim(3, 16);
    std::uniform_int_distribution<std::size_t> ch(1, 4);
    std::uniform_int_distribution<std::size_t> k(1, 5);
    for (int iter = 0; iter < 200; ++iter) {
        const std::size_t c = ch(rng), h = dim(rng), w = dim(rng), o = ch(rng);
        const std::size_t kh = std::min(k(rng), h), kw = std::min(k(rng), w);
        auto input = random_tensor(rng, {c, h, w}, 12, 0);
        auto layer = random_layer(rng, o, c, kh, kw, 0);
        const auto ref = oracle::conv({input.data().begin(), input.data().end()}, int(c), int(h), int(w),
                                      {layer.weights().data().begin(), layer.weights().data().end()},
                                      int(o), int(kh), int(kw),
                                      {layer.bias().data().begin(), layer.bias().data().end()});
        const auto ex = conv2d(input, layer, ConvMode::exact());
        const auto zs = conv2d(input, layer, ConvMode::zero_skip());
        REQUIRE(widen(ex.output.data()) == ref);
        REQUIRE(zs.output == ex.output);
        const std::uint64_t total = (h - kh + 1) * (w - kw + 1) * o * kh * kw * c;
        REQUIRE(ex.counters.exact_total == total);
        REQUIRE(ex.counters.performed == total);
        REQUIRE(zs.counters.exact_total == total);
        REQUIRE(zs.counters.performed == zs.counters.nonzero_total);
        REQUIRE(ex.counters.nonzero_total == zs.counters.nonzero_total);
    }
}

TEST_CASE("approx mode: t=62 is exact, per-element window bound, monotone counters") {
    std::mt19937_64 rng(4);
    for (int iter = 0; iter < 50; ++iter) {
        auto input = random_tensor(rng, {2, 8, 8}, 12, 0);
        auto layer = random_layer(rng, 3, 2, 3, 3, 0);
        const auto ex = conv2d(input, layer, ConvMode::exact());
        const auto a62 = conv2d(input, layer, ConvMode::approx(PruneThreshold::from_int(62)));
        REQUIRE(a62.output == ex.output);

        std::uint64_t prev = 0;
        for (int t = 1; t <= 30; ++t) {
            const auto ap = conv2d(input, layer, ConvMode::approx(PruneThreshold::from_int(t)), true);
            REQUIRE(ap.counters.performed >= prev);
            REQUIRE(ap.counters.performed <= ap.counters.nonzero_total);
            REQUIRE(ap.counters.nonzero_total <= ap.counters.exact_total);
            prev = ap.counters.performed;

            // Each output matches an oracle approx_dot over its receptive field.
            const std::size_t oh = 6, ow = 6, taps = 18;
            for (std::size_t oc = 0; oc < 3; ++oc)
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t x = 0; x < ow; ++x) {
                        std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
                        for (std::size_t c = 0; c < 2; ++c)
                            for (std::size_t r = 0; r < 3; ++r)
                                for (std::size_t s = 0; s < 3; ++s)
                                    pairs.emplace_back(input.at(c, y + r, x + s),
                                                       layer.weights().data()[((oc * 2 + c) * 3 + r) * 3 + s]);
                        const auto ref = oracle::dot(pairs, t);
                        const std::size_t idx = (oc * oh + y) * ow + x;
                        REQUIRE(ap.output.data()[idx] == ref.approx + layer.bias().data()[oc]);
                        REQUIRE(ap.kept_masks[idx] == ref.kept);
                        REQUIRE(std::llabs(ap.output.data()[idx] - ex.output.data()[idx]) <= ref.skipped_abs);
                        if (ref.msb_max && *ref.msb_max - t + 2 >= 0) {
                            REQUIRE(ref.skipped_abs <= std::int64_t(taps - 1) << (*ref.msb_max - t + 2));
                        }
                    }
        }
    }
}

TEST_CASE("conv2d error paths") {
    std::mt19937_64 rng(5);
    auto layer = random_layer(rng, 2, 3, 3, 3, 0);
    CHECK_THROWS_AS(conv2d(QuantTensor::zeros({2, 8, 8}, 0), layer, ConvMode::exact()), ShapeError);
    CHECK_THROWS_AS(conv2d(QuantTensor::zeros({3, 2, 8}, 0), layer, ConvMode::exact()), ShapeError);
    CHECK_THROWS_AS(conv2d(QuantTensor::zeros({3, 8, 8}, 1), layer, ConvMode::exact()), ShapeError);
    CHECK_THROWS_AS(conv2d(QuantTensor::zeros({8, 8}, 0), layer, ConvMode::exact()), ShapeError);

    // 9 * 2^15 * 2^15 overflows the 32-bit accumulator.
    ConvLayer big(QuantTensor({1, 1, 3, 3}, std::vector<std::int32_t>(9, 1 << 15), 0),
                  QuantTensor::zeros({1}, 0));
    QuantTensor in({1, 3, 3}, std::vector<std::int32_t>(9, 1 << 15), 0);
    CHECK_THROWS_AS(conv2d(in, big, ConvMode::exact()), OverflowError);
}

TEST_CASE("avg_pool_2x2 rounding") {
    QuantTensor a({1, 2, 2}, {4, 4, 4, 4}, 3);
    CHECK(avg_pool_2x2(a).data()[0] == 4);
    CHECK(avg_pool_2x2(a).scale_exp() == 3);
    QuantTensor b({1, 2, 2}, {1, 2, 3, 4}, 0);
    CHECK(avg_pool_2x2(b).data()[0] == oracle::rounded_mean({1, 2, 3, 4}));
    CHECK(avg_pool_2x2(b).data()[0] == 3);
    QuantTensor nb({1, 2, 2}, {-1, -2, -3, -4}, 0);
    CHECK(avg_pool_2x2(nb).data()[0] == -3);
    CHECK(avg_pool_2x2(QuantTensor::zeros({2, 4, 4}, 0)).data()[3] == 0);
    CHECK_THROWS_AS(avg_pool_2x2(QuantTensor::zeros({1, 3, 4}, 0)), ShapeError);

    // A lone small value keeps its sign under the nonzero-preserving rule.
    QuantTensor s({1, 2, 2}, {1, 0, 0, 0}, 0);
    CHECK(avg_pool_2x2(s).data()[0] == 0);
    CHECK(avg_pool_2x2(s, Rounding::HalfAwayKeepNonzero).data()[0] == 1);

    std::mt19937_64 rng(6);
    for (int iter = 0; iter < 200; ++iter) {
        auto t = random_tensor(rng, {3, 6, 8}, 16, 0);
        const auto p = avg_pool_2x2(t);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < 3; ++y)
                for (std::size_t x = 0; x < 4; ++x) {
                    REQUIRE(p.at(c, y, x) == oracle::rounded_mean({t.at(c, 2 * y, 2 * x), t.at(c, 2 * y, 2 * x + 1),
                                                                   t.at(c, 2 * y + 1, 2 * x),
                                                                   t.at(c, 2 * y + 1, 2 * x + 1)}));
                }
    }
}

TEST_CASE("activations") {
    QuantTensor x({3}, {-5, 0, 7}, 4);
    const auto r = apply_activation(x, Activation::ReLU, 99);
    CHECK(std::vector<std::int32_t>(r.data().begin(), r.data().end()) == std::vector<std::int32_t>{0, 0, 7});
    CHECK(r.scale_exp() == 4);

    for (int s : {0, 5, 12}) {
        const auto z = apply_activation(QuantTensor({1}, {0}, s), Activation::Tanh, 7);
        CHECK(z.data()[0] == 0);
    }

    // Real-valued oracle for large inputs at scale 7.
    for (std::int32_t v : {1 << 10, 3 << 10, 1 << 14, 123456}) {
        const auto t = apply_activation(QuantTensor({1}, {v}, 10), Activation::Tanh, 7);
        const double expect = std::round(128.0 * std::tanh(v / 1024.0));
        CHECK(t.data()[0] == static_cast<std::int32_t>(expect));
        CHECK(t.data()[0] <= 128);
        CHECK(t.scale_exp() == 7);
    }
    const auto sat = apply_activation(QuantTensor({1}, {1 << 20}, 10), Activation::Tanh, 7);
    CHECK(sat.data()[0] == 128);
    const auto neg = apply_activation(QuantTensor({1}, {-(1 << 20)}, 10), Activation::Tanh, 7);
    CHECK(neg.data()[0] == -128);

    const auto tiny = QuantTensor({1}, {1}, 16);
    CHECK(apply_activation(tiny, Activation::Tanh, 7).data()[0] == 0);
    CHECK(apply_activation(tiny, Activation::Tanh, 7, Rounding::HalfAwayKeepNonzero).data()[0] == 1);
}

TEST_CASE("requantize") {
    QuantTensor x({4}, {3, -3, 5, 1000}, 4);
    const auto r = requantize(x, 2);
    CHECK(std::vector<std::int32_t>(r.data().begin(), r.data().end()) == std::vector<std::int32_t>{1, -1, 1, 250});
    CHECK(r.scale_exp() == 2);
    const auto up = requantize(x, 6);
    CHECK(up.data()[3] == 4000);
    CHECK_THROWS_AS(requantize(QuantTensor({1}, {1 << 29}, 0), 4), OverflowError);
}

TEST_CASE("fully_connected") {
    QuantTensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}, 0);
    QuantTensor x({3}, {4, -2, 9}, 5);
    const auto y = fully_connected(x, eye, QuantTensor::zeros({3}, 5));
    CHECK(y.data()[0] == 4);
    CHECK(y.data()[1] == -2);
    CHECK(y.data()[2] == 9);

    const auto one = fully_connected(QuantTensor({1}, {5}, 0), QuantTensor({1, 1}, {3}, 0),
                                     QuantTensor({1}, {2}, 0));
    CHECK(one.data()[0] == 17);

    std::mt19937_64 rng(8);
    for (int iter = 0; iter < 100; ++iter) {
        auto in = random_tensor(rng, {2, 3, 3}, 10, 3);
        auto w = random_tensor(rng, {7, 18}, 10, 8);
        auto b = random_tensor(rng, {7}, 14, 11);
        const auto out = fully_connected(in, w, b);
        CHECK(out.scale_exp() == 11);
        for (std::size_t r = 0; r < 7; ++r) {
            std::int64_t acc = b.data()[r];
            for (std::size_t c = 0; c < 18; ++c) acc += std::int64_t{w.data()[r * 18 + c]} * in.data()[c];
            REQUIRE(out.data()[r] == acc);
        }
        const auto shifted = fully_connected(in, w, b, 7);
        CHECK(shifted.scale_exp() == 7);
    }

    CHECK_THROWS_AS(fully_connected(QuantTensor::zeros({4}, 0), eye, QuantTensor::zeros({3}, 0)), ShapeError);
    CHECK_THROWS_AS(fully_connected(QuantTensor::zeros({3}, 0), eye, QuantTensor::zeros({3}, 2)), ShapeError);
}

TEST_CASE("sparsity_of") {
    CHECK(sparsity_of(QuantTensor::zeros({4}, 0)) == 1.0);
    CHECK(sparsity_of(QuantTensor({3}, {1, 2, 3}, 0)) == 0.0);
    CHECK(sparsity_of(QuantTensor({4}, {0, 0, 1, 3}, 0)) == 0.5);
}
