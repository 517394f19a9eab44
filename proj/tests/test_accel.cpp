#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "softsparse/accel.hpp"
#include "softsparse/error.hpp"

using namespace softsparse;
using namespace softsparse::accel;

namespace {

std::array<std::int32_t, 9> kernel_of(std::initializer_list<std::int32_t> v) {
    std::array<std::int32_t, 9> k{};
    std::copy(v.begin(), v.end(), k.begin());
    return k;
}

std::array<std::int32_t, 4> run(ConvAccelerator& acc, const std::vector<std::int32_t>& window,
                                int t, std::size_t* cycles = nullptr) {
    VectorMemory mem(window);
    const auto h = acc.issue(AccelRequest{0, 16}, mem, PruneThreshold::from_int(t));
    const std::size_t c = acc.run_until_done(h);
    if (cycles) *cycles = c;
    const auto y = acc.read_outputs(h);
    acc.acknowledge(h);
    return y;
}

} // namespace

TEST_CASE("load_kernel precomputes MSBs") {
    const auto ones = load_kernel(kernel_of({1, 1, 1, 1, 1, 1, 1, 1, 1}));
    for (auto m : ones.msbs) CHECK(m == MsbMagnitude::at(0));
    const auto pows = load_kernel(kernel_of({1, 2, 4, 8, 16, 32, 64, 128, 256}));
    for (int i = 0; i < 9; ++i) CHECK(pows.msbs[i] == MsbMagnitude::at(i));
    const auto z = load_kernel(kernel_of({0, 1, 1, 1, 1, 1, 1, 1, 1}));
    CHECK(z.msbs[0].is_zero());
}

TEST_CASE("issue moves IDLE to GET_DATA; busy and size errors") {
    ConvAccelerator acc;
    VectorMemory mem(std::vector<std::int32_t>(16, 1));
    CHECK_THROWS_AS(acc.issue(AccelRequest{0, 16}, mem, PruneThreshold::from_int(3)), StateError);
    acc.load_kernel(kernel_of({1, 1, 1, 1, 1, 1, 1, 1, 1}));
    CHECK_THROWS_AS(acc.issue(AccelRequest{0, 9}, mem, PruneThreshold::from_int(3)), DomainError);
    CHECK(acc.state() == AccelState::Idle);
    const auto h = acc.issue(AccelRequest{0, 16}, mem, PruneThreshold::from_int(3));
    CHECK(acc.state() == AccelState::GetData);
    CHECK_THROWS_AS(acc.issue(AccelRequest{0, 16}, mem, PruneThreshold::from_int(3)), StateError);
    CHECK_THROWS_AS(acc.load_kernel(kernel_of({1})), StateError);
    CHECK_THROWS_AS(acc.read_outputs(h), StateError);
    CHECK_THROWS_AS(acc.acknowledge(h), StateError);
    CHECK(acc.result_register() == 0);
}

TEST_CASE("a full run takes 16 fetches plus three stages") {
    ConvAccelerator acc;
    acc.load_kernel(kernel_of({1, 2, 3, 4, 5, 6, 7, 8, 9}));
    std::vector<std::int32_t> window(16);
    for (int i = 0; i < 16; ++i) window[i] = i + 1;
    VectorMemory mem(window);
    const std::uint64_t start = acc.cycle();
    const auto h = acc.issue(AccelRequest{0, 16}, mem, PruneThreshold::from_int(62));

    std::vector<AccelState> states{acc.state()};
    std::size_t steps = 0;
    while (acc.state() != AccelState::Done) {
        const auto r = acc.step(h);
        REQUIRE(r.event.has_value());
        states.push_back(r.state);
        ++steps;
    }
    CHECK(steps == kCyclesToDone);
    CHECK(steps == 19);
    CHECK(acc.result_register() == 1);

    // DONE holds with a stall record until acknowledged.
    const auto stall = acc.step(h);
    CHECK(stall.state == AccelState::Done);
    CHECK(stall.event->records.at(0).kind == RecordKind::Stall);

    acc.acknowledge(h);
    CHECK(acc.state() == AccelState::Idle);
    // issue + 19 + stall + acknowledge
    CHECK(acc.cycle() - start == 1 + 19 + 1 + 1);
    CHECK_THROWS_AS(acc.step(h), StateError);

    // Legal transitions and strictly increasing cycles across the trace.
    const auto& tr = acc.trace();
    for (std::size_t i = 0; i < tr.size(); ++i) {
        CHECK(is_legal_transition(tr[i].state, tr[i].next));
        if (i > 0) {
            CHECK(tr[i].cycle > tr[i - 1].cycle);
            CHECK(tr[i].state == tr[i - 1].next);
        }
    }
}

TEST_CASE("outputs at large T equal the exact valid convolution") {
    std::mt19937_64 rng(3);
    ConvAccelerator acc;
    for (int iter = 0; iter < 500; ++iter) {
        std::vector<std::int32_t> window(16), kernel(9);
        for (auto& v : window) v = oracle::log_uniform(rng, 14);
        for (auto& v : kernel) v = oracle::log_uniform(rng, 14);
        acc.load_kernel(std::span<const std::int32_t, 9>(kernel.data(), 9));
        const auto y = run(acc, window, 62);
        const auto ref = oracle::conv(window, 1, 4, 4, kernel, 1, 3, 3, {0});
        for (int o = 0; o < 4; ++o) REQUIRE(y[o] == ref[o]);
    }
}

TEST_CASE("all-zero window evaluates no products") {
    ConvAccelerator acc;
    acc.load_kernel(kernel_of({3, -1, 4, 1, -5, 9, 2, -6, 5}));
    const auto y = run(acc, std::vector<std::int32_t>(16, 0), 7);
    for (auto v : y) CHECK(v == 0);
    std::size_t kept = 0;
    for (const auto& ev : acc.trace())
        for (const auto& r : ev.records)
            if (r.kind == RecordKind::Product && *r.kept) ++kept;
    CHECK(kept == 0);
}

TEST_CASE("center-tap kernel passes the window center through") {
    ConvAccelerator acc;
    acc.load_kernel(kernel_of({0, 0, 0, 0, 1, 0, 0, 0, 0}));
    std::vector<std::int32_t> window(16);
    for (int i = 0; i < 16; ++i) window[i] = 10 * i - 70;
    const auto y = run(acc, window, 3);
    CHECK(y[0] == window[5]);
    CHECK(y[1] == window[6]);
    CHECK(y[2] == window[9]);
    CHECK(y[3] == window[10]);
}

TEST_CASE("uniform window with all-ones kernel") {
    ConvAccelerator acc;
    acc.load_kernel(kernel_of({1, 1, 1, 1, 1, 1, 1, 1, 1}));
    const auto y = run(acc, std::vector<std::int32_t>(16, -37), 62);
    for (auto v : y) CHECK(v == -9 * 37);
}

TEST_CASE("keep rule skips delta == T ties") {
    // Output y0 sees window[0]*128 (M = 7) and window[1]*1 (M = 0): delta 7.
    ConvAccelerator acc;
    acc.load_kernel(kernel_of({128, 1, 0, 0, 0, 0, 0, 0, 0}));
    std::vector<std::int32_t> window(16, 0);
    window[0] = 1;
    window[1] = 1;
    CHECK(run(acc, window, 7)[0] == 128);
    CHECK(run(acc, window, 8)[0] == 129);
}

TEST_CASE("32-bit output register overflow") {
    ConvAccelerator acc;
    acc.load_kernel(kernel_of({1 << 20, 1 << 20, 1 << 20, 1 << 20, 1 << 20, 1 << 20, 1 << 20, 1 << 20, 1 << 20}));
    VectorMemory mem(std::vector<std::int32_t>(16, 1 << 12));
    const auto h = acc.issue(AccelRequest{0, 16}, mem, PruneThreshold::from_int(62));
    acc.run_until_done(h);
    CHECK_THROWS_AS(acc.read_outputs(h), OverflowError);
}

TEST_CASE("memory base address offsets the window") {
    ConvAccelerator acc;
    acc.load_kernel(kernel_of({0, 0, 0, 0, 1, 0, 0, 0, 0}));
    std::vector<std::int32_t> words(40, 0);
    for (int i = 0; i < 16; ++i) words[20 + i] = i;
    VectorMemory mem(words);
    const auto h = acc.issue(AccelRequest{20, 16}, mem, PruneThreshold::from_int(4));
    acc.run_until_done(h);
    CHECK(acc.read_outputs(h)[0] == 5);

    // Stale handle after a new run.
    acc.acknowledge(h);
    const auto h2 = acc.issue(AccelRequest{20, 16}, mem, PruneThreshold::from_int(4));
    CHECK_THROWS_AS(acc.step(h), StateError);
    acc.run_until_done(h2);
}

TEST_CASE("trace export is JSON lines with stable fields") {
    ConvAccelerator acc;
    acc.load_kernel(kernel_of({1, 2, 3, 4, 5, 6, 7, 8, 9}));
    std::vector<std::int32_t> window(16);
    for (int i = 0; i < 16; ++i) window[i] = i;
    run(acc, window, 2);
    std::ostringstream os;
    write_trace_jsonl(os, acc.trace());
    std::istringstream is(os.str());
    std::string line;
    std::size_t products = 0, kept = 0, fetches = 0;
    while (std::getline(is, line)) {
        const auto j = nlohmann::json::parse(line);
        REQUIRE(j.contains("cycle"));
        REQUIRE(j.contains("state"));
        REQUIRE(j.contains("kind"));
        if (j["kind"] == "product") {
            ++products;
            kept += j["kept"].get<bool>();
            CHECK(j.contains("x"));
            CHECK(j.contains("w"));
            CHECK(j["state"] == "STAGE_2");
        }
        if (j["kind"] == "fetch") ++fetches;
    }
    CHECK(products == 36);
    CHECK(fetches == 16);
    CHECK(kept > 0);
    CHECK(kept < 36);
}
