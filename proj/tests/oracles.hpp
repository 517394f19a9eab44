#pragma once

// Reference implementations used only by the tests. They are written
// independently of the library code paths they check: no shared helpers,
// no bit tricks, plain loops.

#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

/// floor(log2|x|) by repeated halving; nullopt for 0.
inline std::optional<int> msb(std::int64_t x) {
    std::int64_t m = x < 0 ? -x : x;
    if (m == 0) return std::nullopt;
    int p = 0;
    while (m >= 2) {
        m /= 2;
        ++p;
    }
    return p;
}

/// Smallest integer t with 2^t >= 1/f, found by enumeration.
inline int threshold_for_fraction(double f) {
    int t = 0;
    double pow2 = 1.0;
    while (pow2 * f < 1.0) {
        pow2 *= 2.0;
        ++t;
    }
    return t < 1 ? 1 : t;
}

struct DotResult {
    std::int64_t approx = 0;
    std::int64_t exact = 0;
    std::vector<bool> kept;
    std::vector<std::int64_t> products;
    std::optional<int> msb_max;
    std::int64_t skipped_abs = 0; // sum of |P| over skipped nonzero products
};

/// Evaluates every product and applies the keep rule (msb_max - M_i < t).
inline DotResult dot(const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs, int t) {
    DotResult r;
    std::vector<std::optional<int>> m(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const std::int64_t p = std::int64_t{pairs[i].first} * pairs[i].second;
        r.products.push_back(p);
        r.exact += p;
        const auto ma = msb(pairs[i].first);
        const auto mb = msb(pairs[i].second);
        if (ma && mb) {
            m[i] = *ma + *mb;
            if (!r.msb_max || *m[i] > *r.msb_max) r.msb_max = m[i];
        }
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const bool keep = m[i] && (*r.msb_max - *m[i]) < t;
        r.kept.push_back(keep);
        if (keep) {
            r.approx += r.products[i];
        } else {
            r.skipped_abs += r.products[i] < 0 ? -r.products[i] : r.products[i];
        }
    }
    return r;
}

/// Quadruple-loop valid convolution: input (C,H,W), weights (O,C,KH,KW).
inline std::vector<std::int64_t> conv(const std::vector<std::int32_t>& in, int c, int h, int w,
                                      const std::vector<std::int32_t>& wt, int o, int kh, int kw,
                                      const std::vector<std::int32_t>& bias) {
    const int oh = h - kh + 1;
    const int ow = w - kw + 1;
    std::vector<std::int64_t> out(static_cast<std::size_t>(o * oh * ow));
    for (int f = 0; f < o; ++f)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                std::int64_t acc = bias[f];
                for (int ch = 0; ch < c; ++ch)
                    for (int r = 0; r < kh; ++r)
                        for (int s = 0; s < kw; ++s)
                            acc += std::int64_t{in[(ch * h + y + r) * w + x + s]} *
                                   wt[((f * c + ch) * kh + r) * kw + s];
                out[(f * oh + y) * ow + x] = acc;
            }
    return out;
}

/// Mean of n integers rounded half away from zero, via doubles.
inline std::int64_t rounded_mean(const std::vector<std::int64_t>& v) {
    double s = 0;
    for (auto x : v) s += static_cast<double>(x);
    const double mean = s / static_cast<double>(v.size());
    const double mag = mean < 0 ? -mean : mean;
    const auto q = static_cast<std::int64_t>(mag + 0.5);
    return mean < 0 ? -q : q;
}

/// Random integer with a log-uniform magnitude up to 2^max_bits, random sign
/// and a chance of exact zero. Spreads MSB positions evenly.
inline std::int32_t log_uniform(std::mt19937_64& rng, int max_bits, double zero_prob = 0.1) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < zero_prob) return 0;
    std::uniform_int_distribution<int> bits(0, max_bits - 1);
    const int b = bits(rng);
    std::uniform_int_distribution<std::int64_t> v(std::int64_t{1} << b, (std::int64_t{1} << (b + 1)) - 1);
    const auto mag = static_cast<std::int32_t>(v(rng));
    return u(rng) < 0.5 ? -mag : mag;
}

} // namespace oracle
