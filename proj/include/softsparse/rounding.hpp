#pragma once

#include <cmath>
#include <cstdint>

namespace softsparse {

enum class Rounding {
    /// Round half away from zero.
    HalfAway,
    /// Round half away from zero, but a nonzero value never collapses to 0:
    /// results that would round to 0 become +/-1 with the sign of the input.
    HalfAwayKeepNonzero,
};

/// num / den rounded per `rule`; den > 0.
constexpr std::int64_t round_div(std::int64_t num, std::int64_t den,
                                 Rounding rule = Rounding::HalfAway) {
    const std::int64_t mag = num < 0 ? -num : num;
    std::int64_t q = (2 * mag + den) / (2 * den);
    if (q == 0 && mag != 0 && rule == Rounding::HalfAwayKeepNonzero) {
        q = 1;
    }
    return num < 0 ? -q : q;
}

/// value * 2^-shift rounded per `rule`; shift >= 0.
constexpr std::int64_t round_shift(std::int64_t value, int shift,
                                   Rounding rule = Rounding::HalfAway) {
    if (shift == 0) {
        return value;
    }
    return round_div(value, std::int64_t{1} << shift, rule);
}

/// Real-valued x rounded per `rule`.
inline std::int64_t round_real(double x, Rounding rule = Rounding::HalfAway) {
    auto q = static_cast<std::int64_t>(std::round(x)); // std::round is half away from zero
    if (q == 0 && x != 0.0 && rule == Rounding::HalfAwayKeepNonzero) {
        q = x < 0.0 ? -1 : 1;
    }
    return q;
}

} // namespace softsparse
