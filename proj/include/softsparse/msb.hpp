#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <string>

namespace softsparse {

/// Position of the most significant set bit of |x|, i.e. floor(log2|x|),
/// or the Zero sentinel for x == 0. Zero orders below every position.
class MsbMagnitude {
public:
    static constexpr std::int8_t kZeroRaw = -1;

    constexpr MsbMagnitude() = default;

    static constexpr MsbMagnitude zero() { return MsbMagnitude{}; }
    static constexpr MsbMagnitude at(int position) {
        return MsbMagnitude{static_cast<std::int8_t>(position)};
    }

    constexpr bool is_zero() const { return raw_ == kZeroRaw; }
    /// Only meaningful when !is_zero().
    constexpr int position() const { return raw_; }
    /// -1 for Zero, the position otherwise. Used by the packed kernels.
    constexpr std::int8_t raw() const { return raw_; }

    constexpr auto operator<=>(const MsbMagnitude&) const = default;

    std::string to_string() const;

private:
    constexpr explicit MsbMagnitude(std::int8_t raw) : raw_(raw) {}
    std::int8_t raw_ = kZeroRaw;
};

/// MSB(a) + MSB(b), or Zero if either operand is zero.
/// For nonzero operands 2^s <= |a*b| < 2^(s+2).
class ProductMagnitude {
public:
    static constexpr std::int16_t kZeroRaw = -1;

    constexpr ProductMagnitude() = default;

    static constexpr ProductMagnitude zero() { return ProductMagnitude{}; }
    static constexpr ProductMagnitude at(int sum) {
        return ProductMagnitude{static_cast<std::int16_t>(sum)};
    }

    constexpr bool is_zero() const { return raw_ == kZeroRaw; }
    constexpr int sum() const { return raw_; }
    constexpr std::int16_t raw() const { return raw_; }

    constexpr auto operator<=>(const ProductMagnitude&) const = default;

    std::string to_string() const;

private:
    constexpr explicit ProductMagnitude(std::int16_t raw) : raw_(raw) {}
    std::int16_t raw_ = kZeroRaw;
};

/// Two's-complement magnitude; INT32_MIN maps to 2^31.
constexpr std::uint32_t magnitude(std::int32_t x) {
    const auto u = static_cast<std::uint32_t>(x);
    return x < 0 ? 0u - u : u;
}

constexpr MsbMagnitude msb_pos(std::int32_t x) {
    const std::uint32_t m = magnitude(x);
    if (m == 0) {
        return MsbMagnitude::zero();
    }
    return MsbMagnitude::at(std::bit_width(m) - 1);
}

constexpr ProductMagnitude product_magnitude(MsbMagnitude a, MsbMagnitude b) {
    if (a.is_zero() || b.is_zero()) {
        return ProductMagnitude::zero();
    }
    return ProductMagnitude::at(a.position() + b.position());
}

constexpr ProductMagnitude product_magnitude(std::int32_t a, std::int32_t b) {
    return product_magnitude(msb_pos(a), msb_pos(b));
}

} // namespace softsparse
