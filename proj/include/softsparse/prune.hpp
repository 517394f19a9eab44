#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "softsparse/msb.hpp"

namespace softsparse {

/// Skip threshold in MSB units. A product whose magnitude sum sits t_int or
/// more below the window maximum is dropped.
class PruneThreshold {
public:
    /// t_int >= 1, otherwise DomainError.
    static PruneThreshold from_int(int t_int);
    /// t_int = ceil(log2(1/f)); f must lie in the open interval (0, 1).
    static PruneThreshold from_fraction(double f);

    int t_int() const { return t_int_; }
    const std::optional<double>& fraction() const { return fraction_; }

    /// "f:0.1" or "t:7" style label.
    std::string label() const;

    bool operator==(const PruneThreshold&) const = default;

private:
    PruneThreshold(int t_int, std::optional<double> fraction)
        : t_int_(t_int), fraction_(fraction) {}

    int t_int_;
    std::optional<double> fraction_;
};

inline PruneThreshold threshold_from_fraction(double f) {
    return PruneThreshold::from_fraction(f);
}

struct PruneOutcome {
    std::int64_t sum = 0;
    std::vector<bool> kept_mask;
    std::size_t mults_performed = 0;
    ProductMagnitude msb_max;
};

using OperandPair = std::pair<std::int32_t, std::int32_t>;

/// MSB-proxy approximate sum of products. Index i is kept iff its product
/// magnitude is non-Zero and msb_max - M_i < t_int; only kept pairs are
/// multiplied. Throws DomainError on empty input.
PruneOutcome approx_dot(std::span<const OperandPair> pairs, const PruneThreshold& threshold);

/// Same as above on two parallel operand arrays of equal length.
PruneOutcome approx_dot(std::span<const std::int32_t> a, std::span<const std::int32_t> b,
                        const PruneThreshold& threshold);

/// Result of the packed kernel.
struct DotTally {
    std::int64_t sum = 0;
    std::size_t performed = 0;
    std::size_t nonzero = 0;
    ProductMagnitude msb_max;
};

/// Kernel shared by approx_dot and the convolution engine. Operand MSBs are
/// passed in raw form (-1 for Zero) so callers can precompute them once per
/// tensor. If `kept` is non-empty it receives one 0/1 flag per index.
DotTally approx_dot_packed(std::span<const std::int32_t> a, std::span<const std::int8_t> a_msb,
                           std::span<const std::int32_t> b, std::span<const std::int8_t> b_msb,
                           int t_int, std::span<std::uint8_t> kept = {});

/// Raw MSB codes for a whole array.
std::vector<std::int8_t> msb_codes(std::span<const std::int32_t> values);

} // namespace softsparse
