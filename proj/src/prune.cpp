#include "softsparse/prune.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "softsparse/error.hpp"

namespace softsparse {

std::string MsbMagnitude::to_string() const {
    return is_zero() ? std::string("zero") : std::to_string(position());
}

std::string ProductMagnitude::to_string() const {
    return is_zero() ? std::string("zero") : std::to_string(sum());
}

PruneThreshold PruneThreshold::from_int(int t_int) {
    if (t_int < 1) {
        throw DomainError("prune threshold must be >= 1, got " + std::to_string(t_int));
    }
    return PruneThreshold(t_int, std::nullopt);
}

PruneThreshold PruneThreshold::from_fraction(double f) {
    if (!(f > 0.0 && f < 1.0)) {
        std::ostringstream os;
        os << "error fraction must lie in (0, 1), got " << f;
        throw DomainError(os.str());
    }
    const double t = std::ceil(std::log2(1.0 / f));
    // (0.5, 1) gives log2 < 1; the threshold still has to keep the maximum.
    return PruneThreshold(std::max(1, static_cast<int>(t)), f);
}

std::string PruneThreshold::label() const {
    std::ostringstream os;
    if (fraction_) {
        os << "f:" << *fraction_;
    } else {
        os << "t:" << t_int_;
    }
    return os.str();
}

std::vector<std::int8_t> msb_codes(std::span<const std::int32_t> values) {
    std::vector<std::int8_t> out(values.size());
    std::transform(values.begin(), values.end(), out.begin(),
                   [](std::int32_t v) { return msb_pos(v).raw(); });
    return out;
}

DotTally approx_dot_packed(std::span<const std::int32_t> a, std::span<const std::int8_t> a_msb,
                           std::span<const std::int32_t> b, std::span<const std::int8_t> b_msb,
                           int t_int, std::span<std::uint8_t> kept) {
    const std::size_t n = a.size();
    DotTally tally;

    // Step 1+2: magnitude sums and their maximum. Zero operands never compete.
    int msb_max = -1;
    for (std::size_t i = 0; i < n; ++i) {
        const int ma = a_msb[i];
        const int mb = b_msb[i];
        if ((ma | mb) < 0) {
            continue;
        }
        ++tally.nonzero;
        msb_max = std::max(msb_max, ma + mb);
    }
    if (!kept.empty()) {
        std::fill(kept.begin(), kept.end(), std::uint8_t{0});
    }
    if (msb_max < 0) {
        return tally;
    }
    tally.msb_max = ProductMagnitude::at(msb_max);

    // Step 3: keep iff msb_max - M_i < t_int, i.e. M_i > msb_max - t_int.
    const int floor_exclusive = msb_max - t_int;
    std::int64_t sum = 0;
    std::size_t performed = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int ma = a_msb[i];
        const int mb = b_msb[i];
        if ((ma | mb) < 0 || ma + mb <= floor_exclusive) {
            continue;
        }
        sum += static_cast<std::int64_t>(a[i]) * b[i];
        ++performed;
        if (!kept.empty()) {
            kept[i] = 1;
        }
    }
    tally.sum = sum;
    tally.performed = performed;
    return tally;
}

PruneOutcome approx_dot(std::span<const std::int32_t> a, std::span<const std::int32_t> b,
                        const PruneThreshold& threshold) {
    if (a.size() != b.size()) {
        throw ShapeError("approx_dot operand arrays differ in length");
    }
    if (a.empty()) {
        throw DomainError("approx_dot needs at least one operand pair");
    }
    const auto a_msb = msb_codes(a);
    const auto b_msb = msb_codes(b);
    std::vector<std::uint8_t> kept(a.size());
    const DotTally tally = approx_dot_packed(a, a_msb, b, b_msb, threshold.t_int(), kept);

    PruneOutcome out;
    out.sum = tally.sum;
    out.mults_performed = tally.performed;
    out.msb_max = tally.msb_max;
    out.kept_mask.assign(kept.begin(), kept.end());
    return out;
}

PruneOutcome approx_dot(std::span<const OperandPair> pairs, const PruneThreshold& threshold) {
    std::vector<std::int32_t> a(pairs.size());
    std::vector<std::int32_t> b(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        a[i] = pairs[i].first;
        b[i] = pairs[i].second;
    }
    return approx_dot(std::span<const std::int32_t>(a), std::span<const std::int32_t>(b), threshold);
}

} // namespace softsparse
