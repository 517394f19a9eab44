#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace softsparse {

/// Largest magnitude a tensor element may hold. Keeps every product inside
/// 60 bits and keeps INT32_MIN out of the MSB extractor.
inline constexpr std::int32_t kTensorMagnitudeLimit = std::int32_t{1} << 30;

/// Integer tensor, row-major, real value ~= data * 2^-scale_exp.
class QuantTensor {
public:
    QuantTensor() = default;
    /// Throws ShapeError if data.size() != product(shape) and OverflowError if
    /// any element lies outside [-2^30, 2^30].
    QuantTensor(std::vector<std::size_t> shape, std::vector<std::int32_t> data, int scale_exp);

    static QuantTensor zeros(std::vector<std::size_t> shape, int scale_exp);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    int scale_exp() const { return scale_exp_; }

    std::span<const std::int32_t> data() const { return data_; }

    /// (c, h, w) element of a rank-3 tensor.
    std::int32_t at(std::size_t c, std::size_t h, std::size_t w) const {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }

    double real(std::size_t i) const;

    /// Same data viewed with a different shape of equal element count.
    QuantTensor reshaped(std::vector<std::size_t> shape) const;

    std::string shape_string() const;

    bool operator==(const QuantTensor&) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<std::int32_t> data_;
    int scale_exp_ = 0;
};

std::size_t element_count(const std::vector<std::size_t>& shape);

/// Throws OverflowError unless |v| <= 2^30.
std::int32_t checked_element(std::int64_t v, const char* what);

} // namespace softsparse
