#include "softsparse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "softsparse/error.hpp"

namespace softsparse {

std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::int32_t checked_element(std::int64_t v, const char* what) {
    if (v > kTensorMagnitudeLimit || v < -kTensorMagnitudeLimit) {
        throw OverflowError(std::string(what) + ": value " + std::to_string(v) +
                            " exceeds the 2^30 tensor range");
    }
    return static_cast<std::int32_t>(v);
}

QuantTensor::QuantTensor(std::vector<std::size_t> shape, std::vector<std::int32_t> data,
                         int scale_exp)
    : shape_(std::move(shape)), data_(std::move(data)), scale_exp_(scale_exp) {
    if (element_count(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
    }
    const auto bad = std::find_if(data_.begin(), data_.end(), [](std::int32_t v) {
        return v > kTensorMagnitudeLimit || v < -kTensorMagnitudeLimit;
    });
    if (bad != data_.end()) {
        throw OverflowError("tensor element " + std::to_string(*bad) +
                            " exceeds the 2^30 tensor range");
    }
}

QuantTensor QuantTensor::zeros(std::vector<std::size_t> shape, int scale_exp) {
    const std::size_t n = element_count(shape);
    return QuantTensor(std::move(shape), std::vector<std::int32_t>(n, 0), scale_exp);
}

double QuantTensor::real(std::size_t i) const {
    return std::ldexp(static_cast<double>(data_.at(i)), -scale_exp_);
}

QuantTensor QuantTensor::reshaped(std::vector<std::size_t> shape) const {
    return QuantTensor(std::move(shape), data_, scale_exp_);
}

std::string QuantTensor::shape_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape_[i]);
    }
    return s + ")";
}

} // namespace softsparse
