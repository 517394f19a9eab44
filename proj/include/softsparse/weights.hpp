#pragma once

// LNW1 weight container.
//
//   "LNW1"                      4 bytes magic
//   u32 LE record count
//   per record:
//     u32 LE name length, UTF-8 name bytes
//     u8 dtype (0 = int32, 1 = float32)
//     u8 rank, rank x u32 LE dims
//     payload: product(dims) little-endian 4-byte elements

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace softsparse {

enum class DType : std::uint8_t { Int32 = 0, Float32 = 1 };

struct WeightRecord {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::variant<std::vector<std::int32_t>, std::vector<float>> data;

    DType dtype() const { return data.index() == 0 ? DType::Int32 : DType::Float32; }
    std::size_t element_count() const;

    bool operator==(const WeightRecord&) const = default;
};

class WeightContainer {
public:
    const std::vector<WeightRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }

    /// Throws DomainError on a duplicate name or a shape/data size mismatch.
    void add(WeightRecord record);
    void add_int32(std::string name, std::vector<std::uint32_t> shape, std::vector<std::int32_t> data);
    void add_float32(std::string name, std::vector<std::uint32_t> shape, std::vector<float> data);

    const WeightRecord* find(const std::string& name) const;
    /// Throws FormatError if missing.
    const WeightRecord& get(const std::string& name) const;
    const std::vector<std::int32_t>& int32(const std::string& name) const;
    const std::vector<float>& float32(const std::string& name) const;

    bool operator==(const WeightContainer&) const = default;

private:
    std::vector<WeightRecord> records_;
};

void save_weights(std::ostream& out, const WeightContainer& c);
void save_weights(const std::filesystem::path& path, const WeightContainer& c);

/// Validates magic, dtypes, dims and payload lengths. Throws FormatError
/// ("bad magic", "unknown dtype", "length mismatch", ...).
WeightContainer load_weights(std::istream& in);
WeightContainer load_weights(const std::filesystem::path& path);

} // namespace softsparse
