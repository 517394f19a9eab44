#include "softsparse/weights.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include "softsparse/error.hpp"

namespace softsparse {

namespace {

constexpr std::array<char, 4> kMagic{'L', 'N', 'W', '1'};
// Guards against absurd allocations from corrupted headers.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 31;

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                                char((v >> 24) & 0xff)};
    out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
        throw FormatError(std::string("length mismatch: truncated ") + what);
    }
    return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
           (std::uint32_t{b[3]} << 24);
}

std::uint8_t get_u8(std::istream& in, const char* what) {
    char c = 0;
    if (!in.get(c)) {
        throw FormatError(std::string("length mismatch: truncated ") + what);
    }
    return static_cast<std::uint8_t>(c);
}

std::uint64_t shape_elements(const std::vector<std::uint32_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1}, std::multiplies<>());
}

} // namespace

std::size_t WeightRecord::element_count() const {
    return std::visit([](const auto& v) { return v.size(); }, data);
}

void WeightContainer::add(WeightRecord record) {
    if (find(record.name)) {
        throw DomainError("duplicate weight record '" + record.name + "'");
    }
    if (shape_elements(record.shape) != record.element_count()) {
        throw DomainError("weight record '" + record.name + "' shape does not match its data");
    }
    if (record.shape.size() > 255) {
        throw DomainError("weight record rank exceeds 255");
    }
    records_.push_back(std::move(record));
}

void WeightContainer::add_int32(std::string name, std::vector<std::uint32_t> shape,
                                std::vector<std::int32_t> data) {
    add(WeightRecord{std::move(name), std::move(shape), std::move(data)});
}

void WeightContainer::add_float32(std::string name, std::vector<std::uint32_t> shape,
                                  std::vector<float> data) {
    add(WeightRecord{std::move(name), std::move(shape), std::move(data)});
}

const WeightRecord* WeightContainer::find(const std::string& name) const {
    const auto it = std::find_if(records_.begin(), records_.end(),
                                 [&](const WeightRecord& r) { return r.name == name; });
    return it == records_.end() ? nullptr : &*it;
}

const WeightRecord& WeightContainer::get(const std::string& name) const {
    const WeightRecord* r = find(name);
    if (!r) {
        throw FormatError("weight record '" + name + "' not found");
    }
    return *r;
}

const std::vector<std::int32_t>& WeightContainer::int32(const std::string& name) const {
    const auto& r = get(name);
    if (r.dtype() != DType::Int32) {
        throw FormatError("weight record '" + name + "' is not int32");
    }
    return std::get<0>(r.data);
}

const std::vector<float>& WeightContainer::float32(const std::string& name) const {
    const auto& r = get(name);
    if (r.dtype() != DType::Float32) {
        throw FormatError("weight record '" + name + "' is not float32");
    }
    return std::get<1>(r.data);
}

void save_weights(std::ostream& out, const WeightContainer& c) {
    out.write(kMagic.data(), 4);
    put_u32(out, static_cast<std::uint32_t>(c.size()));
    for (const auto& r : c.records()) {
        put_u32(out, static_cast<std::uint32_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        out.put(static_cast<char>(r.dtype()));
        out.put(static_cast<char>(r.shape.size()));
        for (auto d : r.shape) put_u32(out, d);
        std::visit(
            [&](const auto& v) {
                for (auto x : v) put_u32(out, std::bit_cast<std::uint32_t>(x));
            },
            r.data);
    }
    if (!out) {
        throw Error("failed writing weight container");
    }
}

void save_weights(const std::filesystem::path& path, const WeightContainer& c) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw Error("cannot create " + path.string());
    }
    save_weights(f, c);
}

WeightContainer load_weights(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || magic != kMagic) {
        throw FormatError("bad magic: not an LNW1 weight container");
    }
    WeightContainer c;
    const std::uint32_t count = get_u32(in, "record count");
    for (std::uint32_t i = 0; i < count; ++i) {
        WeightRecord r;
        const std::uint32_t name_len = get_u32(in, "name length");
        if (name_len > (1u << 16)) {
            throw FormatError("length mismatch: implausible name length " + std::to_string(name_len));
        }
        r.name.resize(name_len);
        if (!in.read(r.name.data(), name_len)) {
            throw FormatError("length mismatch: truncated record name");
        }
        const std::uint8_t dtype = get_u8(in, "dtype");
        if (dtype > 1) {
            throw FormatError("unknown dtype tag " + std::to_string(dtype) + " in record '" + r.name + "'");
        }
        const std::uint8_t rank = get_u8(in, "rank");
        r.shape.resize(rank);
        for (auto& d : r.shape) d = get_u32(in, "dims");
        const std::uint64_t n = shape_elements(r.shape);
        if (n > kMaxElements) {
            throw FormatError("length mismatch: record '" + r.name + "' declares " + std::to_string(n) + " elements");
        }
        std::vector<unsigned char> bytes(n * 4);
        if (n > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n * 4))) {
            throw FormatError("length mismatch: record '" + r.name + "' payload truncated (" +
                              std::to_string(in.gcount()) + " of " + std::to_string(n * 4) + " bytes)");
        }
        std::vector<std::uint32_t> raw(n);
        for (std::size_t k = 0; k < n; ++k) {
            const unsigned char* b = bytes.data() + 4 * k;
            raw[k] = std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
                     (std::uint32_t{b[3]} << 24);
        }
        if (dtype == 0) {
            std::vector<std::int32_t> v(n);
            std::transform(raw.begin(), raw.end(), v.begin(), [](std::uint32_t u) { return std::bit_cast<std::int32_t>(u); });
            r.data = std::move(v);
        } else {
            std::vector<float> v(n);
            std::transform(raw.begin(), raw.end(), v.begin(), [](std::uint32_t u) { return std::bit_cast<float>(u); });
            r.data = std::move(v);
        }
        try {
            c.add(std::move(r));
        } catch (const DomainError& e) {
            throw FormatError(e.what());
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError("length mismatch: trailing bytes after the last record");
    }
    return c;
}

WeightContainer load_weights(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw FormatError("cannot open " + path.string());
    }
    return load_weights(f);
}

} // namespace softsparse
