#include "softsparse/mnist.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "softsparse/error.hpp"

namespace softsparse {

namespace {

std::uint32_t read_be32(std::istream& in, const char* what) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
        throw FormatError(std::string("truncated IDX header (") + what + ")");
    }
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
           std::uint32_t{b[3]};
}

std::string hex(std::uint32_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << v;
    return os.str();
}

std::ifstream open_binary(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw FormatError("cannot open " + path.string());
    }
    return f;
}

void read_payload(std::istream& in, std::vector<std::uint8_t>& out, const char* what) {
    if (!out.empty() && !in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()))) {
        throw FormatError(std::string("truncated IDX payload (") + what + "): expected " +
                          std::to_string(out.size()) + " bytes, got " + std::to_string(in.gcount()));
    }
}

} // namespace

IdxImages load_idx_images(std::istream& in) {
    const std::uint32_t magic = read_be32(in, "magic");
    if (magic != kIdxImageMagic) {
        throw FormatError("bad IDX image magic " + hex(magic) + ", expected " + hex(kIdxImageMagic));
    }
    IdxImages img;
    img.count = read_be32(in, "count");
    img.rows = read_be32(in, "rows");
    img.cols = read_be32(in, "cols");
    img.pixels.resize(img.count * img.rows * img.cols);
    read_payload(in, img.pixels, "images");
    return img;
}

IdxImages load_idx_images(const std::filesystem::path& path) {
    auto f = open_binary(path);
    return load_idx_images(f);
}

std::vector<std::uint8_t> load_idx_labels(std::istream& in) {
    const std::uint32_t magic = read_be32(in, "magic");
    if (magic != kIdxLabelMagic) {
        throw FormatError("bad IDX label magic " + hex(magic) + ", expected " + hex(kIdxLabelMagic));
    }
    std::vector<std::uint8_t> labels(read_be32(in, "count"));
    read_payload(in, labels, "labels");
    const auto bad = std::find_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l > 9; });
    if (bad != labels.end()) {
        throw FormatError("label " + std::to_string(*bad) + " at index " +
                          std::to_string(bad - labels.begin()) + " is outside 0..9");
    }
    return labels;
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
    auto f = open_binary(path);
    return load_idx_labels(f);
}

MnistSet::MnistSet(IdxImages images, std::vector<std::uint8_t> labels)
    : rows_(images.rows), cols_(images.cols), pixels_(std::move(images.pixels)), labels_(std::move(labels)) {
    if (images.count != labels_.size()) {
        throw FormatError("image count " + std::to_string(images.count) + " != label count " +
                          std::to_string(labels_.size()));
    }
}

MnistSet MnistSet::head(std::size_t n) const {
    n = std::min(n, size());
    IdxImages img;
    img.count = n;
    img.rows = rows_;
    img.cols = cols_;
    img.pixels.assign(pixels_.begin(), pixels_.begin() + static_cast<std::ptrdiff_t>(n * pixels_per_image()));
    return MnistSet(std::move(img), std::vector<std::uint8_t>(labels_.begin(), labels_.begin() + static_cast<std::ptrdiff_t>(n)));
}

MnistSet MnistSet::concat(const MnistSet& a, const MnistSet& b) {
    if (a.rows_ != b.rows_ || a.cols_ != b.cols_) {
        throw FormatError("cannot concatenate image sets of different dimensions");
    }
    IdxImages img;
    img.count = a.size() + b.size();
    img.rows = a.rows_;
    img.cols = a.cols_;
    img.pixels = a.pixels_;
    img.pixels.insert(img.pixels.end(), b.pixels_.begin(), b.pixels_.end());
    auto labels = a.labels_;
    labels.insert(labels.end(), b.labels_.begin(), b.labels_.end());
    return MnistSet(std::move(img), std::move(labels));
}

MnistSet load_mnist(const std::filesystem::path& dir, MnistSplit split) {
    const std::string prefix = split == MnistSplit::Train ? "train" : "t10k";
    return MnistSet(load_idx_images(dir / (prefix + "-images-idx3-ubyte")),
                    load_idx_labels(dir / (prefix + "-labels-idx1-ubyte")));
}

SparsityStats dataset_stats(std::span<const std::uint8_t> pixels, std::size_t pixels_per_image) {
    if (pixels_per_image == 0 || pixels.empty()) {
        throw DomainError("dataset_stats needs a non-empty image set");
    }
    if (pixels.size() % pixels_per_image != 0) {
        throw DomainError("pixel buffer is not a whole number of images");
    }
    SparsityStats s;
    s.images = pixels.size() / pixels_per_image;
    s.pixels_per_image = pixels_per_image;
    s.min_zero_pixels = pixels_per_image;

    double zero_sum = 0, zero_sq = 0, px_sum = 0, px_sq = 0;
    for (std::size_t i = 0; i < s.images; ++i) {
        const auto img = pixels.subspan(i * pixels_per_image, pixels_per_image);
        std::size_t zeros = 0;
        for (std::uint8_t p : img) {
            zeros += (p == 0);
            px_sum += p;
            px_sq += double(p) * p;
        }
        zero_sum += double(zeros);
        zero_sq += double(zeros) * double(zeros);
        s.min_zero_pixels = std::min(s.min_zero_pixels, zeros);
        s.max_zero_pixels = std::max(s.max_zero_pixels, zeros);
    }
    const double n = double(s.images);
    const double total = double(pixels.size());
    s.mean_zero_pixels = zero_sum / n;
    s.stddev_zero_pixels = std::sqrt(std::max(0.0, zero_sq / n - s.mean_zero_pixels * s.mean_zero_pixels));
    s.zero_fraction = zero_sum / total;
    s.pixel_mean = px_sum / total;
    s.pixel_stddev = std::sqrt(std::max(0.0, px_sq / total - s.pixel_mean * s.pixel_mean));
    return s;
}

SparsityStats dataset_stats(const MnistSet& set) {
    return dataset_stats(set.pixels(), set.pixels_per_image());
}

} // namespace softsparse
