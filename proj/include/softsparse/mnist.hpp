#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <vector>

namespace softsparse {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> pixels; // count * rows * cols, row-major
};

/// Parses a big-endian IDX3 image stream. Throws FormatError on a bad magic
/// or truncated payload.
IdxImages load_idx_images(std::istream& in);
IdxImages load_idx_images(const std::filesystem::path& path);

/// Parses a big-endian IDX1 label stream; labels must lie in 0..9.
std::vector<std::uint8_t> load_idx_labels(std::istream& in);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

/// Images with their labels.
class MnistSet {
public:
    MnistSet() = default;
    /// Throws FormatError if counts differ.
    MnistSet(IdxImages images, std::vector<std::uint8_t> labels);

    std::size_t size() const { return labels_.size(); }
    bool empty() const { return labels_.empty(); }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t pixels_per_image() const { return rows_ * cols_; }

    std::span<const std::uint8_t> image(std::size_t i) const {
        return std::span<const std::uint8_t>(pixels_).subspan(i * pixels_per_image(), pixels_per_image());
    }
    std::uint8_t label(std::size_t i) const { return labels_[i]; }
    std::span<const std::uint8_t> pixels() const { return pixels_; }
    std::span<const std::uint8_t> labels() const { return labels_; }

    /// First n images (or all if n >= size()).
    MnistSet head(std::size_t n) const;
    /// Concatenation; both sets must share image dimensions.
    static MnistSet concat(const MnistSet& a, const MnistSet& b);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> pixels_;
    std::vector<std::uint8_t> labels_;
};

enum class MnistSplit { Train, Test };

/// Loads {train,t10k}-{images-idx3,labels-idx1}-ubyte from `dir`.
MnistSet load_mnist(const std::filesystem::path& dir, MnistSplit split);

/// Zero-pixel and intensity statistics of an image set.
struct SparsityStats {
    std::size_t images = 0;
    std::size_t pixels_per_image = 0;
    double mean_zero_pixels = 0;
    std::size_t min_zero_pixels = 0;
    std::size_t max_zero_pixels = 0;
    double stddev_zero_pixels = 0; // population
    double zero_fraction = 0;
    double pixel_mean = 0;
    double pixel_stddev = 0; // population
};

/// A pixel counts as zero only when its value is exactly 0. Throws
/// DomainError on an empty set.
SparsityStats dataset_stats(std::span<const std::uint8_t> pixels, std::size_t pixels_per_image);
SparsityStats dataset_stats(const MnistSet& set);

} // namespace softsparse
