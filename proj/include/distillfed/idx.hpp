#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "distillfed/dataset.hpp"

namespace distillfed {

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& what) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) throw std::runtime_error("idx: truncated while reading " + what);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
           (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    std::array<unsigned char, 4> b{static_cast<unsigned char>(v >> 24),
                                   static_cast<unsigned char>(v >> 16),
                                   static_cast<unsigned char>(v >> 8),
                                   static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b.data()), 4);
}

}  // namespace detail

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // ubyte, 3 dims
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // ubyte, 1 dim

/// Loads an IDX image/label file pair into a Dataset. Pixels map to features
/// by row-major flattening and division by 255. num_classes is taken as
/// max(label) + 1 unless a larger value is forced.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        int num_classes_hint = 0) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("idx: cannot open " + images_path);
    if (auto m = detail::read_be32(img, "image magic"); m != kIdxImagesMagic)
        throw std::runtime_error("idx: bad image magic in " + images_path + " (got " +
                                 std::to_string(m) + ")");
    const std::uint32_t n = detail::read_be32(img, "image count");
    const std::uint32_t rows = detail::read_be32(img, "row count");
    const std::uint32_t cols = detail::read_be32(img, "column count");
    if (n == 0 || rows == 0 || cols == 0)
        throw std::runtime_error("idx: empty image file " + images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("idx: cannot open " + labels_path);
    if (auto m = detail::read_be32(lab, "label magic"); m != kIdxLabelsMagic)
        throw std::runtime_error("idx: bad label magic in " + labels_path + " (got " +
                                 std::to_string(m) + ")");
    if (auto ln = detail::read_be32(lab, "label count"); ln != n)
        throw std::runtime_error("idx: image/label count mismatch (" + std::to_string(n) + " vs " +
                                 std::to_string(ln) + ")");

    const std::size_t d = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> pixel_row(d);
    Dataset out;
    out.features.resize(static_cast<Index>(n), static_cast<Index>(d));
    out.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        img.read(reinterpret_cast<char*>(pixel_row.data()), static_cast<std::streamsize>(d));
        if (!img) throw std::runtime_error("idx: truncated pixel data in " + images_path);
        for (std::size_t j = 0; j < d; ++j)
            out.features(static_cast<Index>(i), static_cast<Index>(j)) = pixel_row[j] / 255.0;
        char y = 0;
        lab.read(&y, 1);
        if (!lab) throw std::runtime_error("idx: truncated label data in " + labels_path);
        out.labels[i] = static_cast<unsigned char>(y);
    }
    int max_label = 0;
    for (int y : out.labels) max_label = std::max(max_label, y);
    out.num_classes = std::max(num_classes_hint, max_label + 1);
    return out;
}

/// Writes a Dataset back to an IDX pair, quantizing features to bytes with
/// round(feature * 255) clamped to [0, 255]. rows*cols must equal dim().
inline void save_idx(const Dataset& data, const std::string& images_path,
                     const std::string& labels_path, std::uint32_t rows, std::uint32_t cols) {
    data.validate();
    if (static_cast<Index>(rows) * static_cast<Index>(cols) != data.dim())
        throw std::invalid_argument("idx: rows*cols does not match feature dimension");
    if (data.num_classes > 256)
        throw std::invalid_argument("idx: ubyte labels cannot store more than 256 classes");

    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("idx: cannot create " + images_path);
    detail::write_be32(img, kIdxImagesMagic);
    detail::write_be32(img, static_cast<std::uint32_t>(data.size()));
    detail::write_be32(img, rows);
    detail::write_be32(img, cols);
    std::vector<unsigned char> pixel_row(static_cast<std::size_t>(data.dim()));
    for (Index i = 0; i < data.size(); ++i) {
        for (Index j = 0; j < data.dim(); ++j) {
            double v = std::lround(data.features(i, j) * 255.0);
            pixel_row[static_cast<std::size_t>(j)] =
                static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
        }
        img.write(reinterpret_cast<const char*>(pixel_row.data()),
                  static_cast<std::streamsize>(pixel_row.size()));
    }
    if (!img) throw std::runtime_error("idx: write failed for " + images_path);

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("idx: cannot create " + labels_path);
    detail::write_be32(lab, kIdxLabelsMagic);
    detail::write_be32(lab, static_cast<std::uint32_t>(data.size()));
    for (int y : data.labels) {
        char b = static_cast<char>(static_cast<unsigned char>(y));
        lab.write(&b, 1);
    }
    if (!lab) throw std::runtime_error("idx: write failed for " + labels_path);
}

}  // namespace distillfed
