#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgn/types.hpp"

namespace sgn {

struct MnistDataset {
    Matrix images;            // count x 784, pixels scaled to [0, 1]
    std::vector<int> labels;  // count entries in 0..9

    Index size() const { return images.rows(); }
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) throw std::runtime_error("load_mnist_idx: truncated header in " + path);
    return (std::uint32_t(bytes[0]) << 24) | (std::uint32_t(bytes[1]) << 16) |
           (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
}

}  // namespace detail

// IDX ingestion: big-endian magic (0x803 images, 0x801 labels), dimension
// sizes, then raw bytes. Pixels are scaled from byte range by /255.
inline MnistDataset load_mnist_idx(const std::string& images_path,
                                   const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("load_mnist_idx: cannot open " + images_path);
    if (detail::read_be_u32(img, images_path) != 0x00000803u)
        throw std::runtime_error("load_mnist_idx: bad image magic in " + images_path);
    const std::uint32_t count = detail::read_be_u32(img, images_path);
    const std::uint32_t rows = detail::read_be_u32(img, images_path);
    const std::uint32_t cols = detail::read_be_u32(img, images_path);
    const std::size_t pixels = std::size_t(rows) * cols;

    std::vector<unsigned char> buffer(pixels);
    MnistDataset data;
    data.images.resize(count, pixels);
    for (std::uint32_t i = 0; i < count; ++i) {
        img.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(pixels));
        if (!img) throw std::runtime_error("load_mnist_idx: truncated image data in " + images_path);
        for (std::size_t j = 0; j < pixels; ++j)
            data.images(i, static_cast<Index>(j)) = buffer[j] / 255.0;
    }

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("load_mnist_idx: cannot open " + labels_path);
    if (detail::read_be_u32(lab, labels_path) != 0x00000801u)
        throw std::runtime_error("load_mnist_idx: bad label magic in " + labels_path);
    const std::uint32_t label_count = detail::read_be_u32(lab, labels_path);
    if (label_count != count)
        throw std::runtime_error("load_mnist_idx: image/label count mismatch");
    data.labels.resize(label_count);
    for (std::uint32_t i = 0; i < label_count; ++i) {
        char byte;
        lab.read(&byte, 1);
        if (!lab) throw std::runtime_error("load_mnist_idx: truncated label data in " + labels_path);
        data.labels[i] = static_cast<unsigned char>(byte);
    }
    return data;
}

inline Matrix one_hot(const std::vector<int>& labels, Index classes) {
    Matrix out = Matrix::Zero(static_cast<Index>(labels.size()), classes);
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes)
            throw std::invalid_argument("one_hot: label out of range");
        out(static_cast<Index>(i), labels[i]) = 1.0;
    }
    return out;
}

}  // namespace sgn
