#pragma once

#include "ccar/error.hpp"
#include "ccar/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace ccar {

enum class Split : std::uint8_t { Train = 0, Test = 1 };

struct Dataset {
    Matrix inputs;
    Labels labels;       // possibly corrupted training labels
    Labels clean_labels; // ground truth, never modified after creation
    std::vector<Split> split;
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }
    int input_dim() const { return static_cast<int>(inputs.cols()); }

    std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < split.size(); ++i)
            if (split[i] == s) out.push_back(i);
        return out;
    }

    /// Rows of one split, with both label vectors carried along.
    Dataset subset(Split s) const {
        const auto idx = indices(s);
        Dataset d;
        d.num_classes = num_classes;
        d.inputs.resize(static_cast<Eigen::Index>(idx.size()), inputs.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            d.inputs.row(static_cast<Eigen::Index>(r)) = inputs.row(static_cast<Eigen::Index>(idx[r]));
            d.labels.push_back(labels[idx[r]]);
            d.clean_labels.push_back(clean_labels[idx[r]]);
            d.split.push_back(s);
        }
        return d;
    }

    void validate() const {
        require(inputs.rows() == static_cast<Eigen::Index>(labels.size()) &&
                    labels.size() == clean_labels.size() && labels.size() == split.size(),
                Errc::ShapeMismatch, "dataset field lengths disagree");
        require(inputs.allFinite(), Errc::NonFiniteInput, "dataset inputs contain NaN/Inf");
        for (std::size_t i = 0; i < labels.size(); ++i)
            require(labels[i] >= 0 && labels[i] < num_classes && clean_labels[i] >= 0 &&
                        clean_labels[i] < num_classes,
                    Errc::LabelRangeError, "label outside [0," + std::to_string(num_classes) + ")");
    }
};

/// Per-dimension [min, max] of a matrix's rows.
struct ClampBox {
    Vector lo;
    Vector hi;
};

inline ClampBox data_range(const Matrix& x) {
    return {x.colwise().minCoeff().transpose(), x.colwise().maxCoeff().transpose()};
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian blobs

struct BlobSpec {
    int num_classes = 10;
    int input_dim = 32;
    int n_per_class = 500;
    double separation = 3.0;
    double within_sigma = 1.0;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
};

/// Class means uniform on the sphere of radius `separation`, isotropic
/// Gaussian samples around them, stratified train/test split per class.
inline Dataset generate_blobs(const BlobSpec& spec) {
    require(spec.num_classes >= 2 && spec.input_dim >= 1 && spec.n_per_class >= 1, Errc::InvalidDimensions,
            "blob dimensions must be positive (>= 2 classes)");
    require(spec.separation >= 0.0, Errc::Config, "separation must be >= 0");
    require(spec.within_sigma > 0.0, Errc::Config, "within_sigma must be > 0");
    require(spec.train_fraction > 0.0 && spec.train_fraction < 1.0, Errc::Config,
            "train fraction must be in (0,1)");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Matrix means(spec.num_classes, spec.input_dim);
    for (int c = 0; c < spec.num_classes; ++c) {
        double norm = 0.0;
        do {
            for (int j = 0; j < spec.input_dim; ++j) means(c, j) = gauss(rng);
            norm = means.row(c).norm();
        } while (norm < 1e-12);
        means.row(c) *= spec.separation / norm;
    }

    const int n = spec.num_classes * spec.n_per_class;
    Dataset d;
    d.num_classes = spec.num_classes;
    d.inputs.resize(n, spec.input_dim);
    d.labels.resize(static_cast<std::size_t>(n));
    d.split.resize(static_cast<std::size_t>(n));
    const int n_train = std::clamp(static_cast<int>(std::lround(spec.train_fraction * spec.n_per_class)), 1,
                                   std::max(1, spec.n_per_class - 1));
    std::vector<int> order(static_cast<std::size_t>(spec.n_per_class));
    int row = 0;
    for (int c = 0; c < spec.num_classes; ++c) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (int s = 0; s < spec.n_per_class; ++s, ++row) {
            for (int j = 0; j < spec.input_dim; ++j)
                d.inputs(row, j) = means(c, j) + spec.within_sigma * gauss(rng);
            d.labels[static_cast<std::size_t>(row)] = c;
            const bool train = spec.n_per_class == 1 || order[static_cast<std::size_t>(s)] < n_train;
            d.split[static_cast<std::size_t>(row)] = train ? Split::Train : Split::Test;
        }
    }
    d.clean_labels = d.labels;
    return d;
}

// ---------------------------------------------------------------------------
// IDX (MNIST-style) files

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), Errc::Io, "cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
    require(off + 4 <= b.size(), Errc::TruncatedFile, path + ": header truncated");
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

} // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an unsigned-byte image/label IDX pair. Pixels scale to [0,1],
/// images flatten row-major. limit <= 0 reads every record. All records are
/// tagged as `split`.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path, long long limit = 0,
                        int num_classes = 10, Split split = Split::Train) {
    const auto img = detail::read_file(images_path);
    const auto lab = detail::read_file(labels_path);

    require(detail::read_be32(img, 0, images_path) == kIdxImagesMagic, Errc::BadMagic,
            images_path + ": not an IDX ubyte image file");
    require(detail::read_be32(lab, 0, labels_path) == kIdxLabelsMagic, Errc::BadMagic,
            labels_path + ": not an IDX ubyte label file");

    const std::uint64_t n_img = detail::read_be32(img, 4, images_path);
    const std::uint64_t rows = detail::read_be32(img, 8, images_path);
    const std::uint64_t cols = detail::read_be32(img, 12, images_path);
    const std::uint64_t n_lab = detail::read_be32(lab, 4, labels_path);
    require(n_img == n_lab, Errc::ShapeMismatch, "image and label counts differ");

    std::uint64_t n = n_img;
    if (limit > 0) n = std::min<std::uint64_t>(n, static_cast<std::uint64_t>(limit));
    const std::uint64_t dim = rows * cols;
    require(16 + n * dim <= img.size(), Errc::TruncatedFile, images_path + ": pixel data truncated");
    require(8 + n <= lab.size(), Errc::TruncatedFile, labels_path + ": label data truncated");

    Dataset d;
    d.num_classes = num_classes;
    d.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::uint64_t i = 0; i < n; ++i)
        for (std::uint64_t j = 0; j < dim; ++j)
            d.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = img[16 + i * dim + j] / 255.0;
    for (std::uint64_t i = 0; i < n; ++i) {
        const int y = lab[8 + i];
        require(y < num_classes, Errc::LabelRangeError,
                labels_path + ": label " + std::to_string(y) + " >= " + std::to_string(num_classes));
        d.labels.push_back(y);
    }
    d.clean_labels = d.labels;
    d.split.assign(static_cast<std::size_t>(n), split);
    return d;
}

/// Concatenates two datasets with the same width and class count.
inline Dataset concat(const Dataset& a, const Dataset& b) {
    require(a.inputs.cols() == b.inputs.cols() && a.num_classes == b.num_classes, Errc::ShapeMismatch,
            "cannot concatenate datasets of different shapes");
    Dataset d;
    d.num_classes = a.num_classes;
    d.inputs.resize(a.inputs.rows() + b.inputs.rows(), a.inputs.cols());
    d.inputs.topRows(a.inputs.rows()) = a.inputs;
    d.inputs.bottomRows(b.inputs.rows()) = b.inputs;
    for (const Dataset* s : {&a, &b}) {
        d.labels.insert(d.labels.end(), s->labels.begin(), s->labels.end());
        d.clean_labels.insert(d.clean_labels.end(), s->clean_labels.begin(), s->clean_labels.end());
        d.split.insert(d.split.end(), s->split.begin(), s->split.end());
    }
    return d;
}

} // namespace ccar
