#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace ccar {

// Batches are stored one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }


/// Penultimate activations (one row per sample) with their labels.
struct FeatureBatch {
    Matrix h;
    Labels labels;

    std::size_t size() const { return labels.size(); }
    int dim() const { return static_cast<int>(h.cols()); }
};

/// splitmix64 finaliser; derives independent seeds for the RNG streams of a run.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

} // namespace ccar
