#pragma once

#include "ccar/error.hpp"
#include "ccar/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ccar {

/// Fixed assignment of feature indices to classes. Class c owns the
/// contiguous block [c*K, (c+1)*K); the trailing D mod C indices belong to
/// no class and are forbidden for every label.
class SubspacePartition {
public:
    SubspacePartition(int feature_dim, int num_classes) : d_(feature_dim), c_(num_classes) {
        require(num_classes >= 2, Errc::InvalidDimensions,
                "need at least 2 classes, got " + std::to_string(num_classes));
        require(feature_dim >= num_classes, Errc::InvalidDimensions,
                "feature dim " + std::to_string(feature_dim) + " < classes " +
                    std::to_string(num_classes));
        k_ = d_ / c_;
        owner_.assign(static_cast<std::size_t>(d_), -1);
        for (int j = 0; j < c_ * k_; ++j) owner_[static_cast<std::size_t>(j)] = j / k_;

        masks_.reserve(static_cast<std::size_t>(c_));
        for (int y = 0; y < c_; ++y) {
            std::vector<std::uint8_t> bits(static_cast<std::size_t>(d_), 1);
            for (int j = y * k_; j < (y + 1) * k_; ++j) bits[static_cast<std::size_t>(j)] = 0;
            masks_.push_back(std::move(bits));
        }
    }

    int feature_dim() const noexcept { return d_; }
    int num_classes() const noexcept { return c_; }
    int block_size() const noexcept { return k_; }
    int remainder_size() const noexcept { return d_ - c_ * k_; }
    /// |forbidden region| for any class.
    int forbidden_size() const noexcept { return d_ - k_; }

    int block_begin(int c) const { check_class(c); return c * k_; }
    int block_end(int c) const { check_class(c); return (c + 1) * k_; }

    std::vector<int> active_set(int c) const {
        check_class(c);
        std::vector<int> out;
        for (int j = c * k_; j < (c + 1) * k_; ++j) out.push_back(j);
        return out;
    }

    std::vector<int> remainder_set() const {
        std::vector<int> out;
        for (int j = c_ * k_; j < d_; ++j) out.push_back(j);
        return out;
    }

    /// Class owning index j, or -1 for remainder indices.
    int owner(int j) const { return owner_.at(static_cast<std::size_t>(j)); }

    bool is_forbidden(int c, int j) const {
        return masks_[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] != 0;
    }

    const std::vector<std::uint8_t>& mask_bits(int c) const {
        check_class(c);
        return masks_[static_cast<std::size_t>(c)];
    }

    void check_class(int c) const {
        require(c >= 0 && c < c_, Errc::ClassOutOfRange,
                "class " + std::to_string(c) + " outside [0," + std::to_string(c_) + ")");
    }

    friend bool operator==(const SubspacePartition& a, const SubspacePartition& b) {
        return a.d_ == b.d_ && a.c_ == b.c_;
    }

private:
    int d_;
    int c_;
    int k_ = 0;
    std::vector<int> owner_;
    std::vector<std::vector<std::uint8_t>> masks_;
};

struct ClassMask {
    int class_id = 0;
    std::vector<std::uint8_t> bits;

    int popcount() const {
        int n = 0;
        for (auto b : bits) n += b;
        return n;
    }
};

inline SubspacePartition build_partition(int feature_dim, int num_classes) {
    return SubspacePartition(feature_dim, num_classes);
}

inline ClassMask forbidden_mask(const SubspacePartition& p, int y) {
    return ClassMask{y, p.mask_bits(y)};
}

template <typename Vec>
Vector project(const Vec& h, const ClassMask& m) {
    require(static_cast<std::size_t>(h.size()) == m.bits.size(), Errc::LengthMismatch,
            "vector length " + std::to_string(h.size()) + " vs mask length " +
                std::to_string(m.bits.size()));
    Vector out(h.size());
    for (Eigen::Index j = 0; j < h.size(); ++j)
        out[j] = m.bits[static_cast<std::size_t>(j)] ? h[j] : 0.0;
    return out;
}

/// ||M(y) . h||^2 for a single row.
template <typename Row>
double forbidden_energy(const Row& h, const SubspacePartition& p, int y) {
    const auto& bits = p.mask_bits(y);
    double e = 0.0;
    for (Eigen::Index j = 0; j < h.size(); ++j)
        if (bits[static_cast<std::size_t>(j)]) e += h[j] * h[j];
    return e;
}

} // namespace ccar
