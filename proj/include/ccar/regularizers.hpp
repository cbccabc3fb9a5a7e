#pragma once

// Feature-space penalties evaluated on the penultimate activations. Each
// returns the batch-mean loss and its exact gradient w.r.t. the feature batch.

#include "ccar/error.hpp"
#include "ccar/partition.hpp"
#include "ccar/types.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

namespace ccar {

enum class RegularizerTag { CcarL2, L1, CosineMargin, EnergyRatio, OrthogonalProjection };

inline constexpr RegularizerTag kAllRegularizers[] = {
    RegularizerTag::L1, RegularizerTag::CosineMargin, RegularizerTag::EnergyRatio,
    RegularizerTag::OrthogonalProjection, RegularizerTag::CcarL2};

inline std::string_view regularizer_name(RegularizerTag t) {
    switch (t) {
    case RegularizerTag::CcarL2: return "ccar_l2";
    case RegularizerTag::L1: return "l1";
    case RegularizerTag::CosineMargin: return "cosine_margin";
    case RegularizerTag::EnergyRatio: return "energy_ratio";
    case RegularizerTag::OrthogonalProjection: return "orthogonal_projection";
    }
    return "?";
}

inline std::optional<RegularizerTag> parse_regularizer(std::string_view s) {
    for (auto t : kAllRegularizers)
        if (regularizer_name(t) == s) return t;
    return std::nullopt;
}

struct RegularizerKind {
    RegularizerTag tag = RegularizerTag::CcarL2;
    double margin = 0.2; // cosine_margin only
    double eps = 1e-8;   // energy_ratio only

    void validate() const {
        require(margin >= 0.0, Errc::Config, "cosine margin must be >= 0");
        require(eps > 0.0, Errc::Config, "energy-ratio eps must be > 0");
    }
};

struct RegLoss {
    double loss = 0.0;
    Matrix grad;
};

namespace detail {

inline void check_batch(const Matrix& h, const Labels& y, const SubspacePartition& p) {
    require(h.cols() == p.feature_dim(), Errc::ShapeMismatch,
            "feature width " + std::to_string(h.cols()) + " vs partition D " +
                std::to_string(p.feature_dim()));
    require(static_cast<std::size_t>(h.rows()) == y.size(), Errc::ShapeMismatch,
            "feature rows vs label count mismatch");
    for (int yi : y)
        require(yi >= 0 && yi < p.num_classes(), Errc::LabelOutOfRange,
                "label " + std::to_string(yi) + " outside [0," + std::to_string(p.num_classes()) + ")");
}

} // namespace detail

/// Mean over the batch of (1/|O_y|) * sum_{j in O_y} h_j^2.
inline RegLoss ccar_l2(const Matrix& h, const Labels& y, const SubspacePartition& p) {
    detail::check_batch(h, y, p);
    const Eigen::Index n = h.rows();
    RegLoss out{0.0, Matrix::Zero(n, h.cols())};
    if (n == 0) return out;
    const double inv_o = 1.0 / p.forbidden_size();
    const double nd = static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& bits = p.mask_bits(y[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
            if (!bits[static_cast<std::size_t>(j)]) continue;
            const double v = h(i, j);
            out.loss += v * v * inv_o;
            out.grad(i, j) = 2.0 * v * inv_o / nd;
        }
    }
    out.loss /= nd;
    return out;
}

/// Mean over the batch of sum_{j in O_y} |h_j|; subgradient 0 at 0.
inline RegLoss l1_penalty(const Matrix& h, const Labels& y, const SubspacePartition& p) {
    detail::check_batch(h, y, p);
    const Eigen::Index n = h.rows();
    RegLoss out{0.0, Matrix::Zero(n, h.cols())};
    if (n == 0) return out;
    const double nd = static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& bits = p.mask_bits(y[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
            if (!bits[static_cast<std::size_t>(j)]) continue;
            const double v = h(i, j);
            out.loss += std::abs(v);
            out.grad(i, j) = (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0)) / nd;
        }
    }
    out.loss /= nd;
    return out;
}

/// Mean over the batch of log(1 + ||h_off||^2 / (||h_aligned||^2 + eps)).
inline RegLoss energy_ratio(const Matrix& h, const Labels& y, const SubspacePartition& p, double eps = 1e-8) {
    detail::check_batch(h, y, p);
    require(eps > 0.0, Errc::Config, "energy-ratio eps must be > 0");
    const Eigen::Index n = h.rows();
    RegLoss out{0.0, Matrix::Zero(n, h.cols())};
    if (n == 0) return out;
    const double nd = static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& bits = p.mask_bits(y[static_cast<std::size_t>(i)]);
        double off = 0.0, aligned = 0.0;
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
            const double v2 = h(i, j) * h(i, j);
            (bits[static_cast<std::size_t>(j)] ? off : aligned) += v2;
        }
        const double den = aligned + eps;
        const double ratio = off / den;
        out.loss += std::log1p(ratio);
        const double outer = 1.0 / ((1.0 + ratio) * nd);
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
            const double v = h(i, j);
            out.grad(i, j) = bits[static_cast<std::size_t>(j)] ? outer * 2.0 * v / den
                                                               : -outer * 2.0 * v * off / (den * den);
        }
    }
    out.loss /= nd;
    return out;
}

/// Mean over the batch of ||(I - P_y) h||^2 with P_y the diagonal projector
/// onto the active block. Equals |O_y| times ccar_l2 sample-wise.
inline RegLoss orthogonal_projection(const Matrix& h, const Labels& y, const SubspacePartition& p) {
    detail::check_batch(h, y, p);
    const Eigen::Index n = h.rows();
    RegLoss out{0.0, Matrix::Zero(n, h.cols())};
    if (n == 0) return out;
    const double nd = static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& bits = p.mask_bits(y[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < h.cols(); ++j) {
            if (!bits[static_cast<std::size_t>(j)]) continue;
            const double v = h(i, j);
            out.loss += v * v;
            out.grad(i, j) = 2.0 * v / nd;
        }
    }
    out.loss /= nd;
    return out;
}

// ---------------------------------------------------------------------------
// Cosine margin against running class centroids

struct ClassCentroids {
    Matrix mu; // C x D
    double momentum = 0.9;
    std::vector<long long> counts;

    ClassCentroids() = default;
    ClassCentroids(int num_classes, int dim, double m = 0.9)
        : mu(Matrix::Zero(num_classes, dim)), momentum(m), counts(static_cast<std::size_t>(num_classes), 0) {
        require(m >= 0.0 && m < 1.0, Errc::Config, "centroid momentum must be in [0,1)");
    }

    bool initialized(int c) const { return counts.at(static_cast<std::size_t>(c)) > 0; }
};

/// EMA update per class present in the batch; the first observation of a
/// class copies the batch mean.
inline void update_centroids(ClassCentroids& cent, const Matrix& h, const Labels& y) {
    const auto c = cent.mu.rows();
    require(h.cols() == cent.mu.cols(), Errc::ShapeMismatch, "centroid width mismatch");
    require(static_cast<std::size_t>(h.rows()) == y.size(), Errc::ShapeMismatch, "feature rows vs labels");
    Matrix sums = Matrix::Zero(c, h.cols());
    std::vector<long long> n(static_cast<std::size_t>(c), 0);
    for (Eigen::Index i = 0; i < h.rows(); ++i) {
        const int yi = y[static_cast<std::size_t>(i)];
        require(yi >= 0 && yi < c, Errc::LabelOutOfRange, "label out of range in centroid update");
        sums.row(yi) += h.row(i);
        ++n[static_cast<std::size_t>(yi)];
    }
    for (Eigen::Index k = 0; k < c; ++k) {
        const auto nk = n[static_cast<std::size_t>(k)];
        if (nk == 0) continue;
        const auto mean = sums.row(k) / static_cast<double>(nk);
        if (cent.counts[static_cast<std::size_t>(k)] == 0)
            cent.mu.row(k) = mean;
        else
            cent.mu.row(k) = cent.momentum * cent.mu.row(k) + (1.0 - cent.momentum) * mean;
        cent.counts[static_cast<std::size_t>(k)] += nk;
    }
}

inline constexpr double kNormFloor = 1e-12;

/// Mean over the batch of max(0, max_{k!=y} cos(h, mu_k) - cos(h, mu_y) + margin).
/// Centroids are constants for the gradient. Rows with norm <= 1e-12 raise
/// DegenerateNorm unless skip_degenerate_rows is set, in which case they
/// contribute zero loss and zero gradient.
inline RegLoss cosine_margin(const Matrix& h, const Labels& y, const ClassCentroids& cent, double margin,
                             bool skip_degenerate_rows = false) {
    const Eigen::Index n = h.rows();
    const Eigen::Index c = cent.mu.rows();
    require(h.cols() == cent.mu.cols(), Errc::ShapeMismatch, "feature width vs centroid width");
    require(static_cast<std::size_t>(n) == y.size(), Errc::ShapeMismatch, "feature rows vs labels");
    require(c >= 2, Errc::InvalidDimensions, "cosine margin needs >= 2 classes");
    Vector mu_norm(c);
    for (Eigen::Index k = 0; k < c; ++k) {
        mu_norm[k] = cent.mu.row(k).norm();
        require(mu_norm[k] > kNormFloor, Errc::DegenerateNorm, "centroid " + std::to_string(k) + " has ~zero norm");
    }
    RegLoss out{0.0, Matrix::Zero(n, h.cols())};
    if (n == 0) return out;
    const double nd = static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int yi = y[static_cast<std::size_t>(i)];
        require(yi >= 0 && yi < c, Errc::LabelOutOfRange, "label out of range");
        const auto row = h.row(i);
        const double hn = row.norm();
        if (hn <= kNormFloor) {
            require(skip_degenerate_rows, Errc::DegenerateNorm, "feature row " + std::to_string(i) + " has ~zero norm");
            continue;
        }
        auto cosine = [&](Eigen::Index k) { return row.dot(cent.mu.row(k)) / (hn * mu_norm[k]); };
        const double cy = cosine(yi);
        Eigen::Index best = -1;
        double cbest = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < c; ++k) {
            if (k == yi) continue;
            const double ck = cosine(k);
            if (ck > cbest) { cbest = ck; best = k; }
        }
        const double v = cbest - cy + margin;
        if (v <= 0.0) continue;
        out.loss += v;
        // d cos(h,mu)/dh = mu/(|h||mu|) - cos * h/|h|^2
        auto dcos = [&](Eigen::Index k, double ck) -> Eigen::RowVectorXd {
            return cent.mu.row(k) / (hn * mu_norm[k]) - ck * row / (hn * hn);
        };
        out.grad.row(i) = (dcos(best, cbest) - dcos(yi, cy)) / nd;
    }
    out.loss /= nd;
    return out;
}

/// Dispatch for the training loop. Centroids are required only for the
/// cosine-margin variant.
inline RegLoss evaluate_regularizer(const RegularizerKind& kind, const Matrix& h, const Labels& y,
                                    const SubspacePartition& p, const ClassCentroids* cent = nullptr,
                                    bool skip_degenerate_rows = false) {
    switch (kind.tag) {
    case RegularizerTag::CcarL2: return ccar_l2(h, y, p);
    case RegularizerTag::L1: return l1_penalty(h, y, p);
    case RegularizerTag::EnergyRatio: return energy_ratio(h, y, p, kind.eps);
    case RegularizerTag::OrthogonalProjection: return orthogonal_projection(h, y, p);
    case RegularizerTag::CosineMargin:
        require(cent != nullptr, Errc::Config, "cosine_margin needs class centroids");
        detail::check_batch(h, y, p);
        return cosine_margin(h, y, *cent, kind.margin, skip_degenerate_rows);
    }
    return {};
}

} // namespace ccar
