#pragma once

// Self-contained Monte-Carlo fixtures for the three theoretical results:
// the forbidden-energy trace identity, the certified feature margin, and the
// block-energy tail bound.

#include "ccar/error.hpp"
#include "ccar/partition.hpp"
#include "ccar/regularizers.hpp"
#include "ccar/robustness.hpp"
#include "ccar/types.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace ccar {

struct TraceIdentityCell {
    int class_id = 0;
    double monte_carlo = 0.0; // mean of |O_c| * ccar_l2 over samples
    double analytic = 0.0;    // Tr(P_O Sigma_c) + ||P_O mu_c||^2
    double rel_error = 0.0;
};

struct TraceIdentityResult {
    std::vector<TraceIdentityCell> cells;
    double max_rel_error = 0.0;
    bool holds = false;
};

/// Class-conditional Gaussians with means on the active block (plus an
/// optional forbidden leak of norm `leak`) and random dense covariances.
inline TraceIdentityResult trace_identity_check(int feature_dim, int num_classes, long long samples_per_class,
                                                std::uint64_t seed, double tolerance = 0.02, double leak = 0.0) {
    const SubspacePartition p(feature_dim, num_classes);
    require(samples_per_class >= 1, Errc::InsufficientSamples, "need >= 1 sample per class");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Eigen::Index d = feature_dim;

    TraceIdentityResult out;
    for (int c = 0; c < num_classes; ++c) {
        Vector mu = Vector::Zero(d);
        for (int j = p.block_begin(c); j < p.block_end(c); ++j) mu[j] = 1.0 + std::abs(gauss(rng));
        if (leak > 0.0) {
            Vector off = Vector::Zero(d);
            for (Eigen::Index j = 0; j < d; ++j)
                if (p.is_forbidden(c, static_cast<int>(j))) off[j] = gauss(rng);
            mu += leak * off / off.norm();
        }
        Matrix a(d, d);
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = gauss(rng);
        const Matrix sigma = a * a.transpose() / static_cast<double>(d) + 0.1 * Matrix::Identity(d, d);
        const Matrix l = Eigen::LLT<Matrix>(sigma).matrixL();

        double analytic = 0.0;
        for (Eigen::Index j = 0; j < d; ++j)
            if (p.is_forbidden(c, static_cast<int>(j))) analytic += sigma(j, j) + mu[j] * mu[j];

        Matrix h(1, d);
        const Labels y{c};
        const double o = p.forbidden_size();
        double sum = 0.0;
        Vector z(d);
        for (long long s = 0; s < samples_per_class; ++s) {
            for (Eigen::Index j = 0; j < d; ++j) z[j] = gauss(rng);
            h.row(0) = (mu + l * z).transpose();
            sum += o * ccar_l2(h, y, p).loss;
        }
        TraceIdentityCell cell{c, sum / static_cast<double>(samples_per_class), analytic, 0.0};
        cell.rel_error = std::abs(cell.monte_carlo - cell.analytic) / std::abs(cell.analytic);
        out.max_rel_error = std::max(out.max_rel_error, cell.rel_error);
        out.cells.push_back(cell);
    }
    out.holds = out.max_rel_error < tolerance;
    return out;
}

struct CertifiedFixture {
    Matrix w; // C x D, row c supported on block c
    Vector h; // supported on block y
    int label = 0;
    double tau = 0.0;
};

/// Block-supported classifier rows and feature vector with zero bias.
inline CertifiedFixture make_certified_fixture(int feature_dim, int num_classes, int label, std::uint64_t seed) {
    const SubspacePartition p(feature_dim, num_classes);
    p.check_class(label);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    CertifiedFixture f;
    f.label = label;
    f.w = Matrix::Zero(num_classes, feature_dim);
    for (int c = 0; c < num_classes; ++c)
        for (int j = p.block_begin(c); j < p.block_end(c); ++j) f.w(c, j) = u(rng);
    f.h = Vector::Zero(feature_dim);
    for (int j = p.block_begin(label); j < p.block_end(label); ++j) f.h[j] = u(rng);
    f.tau = geometric_margin(f.w, f.h, label);
    return f;
}

struct CertifiedResult {
    double tau = 0.0;
    long long trials = 0;
    long long violations_inside = 0;  // at 0.99 tau, must be 0
    bool directed_flips = false;      // at 10 tau along (w_k - w_y)
    bool holds = false;
};

inline CertifiedResult certified_margin_check(int feature_dim, int num_classes, int label, long long trials,
                                              std::uint64_t seed) {
    const CertifiedFixture f = make_certified_fixture(feature_dim, num_classes, label, seed);
    CertifiedResult r;
    r.tau = f.tau;
    r.trials = trials;
    r.violations_inside = certified_check(f.w, f.h, label, trials, 0.99 * f.tau, mix_seed(seed, 1));
    const Vector d = directed_perturbation(f.w, f.h, label, 10.0 * f.tau);
    r.directed_flips = argmax_class(f.w, f.h + d) != label;
    r.holds = r.violations_inside == 0 && r.directed_flips;
    return r;
}

struct TailCell {
    LemmaBoundParams params;
    bool skipped = false; // tau <= sigma^2 / C
    TailCheck check;
};

/// Tail-bound grid over D x C x (tau as a multiple of sigma^2/C). Cells that
/// violate the precondition are reported as skipped.
inline std::vector<TailCell> tail_grid(const std::vector<int>& dims, const std::vector<int>& classes,
                                       const std::vector<double>& ratios, double sigma2, long long trials,
                                       std::uint64_t seed) {
    std::vector<TailCell> out;
    std::uint64_t stream = 0;
    for (int d : dims)
        for (int c : classes)
            for (double r : ratios) {
                TailCell cell;
                cell.params = LemmaBoundParams{d, c, sigma2, r * sigma2 / c};
                ++stream;
                if (!(cell.params.tau > sigma2 / c)) {
                    cell.skipped = true;
                } else {
                    cell.check = lemma_tail_check(cell.params, trials, mix_seed(seed, stream));
                }
                out.push_back(cell);
            }
    return out;
}

} // namespace ccar
