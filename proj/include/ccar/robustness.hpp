#pragma once

// Input-space attacks, the certified feature-space margin, and Monte-Carlo
// checks of the block-energy tail bound.

#include "ccar/dataset.hpp"
#include "ccar/error.hpp"
#include "ccar/nn.hpp"
#include "ccar/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace ccar {

enum class AttackKind { Gaussian, Fgsm, Pgd };

inline std::string_view attack_name(AttackKind k) {
    switch (k) {
    case AttackKind::Gaussian: return "gaussian";
    case AttackKind::Fgsm: return "fgsm";
    case AttackKind::Pgd: return "pgd";
    }
    return "?";
}

inline std::optional<AttackKind> parse_attack(std::string_view s) {
    if (s == "gaussian") return AttackKind::Gaussian;
    if (s == "fgsm") return AttackKind::Fgsm;
    if (s == "pgd") return AttackKind::Pgd;
    return std::nullopt;
}

struct AttackSpec {
    AttackKind kind = AttackKind::Fgsm;
    double epsilon = 8.0 / 255.0; // L-inf budget, or sigma for gaussian
    int steps = 20;               // pgd only
    double alpha = 2.0 / 255.0;   // pgd only
    int trials = 1;               // gaussian only

    void validate() const {
        require(epsilon >= 0.0, Errc::Config, "attack epsilon must be >= 0");
        if (kind == AttackKind::Pgd) {
            require(steps >= 1, Errc::Config, "pgd steps must be >= 1");
            require(alpha >= 0.0 && alpha <= epsilon && (alpha > 0.0 || epsilon == 0.0), Errc::Config,
                    "pgd alpha must be in (0, epsilon]");
        }
        if (kind == AttackKind::Gaussian) require(trials >= 1, Errc::Config, "gaussian trials must be >= 1");
    }
};

/// PGD with step alpha = epsilon/4.
inline AttackSpec pgd_spec(double epsilon, int steps = 20) {
    return AttackSpec{AttackKind::Pgd, epsilon, steps, epsilon / 4.0, 1};
}

namespace detail {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline void clamp_rows(Matrix& x, const ClampBox& box) {
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = std::clamp(x(i, j), box.lo[j], box.hi[j]);
}

inline void check_box(const Matrix& x, const ClampBox& box) {
    require(box.lo.size() == x.cols() && box.hi.size() == x.cols(), Errc::ShapeMismatch,
            "clamp box width does not match inputs");
}

} // namespace detail

/// x_adv = clamp(x + eps * sign(grad_x CE)), sign(0) = 0.
inline Matrix fgsm(const Model& model, const Matrix& x, const Labels& y, double epsilon, const ClampBox& box) {
    require(epsilon >= 0.0, Errc::Config, "epsilon must be >= 0");
    detail::check_box(x, box);
    const Matrix g = input_gradient(model, x, y);
    require(g.allFinite(), Errc::NonFiniteGradient, "input gradient contains NaN/Inf");
    Matrix adv = x + epsilon * g.unaryExpr([](double v) { return detail::sign(v); });
    detail::clamp_rows(adv, box);
    return adv;
}

/// Coordinate-wise projection onto the L-inf ball of radius eps around x0.
inline void project_linf(Matrix& x, const Matrix& x0, double epsilon) {
    x = x.array().max(x0.array() - epsilon).min(x0.array() + epsilon).matrix();
}

/// Iterated signed-gradient ascent with projection onto the eps-ball and the
/// clamp box. Starts from a uniform point in the ball unless random_start is off.
inline Matrix pgd(const Model& model, const Matrix& x0, const Labels& y, double epsilon, double alpha, int steps,
                  const ClampBox& box, std::uint64_t seed, bool random_start = true) {
    require(epsilon >= 0.0 && alpha >= 0.0 && alpha <= epsilon, Errc::Config, "pgd needs 0 <= alpha <= epsilon");
    require(steps >= 1, Errc::Config, "pgd steps must be >= 1");
    detail::check_box(x0, box);
    Matrix x = x0;
    if (random_start && epsilon > 0.0) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-epsilon, epsilon);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += u(rng);
        detail::clamp_rows(x, box);
    }
    for (int s = 0; s < steps; ++s) {
        const Matrix g = input_gradient(model, x, y);
        require(g.allFinite(), Errc::NonFiniteGradient, "input gradient contains NaN/Inf");
        x += alpha * g.unaryExpr([](double v) { return detail::sign(v); });
        detail::clamp_rows(x, box);
        project_linf(x, x0, epsilon);
    }
    return x;
}

/// Accuracy under additive N(0, sigma^2 I) input noise, averaged over trials.
inline double gaussian_eval(const Model& model, const Matrix& x, const Labels& y, double sigma, int trials,
                            std::uint64_t seed) {
    require(sigma >= 0.0, Errc::Config, "sigma must be >= 0");
    require(trials >= 1, Errc::Config, "trials must be >= 1");
    if (sigma == 0.0) return accuracy(model, x, y);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    double total = 0.0;
    for (int t = 0; t < trials; ++t) {
        Matrix noisy = x;
        for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += gauss(rng);
        total += accuracy(model, noisy, y);
    }
    return total / trials;
}

struct AttackResult {
    AttackSpec spec;
    double clean_accuracy = 0.0;
    double adversarial_accuracy = 0.0;
    std::size_t n_samples = 0;
    std::uint64_t seed = 0;
};

inline AttackResult run_attack(const Model& model, const Matrix& x, const Labels& y, const AttackSpec& spec,
                               const ClampBox& box, std::uint64_t seed) {
    spec.validate();
    AttackResult r{spec, accuracy(model, x, y), 0.0, y.size(), seed};
    switch (spec.kind) {
    case AttackKind::Gaussian:
        r.adversarial_accuracy = gaussian_eval(model, x, y, spec.epsilon, spec.trials, seed);
        break;
    case AttackKind::Fgsm:
        r.adversarial_accuracy = accuracy(model, fgsm(model, x, y, spec.epsilon, box), y);
        break;
    case AttackKind::Pgd:
        r.adversarial_accuracy =
            accuracy(model, pgd(model, x, y, spec.epsilon, spec.alpha, spec.steps, box, seed), y);
        break;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Certified margin in feature space (bias-free linear head)

/// tau = min_{k != y} (w_y . h) / ||w_y - w_k||.
inline double geometric_margin(const Matrix& w, const Vector& h, int y) {
    require(w.rows() >= 2, Errc::InvalidDimensions, "margin needs >= 2 classes");
    require(w.cols() == h.size(), Errc::ShapeMismatch, "weight width vs feature length");
    require(y >= 0 && y < w.rows(), Errc::ClassOutOfRange, "label out of range");
    const double signal = w.row(y).dot(h);
    double tau = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < w.rows(); ++k) {
        if (k == y) continue;
        const double gap = (w.row(y) - w.row(k)).norm();
        require(gap > 1e-12, Errc::DegenerateWeights, "classifier rows " + std::to_string(y) + " and " +
                                                          std::to_string(k) + " coincide");
        tau = std::min(tau, signal / gap);
    }
    return tau;
}

inline int argmax_class(const Matrix& w, const Vector& h) {
    Eigen::Index arg = 0;
    (w * h).maxCoeff(&arg);
    return static_cast<int>(arg);
}

/// Counts trials where a random perturbation of norm delta_norm flips
/// argmax(W(h + delta)) away from y. Directions are uniform on the sphere.
inline long long certified_check(const Matrix& w, const Vector& h, int y, long long trials, double delta_norm,
                                 std::uint64_t seed) {
    require(w.cols() == h.size(), Errc::ShapeMismatch, "weight width vs feature length");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector d(h.size());
    long long violations = 0;
    for (long long t = 0; t < trials; ++t) {
        double nrm = 0.0;
        do {
            for (Eigen::Index j = 0; j < d.size(); ++j) d[j] = gauss(rng);
            nrm = d.norm();
        } while (nrm < 1e-12);
        violations += argmax_class(w, h + (delta_norm / nrm) * d) != y;
    }
    return violations;
}

/// Perturbation of length `delta_norm` along (w_k - w_y) for the class k
/// attaining the margin.
inline Vector directed_perturbation(const Matrix& w, const Vector& h, int y, double delta_norm) {
    const double signal = w.row(y).dot(h);
    Eigen::Index best = -1;
    double tau = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < w.rows(); ++k) {
        if (k == y) continue;
        const double t = signal / (w.row(y) - w.row(k)).norm();
        if (t < tau) { tau = t; best = k; }
    }
    const Vector dir = (w.row(best) - w.row(y)).transpose();
    return delta_norm * dir / dir.norm();
}

// ---------------------------------------------------------------------------
// Tail bound for Gaussian energy landing in one class block

struct LemmaBoundParams {
    int feature_dim = 100;
    int num_classes = 10;
    double sigma2 = 1.0;
    double tau = 0.5;
};

/// A = (1/2C) (r - 1 - ln r), r = C tau / sigma^2.
inline double rate_constant(int num_classes, double tau, double sigma2) {
    require(num_classes >= 1 && sigma2 > 0.0 && tau > 0.0, Errc::Config, "rate constant needs C>=1, sigma2>0, tau>0");
    const double r = num_classes * tau / sigma2;
    return (r - 1.0 - std::log(r)) / (2.0 * num_classes);
}

inline double rate_constant(const LemmaBoundParams& p) { return rate_constant(p.num_classes, p.tau, p.sigma2); }

struct TailCheck {
    double empirical = 0.0;
    double bound = 0.0;
    double stderr_mc = 0.0;
    long long trials = 0;
    bool holds = false;
};

inline constexpr long long kMinTailTrials = 10000;

/// Samples delta ~ N(0, sigma^2/D I_D) and estimates P(||delta_block||^2 >= tau)
/// for one block of size D/C; compares against exp(-D A) + 3 stderr.
inline TailCheck lemma_tail_check(const LemmaBoundParams& p, long long trials, std::uint64_t seed) {
    require(trials >= kMinTailTrials, Errc::MinTrials,
            "tail check needs >= " + std::to_string(kMinTailTrials) + " trials, got " + std::to_string(trials));
    require(p.num_classes >= 1 && p.feature_dim >= p.num_classes && p.sigma2 > 0.0, Errc::Config,
            "invalid tail-bound parameters");
    require(p.tau > p.sigma2 / p.num_classes, Errc::ConditionViolated,
            "tau must exceed sigma^2/C (tau=" + std::to_string(p.tau) + ")");
    const int k = p.feature_dim / p.num_classes;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(p.sigma2 / p.feature_dim));
    long long hits = 0;
    for (long long t = 0; t < trials; ++t) {
        double e = 0.0;
        for (int j = 0; j < k; ++j) {
            const double v = gauss(rng);
            e += v * v;
        }
        hits += e >= p.tau;
    }
    TailCheck r;
    r.trials = trials;
    r.empirical = static_cast<double>(hits) / static_cast<double>(trials);
    r.bound = std::exp(-p.feature_dim * rate_constant(p));
    r.stderr_mc = std::sqrt(r.empirical * (1.0 - r.empirical) / static_cast<double>(trials));
    r.holds = r.empirical <= r.bound + 3.0 * r.stderr_mc;
    return r;
}

} // namespace ccar
