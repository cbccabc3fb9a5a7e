#pragma once

// Geometry diagnostics over a batch of penultimate features.

#include "ccar/error.hpp"
#include "ccar/partition.hpp"
#include "ccar/types.hpp"

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace ccar {

inline constexpr double kInactiveThreshold = 1e-5;
inline constexpr double kDeadVariance = 1e-12;

inline void check_feature_batch(const FeatureBatch& fb) {
    require(static_cast<std::size_t>(fb.h.rows()) == fb.labels.size(), Errc::ShapeMismatch,
            "feature rows vs label count mismatch");
    require(fb.h.allFinite(), Errc::NonFiniteInput, "feature batch contains NaN/Inf");
}

/// Mean fraction of entries with |h| < 1e-5.
inline double feature_sparsity(const FeatureBatch& fb) {
    check_feature_batch(fb);
    if (fb.h.size() == 0) return 0.0;
    const auto inactive = (fb.h.array().abs() < kInactiveThreshold).count();
    return static_cast<double>(inactive) / static_cast<double>(fb.h.size());
}

/// Per-sample count of entries with |h| >= 1e-5.
inline std::vector<int> activated_dims(const FeatureBatch& fb) {
    check_feature_batch(fb);
    std::vector<int> out(static_cast<std::size_t>(fb.h.rows()));
    for (Eigen::Index i = 0; i < fb.h.rows(); ++i)
        out[static_cast<std::size_t>(i)] =
            static_cast<int>((fb.h.row(i).array().abs() >= kInactiveThreshold).count());
    return out;
}

/// Population variance per column.
inline Vector column_variance(const Matrix& h) {
    const auto n = static_cast<double>(h.rows());
    const Eigen::RowVectorXd mean = h.colwise().mean();
    return ((h.rowwise() - mean).array().square().colwise().sum() / n).transpose();
}

inline std::vector<int> live_dimensions(const Matrix& h) {
    std::vector<int> live;
    if (h.rows() == 0) return live;
    const Vector var = column_variance(h);
    for (Eigen::Index j = 0; j < var.size(); ++j)
        if (var[j] > kDeadVariance) live.push_back(static_cast<int>(j));
    return live;
}

/// Mean over live, class-owned neurons of the fraction of that neuron's
/// top-k activating samples whose label owns the neuron. Ties in activation
/// break by ascending sample index.
inline double class_consistency_rate(const FeatureBatch& fb, const SubspacePartition& p, int top_k = 10) {
    check_feature_batch(fb);
    require(fb.h.cols() == p.feature_dim(), Errc::ShapeMismatch, "feature width vs partition D");
    require(top_k >= 1 && fb.h.rows() >= top_k, Errc::InsufficientSamples,
            "need at least " + std::to_string(top_k) + " samples, have " + std::to_string(fb.h.rows()));
    const auto live = live_dimensions(fb.h);
    std::vector<std::size_t> order(static_cast<std::size_t>(fb.h.rows()));
    double total = 0.0;
    int counted = 0;
    for (int j : live) {
        const int owner = p.owner(j);
        if (owner < 0) continue;
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::partial_sort(order.begin(), order.begin() + top_k, order.end(), [&](std::size_t a, std::size_t b) {
            const double va = fb.h(static_cast<Eigen::Index>(a), j);
            const double vb = fb.h(static_cast<Eigen::Index>(b), j);
            return va != vb ? va > vb : a < b;
        });
        int hits = 0;
        for (int r = 0; r < top_k; ++r) hits += fb.labels[order[static_cast<std::size_t>(r)]] == owner;
        total += static_cast<double>(hits) / top_k;
        ++counted;
    }
    require(counted > 0, Errc::NoLiveNeurons, "no live class-owned neurons");
    return total / counted;
}

struct Scatter {
    double trace_between = 0.0;
    double trace_within = 0.0;
};

/// Traces of the prior-weighted between-class and within-class scatter
/// (population covariances).
inline Scatter scatter_traces(const FeatureBatch& fb) {
    check_feature_batch(fb);
    const auto n = static_cast<double>(fb.h.rows());
    std::map<int, std::vector<Eigen::Index>> by_class;
    for (Eigen::Index i = 0; i < fb.h.rows(); ++i) by_class[fb.labels[static_cast<std::size_t>(i)]].push_back(i);
    const Eigen::RowVectorXd mu = fb.h.colwise().mean();
    Scatter s;
    for (const auto& [c, rows] : by_class) {
        const auto nc = static_cast<double>(rows.size());
        Eigen::RowVectorXd mc = Eigen::RowVectorXd::Zero(fb.h.cols());
        for (auto i : rows) mc += fb.h.row(i);
        mc /= nc;
        s.trace_between += (nc / n) * (mc - mu).squaredNorm();
        double within = 0.0;
        for (auto i : rows) within += (fb.h.row(i) - mc).squaredNorm();
        s.trace_within += (nc / n) * (within / nc);
    }
    return s;
}

/// Tr(S_b) / Tr(S_w).
inline double fisher_ratio(const FeatureBatch& fb) {
    check_feature_batch(fb);
    std::vector<int> classes(fb.labels);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    require(classes.size() >= 2, Errc::SingleClass, "fisher ratio needs >= 2 classes present");
    const Scatter s = scatter_traces(fb);
    require(s.trace_within > 1e-12, Errc::DegenerateScatter, "within-class scatter trace ~ 0");
    return s.trace_between / s.trace_within;
}

struct CorrelationResult {
    Matrix matrix;         // |cosine| between live feature columns
    std::vector<int> live; // feature index of each row/column, in block order
};

/// Absolute cosine similarity between live feature columns. Columns are
/// ordered by owning class block (contiguous blocks make that index order,
/// with remainder dimensions last).
inline CorrelationResult correlation_matrix(const FeatureBatch& fb) {
    check_feature_batch(fb);
    CorrelationResult out;
    out.live = live_dimensions(fb.h);
    require(!out.live.empty(), Errc::AllDead, "every feature dimension has zero variance");
    const auto m = static_cast<Eigen::Index>(out.live.size());
    Vector norms(m);
    for (Eigen::Index a = 0; a < m; ++a) norms[a] = fb.h.col(out.live[static_cast<std::size_t>(a)]).norm();
    out.matrix.resize(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
        out.matrix(a, a) = 1.0;
        for (Eigen::Index b = a + 1; b < m; ++b) {
            const double dot = fb.h.col(out.live[static_cast<std::size_t>(a)])
                                   .dot(fb.h.col(out.live[static_cast<std::size_t>(b)]));
            const double v = std::min(1.0, std::abs(dot) / (norms[a] * norms[b]));
            out.matrix(a, b) = v;
            out.matrix(b, a) = v;
        }
    }
    return out;
}

struct Spectrum {
    std::vector<double> eigenvalues; // covariance eigenvalues, descending
    std::vector<double> ea_values;   // per-dimension mean activation, descending
};

/// Top-k covariance eigenvalues (sample covariance, N-1) and top-k mean
/// activations.
inline Spectrum spectrum_stats(const FeatureBatch& fb, int top_k = 50) {
    check_feature_batch(fb);
    require(fb.h.rows() >= 2, Errc::InsufficientSamples, "spectrum needs >= 2 samples");
    const Eigen::RowVectorXd mean = fb.h.colwise().mean();
    const Matrix centered = fb.h.rowwise() - mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(fb.h.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    Spectrum s;
    const Vector ev = es.eigenvalues();
    for (Eigen::Index i = ev.size(); i-- > 0;) s.eigenvalues.push_back(ev[i]);
    for (Eigen::Index j = 0; j < mean.size(); ++j) s.ea_values.push_back(mean[j]);
    std::sort(s.ea_values.begin(), s.ea_values.end(), std::greater<>());
    const auto k = static_cast<std::size_t>(std::max(0, top_k));
    if (s.eigenvalues.size() > k) s.eigenvalues.resize(k);
    if (s.ea_values.size() > k) s.ea_values.resize(k);
    return s;
}

/// Mean distance to the class mean, keyed by class id.
inline std::map<int, double> cluster_radii(const FeatureBatch& fb) {
    check_feature_batch(fb);
    std::map<int, std::vector<Eigen::Index>> by_class;
    for (Eigen::Index i = 0; i < fb.h.rows(); ++i) by_class[fb.labels[static_cast<std::size_t>(i)]].push_back(i);
    std::map<int, double> out;
    for (const auto& [c, rows] : by_class) {
        Eigen::RowVectorXd mc = Eigen::RowVectorXd::Zero(fb.h.cols());
        for (auto i : rows) mc += fb.h.row(i);
        mc /= static_cast<double>(rows.size());
        double r = 0.0;
        for (auto i : rows) r += (fb.h.row(i) - mc).norm();
        out[c] = r / static_cast<double>(rows.size());
    }
    return out;
}

/// Mean ||M(y).h||^2 over the batch.
inline double mean_forbidden_energy(const FeatureBatch& fb, const SubspacePartition& p) {
    check_feature_batch(fb);
    if (fb.h.rows() == 0) return 0.0;
    double e = 0.0;
    for (Eigen::Index i = 0; i < fb.h.rows(); ++i) e += forbidden_energy(fb.h.row(i), p, fb.labels[static_cast<std::size_t>(i)]);
    return e / static_cast<double>(fb.h.rows());
}

struct DiagnosticsOptions {
    int ccr_top_k = 10;
    int spectrum_top_k = 50;
};

struct DiagnosticsReport {
    double sparsity = 0.0;
    double ccr = 0.0;
    double fisher_ratio = 0.0;
    CorrelationResult correlation;
    std::vector<int> activated_dims;
    double mean_activated_dims = 0.0;
    Spectrum spectrum;
    std::map<int, double> cluster_radii;
    Scatter scatter;
    double forbidden_energy = 0.0;
};

inline DiagnosticsReport run_diagnostics(const FeatureBatch& fb, const SubspacePartition& p,
                                         const DiagnosticsOptions& opt = {}) {
    DiagnosticsReport r;
    r.sparsity = feature_sparsity(fb);
    r.ccr = class_consistency_rate(fb, p, opt.ccr_top_k);
    r.fisher_ratio = fisher_ratio(fb);
    r.correlation = correlation_matrix(fb);
    r.activated_dims = activated_dims(fb);
    r.mean_activated_dims = r.activated_dims.empty()
                                ? 0.0
                                : std::accumulate(r.activated_dims.begin(), r.activated_dims.end(), 0.0) /
                                      static_cast<double>(r.activated_dims.size());
    r.spectrum = spectrum_stats(fb, opt.spectrum_top_k);
    r.cluster_radii = cluster_radii(fb);
    r.scatter = scatter_traces(fb);
    r.forbidden_energy = mean_forbidden_energy(fb, p);
    return r;
}

// ---------------------------------------------------------------------------
// Serialisation

inline nlohmann::json to_json(const DiagnosticsReport& r) {
    nlohmann::json j;
    j["sparsity"] = r.sparsity;
    j["ccr"] = r.ccr;
    j["fisher_ratio"] = r.fisher_ratio;
    j["scatter"] = {{"trace_Sb", r.scatter.trace_between}, {"trace_Sw", r.scatter.trace_within}};
    j["forbidden_energy"] = r.forbidden_energy;
    j["activated_dims"] = r.activated_dims;
    j["mean_activated_dims"] = r.mean_activated_dims;
    j["eigenvalues"] = r.spectrum.eigenvalues;
    j["ea_values"] = r.spectrum.ea_values;
    nlohmann::json radii = nlohmann::json::object();
    for (const auto& [c, v] : r.cluster_radii) radii[std::to_string(c)] = v;
    j["cluster_radii"] = radii;
    j["correlation"]["live_dims"] = r.correlation.live;
    std::vector<std::vector<double>> rows;
    for (Eigen::Index a = 0; a < r.correlation.matrix.rows(); ++a) {
        std::vector<double> row(static_cast<std::size_t>(r.correlation.matrix.cols()));
        for (Eigen::Index b = 0; b < r.correlation.matrix.cols(); ++b) row[static_cast<std::size_t>(b)] = r.correlation.matrix(a, b);
        rows.push_back(std::move(row));
    }
    j["correlation"]["matrix"] = rows;
    return j;
}

inline std::string matrix_csv(const Matrix& m, const std::vector<int>& labels) {
    std::ostringstream os;
    os.precision(17);
    os << "dim";
    for (int l : labels) os << ',' << l;
    os << '\n';
    for (Eigen::Index a = 0; a < m.rows(); ++a) {
        os << labels[static_cast<std::size_t>(a)];
        for (Eigen::Index b = 0; b < m.cols(); ++b) os << ',' << m(a, b);
        os << '\n';
    }
    return os.str();
}

/// Binary PGM (P5) heatmap; 1.0 maps to white.
inline std::string heatmap_pgm(const Matrix& m) {
    std::ostringstream os;
    os << "P5\n" << m.cols() << ' ' << m.rows() << "\n255\n";
    for (Eigen::Index a = 0; a < m.rows(); ++a)
        for (Eigen::Index b = 0; b < m.cols(); ++b) {
            const double v = std::clamp(m(a, b), 0.0, 1.0);
            os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    return os.str();
}

} // namespace ccar
