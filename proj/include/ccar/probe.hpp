#pragma once

// Frozen-feature evaluation: linear / MLP probes and cosine retrieval mAP@k.

#include "ccar/error.hpp"
#include "ccar/nn.hpp"
#include "ccar/training.hpp"
#include "ccar/types.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string_view>
#include <vector>

namespace ccar {

enum class ProbeKind { Linear, Mlp };

inline std::string_view probe_name(ProbeKind k) { return k == ProbeKind::Linear ? "linear" : "mlp"; }

inline std::optional<ProbeKind> parse_probe(std::string_view s) {
    if (s == "linear") return ProbeKind::Linear;
    if (s == "mlp") return ProbeKind::Mlp;
    return std::nullopt;
}

struct ProbeConfig {
    ProbeKind kind = ProbeKind::Linear;
    int hidden = 0; // mlp width; 0 selects min(2048, 4*D)
    int epochs = 50;
    double lr0 = 0.1;
    int batch_size = 256;
    int num_classes = 0; // 0 infers from the labels
    std::uint64_t seed = 0;

    void validate() const {
        require(epochs >= 1, Errc::Config, "probe epochs must be >= 1");
        require(batch_size >= 1, Errc::Config, "probe batch size must be >= 1");
        require(lr0 >= 0.0, Errc::Config, "probe lr must be >= 0");
        require(hidden >= 0, Errc::Config, "probe hidden width must be >= 0");
    }
};

inline int default_probe_hidden(int feature_dim) { return std::min(2048, 4 * feature_dim); }

/// Trains a probe on frozen train features and returns top-1 test accuracy.
inline double probe(const FeatureBatch& train_fb, const FeatureBatch& test_fb, const ProbeConfig& cfg) {
    cfg.validate();
    require(train_fb.h.cols() == test_fb.h.cols(), Errc::ShapeMismatch, "train/test feature widths differ");
    require(train_fb.size() > 0 && static_cast<std::size_t>(train_fb.h.rows()) == train_fb.size() &&
                static_cast<std::size_t>(test_fb.h.rows()) == test_fb.size(),
            Errc::ShapeMismatch, "probe batches empty or misaligned");
    int c = cfg.num_classes;
    if (c == 0) {
        for (int y : train_fb.labels) c = std::max(c, y + 1);
        for (int y : test_fb.labels) c = std::max(c, y + 1);
    }
    const int d = train_fb.dim();
    Model m = cfg.kind == ProbeKind::Linear
                  ? make_linear(d, c, mix_seed(cfg.seed, kInitStream))
                  : make_mlp(d, {}, cfg.hidden > 0 ? cfg.hidden : default_probe_hidden(d), c,
                             mix_seed(cfg.seed, kInitStream));
    SgdSchedule sched{cfg.epochs, cfg.batch_size, cfg.lr0, 0.0, mix_seed(cfg.seed, kShuffleStream)};
    run_sgd(m, train_fb.h, train_fb.labels, sched);
    return accuracy(m, test_fb.h, test_fb.labels);
}

struct RetrievalResult {
    double map = 0.0;
    std::size_t queries_without_relevant = 0;
    std::size_t excluded_zero_rows = 0;
};

/// Mean over queries of AP@k, ranking every other sample by cosine
/// similarity (ties by ascending index). AP@k normalises by min(k, R) where
/// R is the number of same-class non-self samples; queries with R = 0 score 0.
/// Zero-norm rows raise DegenerateNorm unless `exclude_zero_rows` drops them
/// from both the query and database side.
inline RetrievalResult retrieval_map(const FeatureBatch& fb, int k = 10, bool exclude_zero_rows = false) {
    if (exclude_zero_rows) {
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < fb.h.rows(); ++i)
            if (fb.h.row(i).norm() > 1e-12) keep.push_back(i);
        if (keep.size() != static_cast<std::size_t>(fb.h.rows())) {
            FeatureBatch sub{Matrix(static_cast<Eigen::Index>(keep.size()), fb.h.cols()), {}};
            for (std::size_t r = 0; r < keep.size(); ++r) {
                sub.h.row(static_cast<Eigen::Index>(r)) = fb.h.row(keep[r]);
                sub.labels.push_back(fb.labels[static_cast<std::size_t>(keep[r])]);
            }
            RetrievalResult out = retrieval_map(sub, k, false);
            out.excluded_zero_rows = fb.size() - keep.size();
            return out;
        }
    }
    require(fb.h.rows() >= 2 && static_cast<std::size_t>(fb.h.rows()) == fb.size(), Errc::InsufficientSamples,
            "retrieval needs >= 2 aligned samples");
    require(k >= 1, Errc::Config, "k must be >= 1");
    const Eigen::Index n = fb.h.rows();
    Vector norms = fb.h.rowwise().norm();
    for (Eigen::Index i = 0; i < n; ++i)
        require(norms[i] > 1e-12, Errc::DegenerateNorm, "feature row " + std::to_string(i) + " has zero norm");
    Matrix unit = fb.h.array().colwise() / norms.array();
    const Matrix sims = unit * unit.transpose();

    std::vector<std::size_t> class_count;
    for (int y : fb.labels) {
        if (static_cast<std::size_t>(y) >= class_count.size()) class_count.resize(static_cast<std::size_t>(y) + 1, 0);
        ++class_count[static_cast<std::size_t>(y)];
    }

    RetrievalResult out;
    std::vector<Eigen::Index> order;
    order.reserve(static_cast<std::size_t>(n));
    double total = 0.0;
    const auto kk = static_cast<std::size_t>(k);
    for (Eigen::Index q = 0; q < n; ++q) {
        const int yq = fb.labels[static_cast<std::size_t>(q)];
        const std::size_t relevant = class_count[static_cast<std::size_t>(yq)] - 1;
        if (relevant == 0) {
            ++out.queries_without_relevant;
            continue;
        }
        order.clear();
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != q) order.push_back(j);
        const std::size_t top = std::min(kk, order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                          [&](Eigen::Index a, Eigen::Index b) {
                              const double sa = sims(q, a), sb = sims(q, b);
                              return sa != sb ? sa > sb : a < b;
                          });
        double ap = 0.0;
        std::size_t hits = 0;
        for (std::size_t r = 0; r < top; ++r) {
            if (fb.labels[static_cast<std::size_t>(order[r])] != yq) continue;
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
        total += ap / static_cast<double>(std::min(kk, relevant));
    }
    out.map = total / static_cast<double>(n);
    return out;
}

} // namespace ccar
