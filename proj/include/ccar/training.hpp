#pragma once

// Composite training: cross-entropy on the logits plus lambda times a
// feature-space penalty on the penultimate activations, optimised with
// per-epoch cosine-annealed SGD.

#include "ccar/dataset.hpp"
#include "ccar/error.hpp"
#include "ccar/nn.hpp"
#include "ccar/partition.hpp"
#include "ccar/regularizers.hpp"
#include "ccar/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace ccar {

struct TrainConfig {
    double lambda = 3.0;
    RegularizerKind regularizer{};
    int epochs = 100;
    int batch_size = 256;
    double lr0 = 0.1;
    double weight_decay = 5e-4;
    double noise_rate = 0.0;
    std::uint64_t seed = 0;
    int feature_dim = 64;
    int num_classes = 10;
    std::vector<int> hidden = {128};
    double centroid_momentum = 0.9;

    void validate() const {
        require(lambda >= 0.0, Errc::Config, "lambda must be >= 0");
        require(epochs >= 1, Errc::Config, "epochs must be >= 1");
        require(batch_size >= 1, Errc::Config, "batch_size must be >= 1");
        require(lr0 >= 0.0 && weight_decay >= 0.0, Errc::Config, "lr0 and weight_decay must be >= 0");
        require(noise_rate >= 0.0 && noise_rate <= 1.0, Errc::Config, "noise_rate must be in [0,1]");
        require(centroid_momentum >= 0.0 && centroid_momentum < 1.0, Errc::Config,
                "centroid momentum must be in [0,1)");
        regularizer.validate();
    }
};

struct EpochRecord {
    int epoch = 0;
    double ce_loss = 0.0;
    double reg_loss = 0.0; // lambda-weighted penalty
    double train_accuracy = 0.0;
    double forbidden_energy_mean = 0.0;
    double learning_rate = 0.0;
};

using TrainHistory = std::vector<EpochRecord>;

inline std::string history_csv(const TrainHistory& h) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,ce_loss,reg_loss,train_acc,forbidden_energy,lr\n";
    for (const auto& r : h)
        os << r.epoch << ',' << r.ce_loss << ',' << r.reg_loss << ',' << r.train_accuracy << ','
           << r.forbidden_energy_mean << ',' << r.learning_rate << '\n';
    return os.str();
}

/// Symmetric label noise: each label flips with probability `rate` to a class
/// drawn uniformly from the other C-1 classes.
inline Labels inject_label_noise(const Labels& y, double rate, int num_classes, std::uint64_t seed) {
    require(rate >= 0.0 && rate <= 1.0, Errc::Config, "noise rate must be in [0,1]");
    require(num_classes >= 2, Errc::InvalidDimensions, "need >= 2 classes for label noise");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> other(0, num_classes - 2);
    Labels out = y;
    for (auto& label : out) {
        // Draw both variates for every sample so the stream layout is rate-independent.
        const double u = coin(rng);
        int k = other(rng);
        if (u < rate) {
            if (k >= label) ++k;
            label = k;
        }
    }
    return out;
}

inline FeatureBatch extract_features(const Model& model, const Matrix& inputs, Labels labels) {
    require(inputs.cols() == model.input_dim(), Errc::ShapeMismatch, "input width does not match model");
    return FeatureBatch{forward(model, inputs).features, std::move(labels)};
}

namespace detail {

inline Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& idx, std::size_t from, std::size_t to) {
    Matrix out(static_cast<Eigen::Index>(to - from), x.cols());
    for (std::size_t r = from; r < to; ++r)
        out.row(static_cast<Eigen::Index>(r - from)) = x.row(static_cast<Eigen::Index>(idx[r]));
    return out;
}

inline Labels gather(const Labels& y, const std::vector<std::size_t>& idx, std::size_t from, std::size_t to) {
    Labels out;
    out.reserve(to - from);
    for (std::size_t r = from; r < to; ++r) out.push_back(y[idx[r]]);
    return out;
}

} // namespace detail

struct SgdSchedule {
    int epochs = 50;
    int batch_size = 256;
    double lr0 = 0.1;
    double weight_decay = 0.0;
    std::uint64_t shuffle_seed = 0;
};

/// Feature-level penalty hook: returns lambda-scaled loss and gradient for a
/// batch, or nullopt when no penalty applies.
using PenaltyHook = std::function<std::optional<RegLoss>(const Matrix& features, const Labels& y)>;

/// Minibatch SGD over (x, y). The penalty hook, when present, enters only
/// through the feature gradient. `partition` (optional) enables forbidden
/// energy tracking in the history.
inline TrainHistory run_sgd(Model& model, const Matrix& x, const Labels& y, const SgdSchedule& sched,
                            const PenaltyHook& penalty = {}, const SubspacePartition* partition = nullptr) {
    require(x.rows() > 0 && static_cast<std::size_t>(x.rows()) == y.size(), Errc::ShapeMismatch,
            "training set empty or labels misaligned");
    require(sched.epochs >= 1 && sched.batch_size >= 1, Errc::Config, "epochs and batch size must be >= 1");
    const std::size_t n = y.size();
    const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(sched.batch_size), n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(sched.shuffle_seed);

    TrainHistory history;
    for (int epoch = 0; epoch < sched.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, sched.epochs, sched.lr0);
        std::shuffle(order.begin(), order.end(), rng);
        double ce_sum = 0.0, reg_sum = 0.0, fe_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batch_no = 0;
        for (std::size_t from = 0; from < n; from += bs, ++batch_no) {
            const std::size_t to = std::min(n, from + bs);
            const Matrix xb = detail::gather_rows(x, order, from, to);
            const Labels yb = detail::gather(y, order, from, to);
            const auto nb = static_cast<double>(to - from);

            auto fr = forward(model, xb);
            auto ce = cross_entropy(fr.logits, yb);
            std::optional<RegLoss> reg;
            if (penalty) reg = penalty(fr.features, yb);
            const double reg_loss = reg ? reg->loss : 0.0;
            if (!std::isfinite(ce.loss) || !std::isfinite(reg_loss)) {
                std::ostringstream msg;
                msg << "epoch " << epoch << " batch " << batch_no << " rows [" << from << ',' << to
                    << "): ce=" << ce.loss << " reg=" << reg_loss;
                throw Error(Errc::NonFiniteLoss, msg.str());
            }

            for (Eigen::Index i = 0; i < fr.logits.rows(); ++i) {
                Eigen::Index arg = 0;
                fr.logits.row(i).maxCoeff(&arg);
                correct += static_cast<int>(arg) == yb[static_cast<std::size_t>(i)];
                if (partition != nullptr)
                    fe_sum += forbidden_energy(fr.features.row(i), *partition, yb[static_cast<std::size_t>(i)]);
            }
            ce_sum += ce.loss * nb;
            reg_sum += reg_loss * nb;

            const Gradients g = reg ? backward(model, fr.tape, ce.grad, reg->grad) : backward(model, fr.tape, ce.grad);
            sgd_step(model, g, lr, sched.weight_decay);
        }
        const auto nd = static_cast<double>(n);
        history.push_back({epoch, ce_sum / nd, reg_sum / nd, static_cast<double>(correct) / nd,
                           partition != nullptr ? fe_sum / nd : 0.0, lr});
    }
    return history;
}

struct TrainResult {
    Model model;
    TrainHistory history;
    Labels train_labels; // labels actually used (after noise injection)
};

/// Seed streams derived from TrainConfig::seed.
enum SeedStream : std::uint64_t { kInitStream = 1, kNoiseStream = 2, kShuffleStream = 3 };

/// Trains on the train split of `data`. Symmetric noise at config.noise_rate
/// is injected once into the clean training labels before the first epoch.
inline TrainResult train(const TrainConfig& config, const Dataset& data) {
    config.validate();
    data.validate();
    require(data.num_classes == config.num_classes, Errc::ShapeMismatch,
            "dataset has " + std::to_string(data.num_classes) + " classes, config " +
                std::to_string(config.num_classes));
    const Dataset tr = data.subset(Split::Train);
    require(tr.size() > 0, Errc::ShapeMismatch, "training split is empty");

    const SubspacePartition partition(config.feature_dim, config.num_classes);
    TrainResult out;
    out.model = make_mlp(tr.input_dim(), config.hidden, config.feature_dim, config.num_classes,
                         mix_seed(config.seed, kInitStream));
    out.train_labels = inject_label_noise(tr.clean_labels, config.noise_rate, config.num_classes,
                                          mix_seed(config.seed, kNoiseStream));

    std::optional<ClassCentroids> centroids;
    if (config.regularizer.tag == RegularizerTag::CosineMargin && config.lambda > 0.0) {
        centroids.emplace(config.num_classes, config.feature_dim, config.centroid_momentum);
        update_centroids(*centroids, forward(out.model, tr.inputs).features, out.train_labels);
    }

    PenaltyHook hook;
    if (config.lambda > 0.0) {
        hook = [&](const Matrix& h, const Labels& y) -> std::optional<RegLoss> {
            if (centroids) update_centroids(*centroids, h, y);
            RegLoss r = evaluate_regularizer(config.regularizer, h, y, partition,
                                             centroids ? &*centroids : nullptr, true);
            r.loss *= config.lambda;
            r.grad *= config.lambda;
            return r;
        };
    }

    SgdSchedule sched{config.epochs, config.batch_size, config.lr0, config.weight_decay,
                      mix_seed(config.seed, kShuffleStream)};
    out.history = run_sgd(out.model, tr.inputs, out.train_labels, sched, hook, &partition);
    return out;
}

} // namespace ccar
