#pragma once

// Dense-network engine: forward pass, reverse-mode gradients, SGD with
// weight decay, cosine learning-rate schedule, softmax cross-entropy.

#include "ccar/error.hpp"
#include "ccar/types.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ccar {

enum class Activation : std::uint8_t { Identity = 0, Relu = 1 };

inline std::string_view activation_name(Activation a) {
    return a == Activation::Relu ? "relu" : "identity";
}

struct DenseLayer {
    Matrix weight; // out x in
    Vector bias;   // out
    Activation activation = Activation::Relu;

    int in_dim() const { return static_cast<int>(weight.cols()); }
    int out_dim() const { return static_cast<int>(weight.rows()); }
};

/// Encoder layers followed by a linear classifier head. The post-activation
/// output of the last encoder layer is the feature vector h. With no encoder
/// layers the features are the inputs themselves (a plain linear model).
class Model {
public:
    std::vector<DenseLayer> layers;
    Matrix classifier_weight; // C x D
    Vector classifier_bias;   // C

    Model() = default;
    Model(std::vector<DenseLayer> encoder, Matrix w, Vector b)
        : layers(std::move(encoder)), classifier_weight(std::move(w)), classifier_bias(std::move(b)) {
        validate();
    }

    int input_dim() const {
        return layers.empty() ? static_cast<int>(classifier_weight.cols()) : layers.front().in_dim();
    }
    int feature_dim() const { return static_cast<int>(classifier_weight.cols()); }
    int num_classes() const { return static_cast<int>(classifier_weight.rows()); }
    /// Index of the layer whose output is h; -1 when features are the inputs.
    int penultimate_index() const { return static_cast<int>(layers.size()) - 1; }

    std::uint64_t generation() const noexcept { return generation_; }
    void bump_generation() noexcept { ++generation_; }

    std::size_t parameter_count() const {
        std::size_t n = static_cast<std::size_t>(classifier_weight.size() + classifier_bias.size());
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    bool all_parameters_finite() const {
        if (!classifier_weight.allFinite() || !classifier_bias.allFinite()) return false;
        for (const auto& l : layers)
            if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }

    void validate() const {
        int width = layers.empty() ? feature_dim() : layers.front().in_dim();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            require(l.in_dim() == width, Errc::ShapeMismatch,
                    "layer " + std::to_string(i) + " expects width " + std::to_string(l.in_dim()) +
                        " but receives " + std::to_string(width));
            require(l.bias.size() == l.weight.rows(), Errc::ShapeMismatch,
                    "layer " + std::to_string(i) + " bias length mismatch");
            width = l.out_dim();
        }
        require(classifier_weight.cols() == width, Errc::ShapeMismatch,
                "classifier expects feature width " + std::to_string(classifier_weight.cols()) +
                    " but encoder produces " + std::to_string(width));
        require(classifier_bias.size() == classifier_weight.rows(), Errc::ShapeMismatch,
                "classifier bias length mismatch");
    }

    friend bool operator==(const Model& a, const Model& b) {
        if (a.layers.size() != b.layers.size()) return false;
        for (std::size_t i = 0; i < a.layers.size(); ++i) {
            const auto& x = a.layers[i];
            const auto& y = b.layers[i];
            if (x.activation != y.activation || x.weight != y.weight || x.bias != y.bias) return false;
        }
        return a.classifier_weight == b.classifier_weight && a.classifier_bias == b.classifier_bias;
    }

private:
    std::uint64_t generation_ = 0;
};

struct LayerGrad {
    Matrix weight;
    Vector bias;
};

struct Gradients {
    std::vector<LayerGrad> layers;
    Matrix classifier_weight;
    Vector classifier_bias;

    bool all_finite() const {
        if (!classifier_weight.allFinite() || !classifier_bias.allFinite()) return false;
        for (const auto& l : layers)
            if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }
};

/// Intermediates cached by forward() for the matching backward().
struct Tape {
    Matrix input;
    std::vector<Matrix> pre;  // pre-activation per encoder layer
    std::vector<Matrix> post; // post-activation per encoder layer
    std::uint64_t generation = 0;
    std::size_t parameter_count = 0;
};

struct ForwardResult {
    Matrix features;
    Matrix logits;
    Tape tape;
};

// ---------------------------------------------------------------------------
// Construction

/// Fan-in scaled uniform init: bound sqrt(6/fan_in) for relu layers and
/// sqrt(3/fan_in) for linear outputs. Biases start at zero.
inline DenseLayer make_layer(int in, int out, Activation act, std::mt19937_64& rng) {
    const double bound = std::sqrt((act == Activation::Relu ? 6.0 : 3.0) / in);
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer l;
    l.weight.resize(out, in);
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = u(rng);
    l.bias = Vector::Zero(out);
    l.activation = act;
    return l;
}

/// MLP encoder input -> hidden... -> feature_dim (all relu) plus a linear head.
inline Model make_mlp(int input_dim, const std::vector<int>& hidden, int feature_dim, int num_classes,
                      std::uint64_t seed) {
    require(input_dim > 0 && feature_dim > 0 && num_classes > 0, Errc::InvalidDimensions,
            "model dimensions must be positive");
    std::mt19937_64 rng(seed);
    std::vector<DenseLayer> enc;
    int width = input_dim;
    for (int h : hidden) {
        require(h > 0, Errc::InvalidDimensions, "hidden width must be positive");
        enc.push_back(make_layer(width, h, Activation::Relu, rng));
        width = h;
    }
    enc.push_back(make_layer(width, feature_dim, Activation::Relu, rng));
    DenseLayer head = make_layer(feature_dim, num_classes, Activation::Identity, rng);
    return Model(std::move(enc), std::move(head.weight), std::move(head.bias));
}

/// Linear classifier over raw inputs (no encoder).
inline Model make_linear(int input_dim, int num_classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    DenseLayer head = make_layer(input_dim, num_classes, Activation::Identity, rng);
    return Model({}, std::move(head.weight), std::move(head.bias));
}

// ---------------------------------------------------------------------------
// Forward / backward

inline ForwardResult forward(const Model& model, const Matrix& x) {
    require(x.cols() == model.input_dim(), Errc::ShapeMismatch,
            "input width " + std::to_string(x.cols()) + " vs model input " +
                std::to_string(model.input_dim()));
    require(x.allFinite(), Errc::NonFiniteInput, "input batch contains NaN/Inf");

    ForwardResult r;
    r.tape.input = x;
    r.tape.generation = model.generation();
    r.tape.parameter_count = model.parameter_count();
    const Matrix* a = &r.tape.input;
    for (const auto& layer : model.layers) {
        Matrix z = (*a) * layer.weight.transpose();
        z.rowwise() += layer.bias.transpose();
        Matrix out = layer.activation == Activation::Relu ? Matrix(z.cwiseMax(0.0)) : z;
        r.tape.pre.push_back(std::move(z));
        r.tape.post.push_back(std::move(out));
        a = &r.tape.post.back();
    }
    r.features = *a;
    r.logits = r.features * model.classifier_weight.transpose();
    r.logits.rowwise() += model.classifier_bias.transpose();
    return r;
}

inline Matrix predict_logits(const Model& model, const Matrix& x) { return forward(model, x).logits; }

inline Labels predict(const Model& model, const Matrix& x) {
    const Matrix z = predict_logits(model, x);
    Labels out(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::Index arg = 0;
        z.row(i).maxCoeff(&arg);
        out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return out;
}

inline double accuracy(const Model& model, const Matrix& x, const Labels& y) {
    if (y.empty()) return 0.0;
    const Labels p = predict(model, x);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hits += p[i] == y[i];
    return static_cast<double>(hits) / static_cast<double>(y.size());
}

struct LossGrad {
    double loss = 0.0;
    Matrix grad;
};

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
inline LossGrad cross_entropy(const Matrix& logits, const Labels& y) {
    const Eigen::Index n = logits.rows();
    const Eigen::Index c = logits.cols();
    require(static_cast<std::size_t>(n) == y.size(), Errc::ShapeMismatch,
            "logit rows vs label count mismatch");
    LossGrad out;
    out.grad.resize(n, c);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int yi = y[static_cast<std::size_t>(i)];
        require(yi >= 0 && yi < c, Errc::LabelOutOfRange,
                "label " + std::to_string(yi) + " outside [0," + std::to_string(c) + ")");
        const double m = logits.row(i).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index k = 0; k < c; ++k) {
            const double e = std::exp(logits(i, k) - m);
            out.grad(i, k) = e;
            sum += e;
        }
        total += -(logits(i, yi) - m - std::log(sum));
        out.grad.row(i) /= sum;
        out.grad(i, yi) -= 1.0;
    }
    if (n > 0) {
        out.loss = total / static_cast<double>(n);
        out.grad /= static_cast<double>(n);
    }
    return out;
}

namespace detail {

struct Backprop {
    Gradients grads;
    Matrix input_grad;
};

inline Backprop backprop(const Model& model, const Tape& tape, const Matrix& d_logits,
                         const Matrix* d_features_extra) {
    require(tape.generation == model.generation() && tape.parameter_count == model.parameter_count() &&
                tape.pre.size() == model.layers.size(),
            Errc::StaleTape, "tape was recorded against a different model state");
    const Matrix& h = model.layers.empty() ? tape.input : tape.post.back();
    require(d_logits.rows() == h.rows() && d_logits.cols() == model.num_classes(), Errc::ShapeMismatch,
            "logit gradient shape mismatch");

    Backprop bp;
    bp.grads.classifier_weight = d_logits.transpose() * h;
    bp.grads.classifier_bias = d_logits.colwise().sum().transpose();

    Matrix da = d_logits * model.classifier_weight;
    if (d_features_extra != nullptr) {
        require(d_features_extra->rows() == da.rows() && d_features_extra->cols() == da.cols(),
                Errc::ShapeMismatch, "feature gradient shape mismatch");
        da += *d_features_extra;
    }

    bp.grads.layers.resize(model.layers.size());
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const auto& layer = model.layers[li];
        Matrix dz = da;
        if (layer.activation == Activation::Relu)
            dz = (tape.pre[li].array() > 0.0).select(da.array(), 0.0).matrix();
        const Matrix& a_in = li == 0 ? tape.input : tape.post[li - 1];
        bp.grads.layers[li].weight = dz.transpose() * a_in;
        bp.grads.layers[li].bias = dz.colwise().sum().transpose();
        da = dz * layer.weight;
    }
    bp.input_grad = std::move(da);
    return bp;
}

} // namespace detail

/// Gradients of (loss whose logit-gradient is d_logits) plus a feature-level
/// term whose gradient w.r.t. h is d_features_extra.
inline Gradients backward(const Model& model, const Tape& tape, const Matrix& d_logits,
                          const Matrix& d_features_extra) {
    return detail::backprop(model, tape, d_logits, &d_features_extra).grads;
}

inline Gradients backward(const Model& model, const Tape& tape, const Matrix& d_logits) {
    return detail::backprop(model, tape, d_logits, nullptr).grads;
}

/// d(mean CE)/d(input), used by the attacks.
inline Matrix input_gradient(const Model& model, const Matrix& x, const Labels& y) {
    auto fr = forward(model, x);
    auto ce = cross_entropy(fr.logits, y);
    return detail::backprop(model, fr.tape, ce.grad, nullptr).input_grad;
}

// ---------------------------------------------------------------------------
// Optimisation

/// g <- g + wd*theta ; theta <- theta - lr*g, applied to every parameter.
inline void sgd_step(Model& model, const Gradients& grads, double lr, double weight_decay) {
    require(lr >= 0.0 && weight_decay >= 0.0, Errc::InvalidDimensions, "lr and weight decay must be >= 0");
    require(grads.layers.size() == model.layers.size(), Errc::ShapeMismatch, "gradient layer count mismatch");
    require(grads.all_finite(), Errc::NonFiniteGradient, "gradient contains NaN/Inf");

    auto update = [&](auto& param, const auto& g) {
        require(param.rows() == g.rows() && param.cols() == g.cols(), Errc::ShapeMismatch,
                "gradient shape mismatch");
        param -= lr * (g + weight_decay * param);
    };
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        update(model.layers[i].weight, grads.layers[i].weight);
        update(model.layers[i].bias, grads.layers[i].bias);
    }
    update(model.classifier_weight, grads.classifier_weight);
    update(model.classifier_bias, grads.classifier_bias);
    model.bump_generation();
    require(model.all_parameters_finite(), Errc::NonFiniteGradient, "update produced non-finite parameters");
}

inline double cosine_lr(int epoch, int total_epochs, double lr0) {
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

} // namespace ccar
