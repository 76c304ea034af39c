#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cvdecode/array.hpp"
#include "cvdecode/dataset.hpp"
#include "cvdecode/error.hpp"
#include "cvdecode/rng.hpp"

namespace cvdecode::models {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::RowVectorXd;

constexpr double kProbFloor = 1e-12;

enum class Nonlinearity { relu, tanh, sigmoid };

inline std::string to_string(Nonlinearity f) {
    switch (f) {
        case Nonlinearity::relu: return "relu";
        case Nonlinearity::tanh: return "tanh";
        case Nonlinearity::sigmoid: return "sigmoid";
    }
    throw InvalidInputError("unreachable nonlinearity value");
}

inline Nonlinearity nonlinearity_from_string(const std::string& s) {
    for (auto f : {Nonlinearity::relu, Nonlinearity::tanh, Nonlinearity::sigmoid})
        if (to_string(f) == s) return f;
    throw InvalidInputError("unknown nonlinearity '" + s + "'");
}

/// Architecture only; zero hidden layers is multinomial logistic regression.
struct NetworkSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;  // length 0..2
    Nonlinearity nonlinearity = Nonlinearity::relu;
    std::size_t n_classes = 0;

    void validate() const {
        if (input_dim == 0 || n_classes < 2)
            throw InvalidInputError("network spec: need input_dim > 0 and n_classes >= 2");
        if (hidden_dims.size() > 2)
            throw InvalidInputError("network spec: at most 2 hidden layers");
        for (auto d : hidden_dims)
            if (d == 0) throw InvalidInputError("network spec: hidden dims must be positive");
    }
    std::size_t n_layers() const { return hidden_dims.size() + 1; }
    std::size_t layer_in(std::size_t i) const { return i == 0 ? input_dim : hidden_dims[i - 1]; }
    std::size_t layer_out(std::size_t i) const {
        return i == hidden_dims.size() ? n_classes : hidden_dims[i];
    }
};

struct NetworkParams {
    std::vector<Mat> W;     // layer i: in x out
    std::vector<RowVec> b;  // layer i: 1 x out

    bool finite() const {
        for (const auto& w : W)
            if (!w.allFinite()) return false;
        for (const auto& v : b)
            if (!v.allFinite()) return false;
        return true;
    }
};

/// Everything the optimizer and training loop consume. Init momentum and
/// patience are fixed constants of the protocol; the rest is searchable.
struct TrainConfig {
    double init_momentum = 0.5;
    double final_momentum = 0.9;
    std::size_t momentum_saturation_epoch = 10;
    double lr_init = 0.01;
    double lr_min = 1e-4;
    double lr_decay = 0.98;  // per-epoch multiplicative factor
    std::size_t batch_size = 32;
    std::size_t max_epochs = 50;
    double input_dropout_rate = 0.0;
    double input_dropout_rescale = 1.0;
    double hidden_dropout_rate = 0.0;
    double hidden_dropout_rescale = 1.0;
    double weight_decay = 0.0;
    double max_filter_norm = 0.0;  // 0 clamps all columns to zero; <0 disables
    double init_scale = 0.01;
    std::size_t patience = 10;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size == 0 || max_epochs == 0)
            throw InvalidInputError("train config: batch_size and max_epochs must be positive");
        if (!(lr_init > 0.0) || !(lr_min > 0.0) || !(lr_decay > 0.0) || lr_decay > 1.0)
            throw InvalidInputError("train config: learning rate fields out of range");
        if (input_dropout_rate < 0.0 || input_dropout_rate >= 1.0 ||
            hidden_dropout_rate < 0.0 || hidden_dropout_rate >= 1.0)
            throw InvalidInputError("train config: dropout rates must lie in [0, 1)");
        if (momentum_saturation_epoch < 1)
            throw InvalidInputError("train config: momentum saturation epoch must be >= 1");
    }
};

/// Momentum ramps linearly from the initial fraction, starting after the
/// first epoch, reaching the final fraction at the saturation epoch.
inline double momentum_at(const TrainConfig& cfg, std::size_t epoch) {
    const double e = static_cast<double>(epoch);
    const double sat = static_cast<double>(cfg.momentum_saturation_epoch);
    if (e >= sat) return cfg.final_momentum;
    if (e <= 1.0) return cfg.init_momentum;
    return cfg.init_momentum + (cfg.final_momentum - cfg.init_momentum) * (e - 1.0) / (sat - 1.0);
}

/// Exponential decay per epoch with a hard floor.
inline double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
    return std::max(cfg.lr_min,
                    cfg.lr_init * std::pow(cfg.lr_decay, static_cast<double>(epoch)));
}

// ---------------------------------------------------------------------------
// Initialization, forward, loss, backward
// ---------------------------------------------------------------------------

/// Weights i.i.d. uniform in [-scale, scale], biases zero.
inline NetworkParams init_params(const NetworkSpec& spec, double init_scale,
                                 std::uint64_t seed) {
    spec.validate();
    if (init_scale < 0.0) throw InvalidInputError("init_params: scale must be >= 0");
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> u(-init_scale, init_scale);
    NetworkParams p;
    for (std::size_t i = 0; i < spec.n_layers(); ++i) {
        Mat w(spec.layer_in(i), spec.layer_out(i));
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
        p.W.push_back(std::move(w));
        p.b.push_back(RowVec::Zero(static_cast<Eigen::Index>(spec.layer_out(i))));
    }
    return p;
}

/// Dropout as factor matrices: 0 where dropped, the configured rescale
/// where kept. Multiplying by the mask is the whole train-time transform;
/// evaluation never applies one.
struct DropoutMasks {
    std::optional<Mat> input;
    std::vector<Mat> hidden;  // one per hidden layer (may be fewer if rate 0)
};

template <typename Rng>
inline DropoutMasks make_dropout_masks(const NetworkSpec& spec, std::size_t batch,
                                       const TrainConfig& cfg, Rng& rng) {
    DropoutMasks m;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto fill = [&](Mat& mask, double rate, double rescale) {
        for (Eigen::Index r = 0; r < mask.rows(); ++r)
            for (Eigen::Index c = 0; c < mask.cols(); ++c)
                mask(r, c) = u(rng) < rate ? 0.0 : rescale;
    };
    if (cfg.input_dropout_rate > 0.0 || cfg.input_dropout_rescale != 1.0) {
        Mat mask(batch, spec.input_dim);
        fill(mask, cfg.input_dropout_rate, cfg.input_dropout_rescale);
        m.input = std::move(mask);
    }
    if (cfg.hidden_dropout_rate > 0.0 || cfg.hidden_dropout_rescale != 1.0) {
        for (auto dim : spec.hidden_dims) {
            Mat mask(batch, dim);
            fill(mask, cfg.hidden_dropout_rate, cfg.hidden_dropout_rescale);
            m.hidden.push_back(std::move(mask));
        }
    }
    return m;
}

inline Mat apply_nonlinearity(const Mat& z, Nonlinearity f) {
    switch (f) {
        case Nonlinearity::relu: return z.cwiseMax(0.0);
        case Nonlinearity::tanh: return z.array().tanh().matrix();
        case Nonlinearity::sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    }
    throw InvalidInputError("unreachable nonlinearity value");
}

/// Derivative expressed through whichever of (z, h) is cheapest.
inline Mat nonlinearity_derivative(const Mat& z, const Mat& h, Nonlinearity f) {
    switch (f) {
        case Nonlinearity::relu:
            return (z.array() > 0.0).cast<double>().matrix();
        case Nonlinearity::tanh:
            return (1.0 - h.array().square()).matrix();
        case Nonlinearity::sigmoid:
            return (h.array() * (1.0 - h.array())).matrix();
    }
    throw InvalidInputError("unreachable nonlinearity value");
}

inline Mat softmax_rows(Mat logits) {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        logits.row(r) = (logits.row(r).array() - mx).exp();
        logits.row(r) /= logits.row(r).sum();
    }
    return logits;
}

/// Cached intermediates of one forward pass, enough to backpropagate.
struct ForwardPass {
    Mat x;                  // input after any dropout
    std::vector<Mat> z;     // pre-activations per hidden layer
    std::vector<Mat> a;     // f(z), before dropout
    std::vector<Mat> h;     // after dropout (equals a when no mask)
    Mat probs;
};

inline ForwardPass forward(const NetworkParams& params, const NetworkSpec& spec, const Mat& x,
                           const DropoutMasks* masks = nullptr) {
    if (static_cast<std::size_t>(x.cols()) != spec.input_dim)
        throw InvalidInputError("forward: input width " + std::to_string(x.cols()) +
                                " != spec input_dim " + std::to_string(spec.input_dim));
    if (!x.allFinite()) throw InvalidInputError("forward: non-finite input");

    ForwardPass fp;
    fp.x = (masks && masks->input) ? x.cwiseProduct(*masks->input) : x;
    const Mat* cur = &fp.x;
    for (std::size_t i = 0; i < spec.hidden_dims.size(); ++i) {
        Mat z = (*cur * params.W[i]).rowwise() + params.b[i];
        Mat a = apply_nonlinearity(z, spec.nonlinearity);
        Mat h = (masks && i < masks->hidden.size()) ? a.cwiseProduct(masks->hidden[i]) : a;
        fp.z.push_back(std::move(z));
        fp.a.push_back(std::move(a));
        fp.h.push_back(std::move(h));
        cur = &fp.h.back();
    }
    Mat logits = (*cur * params.W.back()).rowwise() + params.b.back();
    fp.probs = softmax_rows(std::move(logits));
    return fp;
}

/// Mean negative log-likelihood with the probability floored inside the
/// log, plus L2 penalty on weight matrices (biases exempt).
inline double loss(const Mat& probs, const std::vector<int>& y, const NetworkParams& params,
                   double weight_decay) {
    if (static_cast<std::size_t>(probs.rows()) != y.size())
        throw InvalidInputError("loss: probs/labels row mismatch");
    double nll = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        nll -= std::log(std::max(probs(static_cast<Eigen::Index>(i), y[i]), kProbFloor));
    nll /= static_cast<double>(y.size());
    double penalty = 0.0;
    for (const auto& w : params.W) penalty += w.squaredNorm();
    return nll + weight_decay * penalty;
}

struct Gradients {
    std::vector<Mat> dW;
    std::vector<RowVec> db;
};

/// Exact gradients of loss() including the floor: samples whose true-class
/// probability sits below the floor contribute a locally constant term, so
/// their delta rows are zero. Masks must be the ones used in the forward
/// pass (or null for none).
inline Gradients backward(const NetworkParams& params, const NetworkSpec& spec,
                          const ForwardPass& fp, const std::vector<int>& y,
                          double weight_decay, const DropoutMasks* masks = nullptr) {
    const std::size_t B = y.size();
    const std::size_t L = spec.n_layers();
    if (static_cast<std::size_t>(fp.probs.rows()) != B)
        throw InvalidInputError("backward: probs/labels row mismatch");
    Gradients g;
    g.dW.resize(L);
    g.db.resize(L);

    Mat delta = fp.probs;  // d(mean NLL)/d(logits)
    for (std::size_t i = 0; i < B; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        if (fp.probs(r, y[i]) < kProbFloor)
            delta.row(r).setZero();
        else
            delta(r, y[i]) -= 1.0;
    }
    delta /= static_cast<double>(B);

    for (std::size_t li = L; li-- > 0;) {
        const Mat& input = li == 0 ? fp.x : fp.h[li - 1];
        g.dW[li] = input.transpose() * delta + 2.0 * weight_decay * params.W[li];
        g.db[li] = delta.colwise().sum();
        if (li == 0) break;
        // dL/da = (dL/dh) .* mask; dL/dz = dL/da .* f'(z)
        Mat dh = delta * params.W[li].transpose();
        if (masks && li - 1 < masks->hidden.size()) dh = dh.cwiseProduct(masks->hidden[li - 1]);
        delta = dh.cwiseProduct(
            nonlinearity_derivative(fp.z[li - 1], fp.a[li - 1], spec.nonlinearity));
    }
    return g;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

inline NetworkParams zero_like(const NetworkParams& p) {
    NetworkParams z;
    for (const auto& w : p.W) z.W.push_back(Mat::Zero(w.rows(), w.cols()));
    for (const auto& v : p.b) z.b.push_back(RowVec::Zero(v.cols()));
    return z;
}

/// Rescale any weight column whose L2 norm exceeds the cap back onto the
/// cap. Columns hold the incoming weights of one output unit. Negative cap
/// disables the projection.
inline void project_max_norm(NetworkParams& params, double cap) {
    if (cap < 0.0) return;
    for (auto& w : params.W)
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            const double norm = w.col(c).norm();
            if (norm > cap) w.col(c) *= (norm > 0.0 ? cap / norm : 0.0);
        }
}

/// One momentum update from gradients evaluated at the lookahead point
/// (params + mu * velocity): v <- mu*v - eta*g, theta <- theta + v, then
/// max-norm projection.
inline void nesterov_step(NetworkParams& params, NetworkParams& velocity, const Gradients& g,
                          std::size_t epoch, const TrainConfig& cfg) {
    const double mu = momentum_at(cfg, epoch);
    const double eta = learning_rate_at(cfg, epoch);
    for (std::size_t i = 0; i < params.W.size(); ++i) {
        velocity.W[i] = mu * velocity.W[i] - eta * g.dW[i];
        velocity.b[i] = mu * velocity.b[i] - eta * g.db[i];
        params.W[i] += velocity.W[i];
        params.b[i] += velocity.b[i];
    }
    project_max_norm(params, cfg.max_filter_norm);
}

inline NetworkParams lookahead_point(const NetworkParams& params, const NetworkParams& velocity,
                                     double mu) {
    NetworkParams out = params;
    for (std::size_t i = 0; i < out.W.size(); ++i) {
        out.W[i] += mu * velocity.W[i];
        out.b[i] += mu * velocity.b[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

inline Mat predict_proba(const NetworkParams& params, const NetworkSpec& spec, const Mat& x) {
    return forward(params, spec, x, nullptr).probs;
}

/// Argmax with ties broken toward the lowest class index.
inline std::vector<int> argmax_rows(const Mat& probs) {
    std::vector<int> out(probs.rows());
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        int best = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c)
            if (probs(r, c) > probs(r, best)) best = static_cast<int>(c);
        out[static_cast<std::size_t>(r)] = best;
    }
    return out;
}

inline std::vector<int> predict(const NetworkParams& params, const NetworkSpec& spec,
                                const Mat& x) {
    return argmax_rows(predict_proba(params, spec, x));
}

inline double fraction_correct(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw InvalidInputError("fraction_correct: size mismatch or empty");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochRecord {
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainedModel {
    NetworkSpec spec;
    NetworkParams params;  // parameters from the best-validation epoch
    std::vector<EpochRecord> trace;
    std::size_t stopped_epoch = 0;  // == trace.size()
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;
};

inline Mat gather_rows(const Array2& X, const std::vector<std::size_t>& rows) {
    Mat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(X.cols()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const Eigen::RowVectorXd>(X.row(rows[i]),
                                                 static_cast<Eigen::Index>(X.cols()));
    return out;
}

template <typename T>
inline std::vector<T> gather(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v[i]);
    return out;
}

/// Core loop over explicit train/validation matrices. Holds no reference to
/// any test data by construction.
inline TrainedModel train_on(const Mat& x_train, const std::vector<int>& y_train,
                             const Mat& x_val, const std::vector<int>& y_val,
                             const NetworkSpec& spec, const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    if (static_cast<std::size_t>(x_train.rows()) != y_train.size() ||
        static_cast<std::size_t>(x_val.rows()) != y_val.size())
        throw InvalidInputError("train: features/labels row mismatch");
    if (x_train.rows() == 0 || x_val.rows() == 0)
        throw InvalidInputError("train: empty train or validation set");

    NetworkParams params = init_params(spec, cfg.init_scale, derive_seed(cfg.seed, "init"));
    NetworkParams velocity = zero_like(params);
    auto rng = make_rng(derive_seed(cfg.seed, "train"));

    TrainedModel model;
    model.spec = spec;
    model.best_val_accuracy = -1.0;

    std::vector<std::size_t> order(y_train.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double mu = momentum_at(cfg, epoch);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const std::size_t B = stop - start;
            Mat xb(static_cast<Eigen::Index>(B), x_train.cols());
            std::vector<int> yb(B);
            for (std::size_t i = 0; i < B; ++i) {
                xb.row(static_cast<Eigen::Index>(i)) =
                    x_train.row(static_cast<Eigen::Index>(order[start + i]));
                yb[i] = y_train[order[start + i]];
            }
            const DropoutMasks masks = make_dropout_masks(spec, B, cfg, rng);
            const NetworkParams look = lookahead_point(params, velocity, mu);
            const ForwardPass fp = forward(look, spec, xb, &masks);
            loss_sum += loss(fp.probs, yb, look, cfg.weight_decay) * static_cast<double>(B);
            const Gradients grads = backward(look, spec, fp, yb, cfg.weight_decay, &masks);
            nesterov_step(params, velocity, grads, epoch, cfg);
        }

        EpochRecord rec;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        if (!std::isfinite(rec.train_loss) || !params.finite())
            throw DivergedError("training loss became non-finite", epoch);
        rec.val_accuracy = fraction_correct(predict(params, spec, x_val), y_val);
        model.trace.push_back(rec);

        if (rec.val_accuracy > model.best_val_accuracy) {
            model.best_val_accuracy = rec.val_accuracy;
            model.best_epoch = epoch;
            model.params = params;
            epochs_since_best = 0;
        } else if (++epochs_since_best >= cfg.patience) {
            break;
        }
    }
    model.stopped_epoch = model.trace.size();
    return model;
}

/// Fold-level entry point: slices the dataset by the split's train and
/// validation indices. Test indices are deliberately not touched.
inline TrainedModel train(const dataset::FoldSplit& split, const dataset::LabeledDataset& ds,
                          const NetworkSpec& spec, const TrainConfig& cfg) {
    const Mat x_train = gather_rows(ds.X, split.train);
    const Mat x_val = gather_rows(ds.X, split.val);
    return train_on(x_train, gather(ds.y, split.train), x_val, gather(ds.y, split.val), spec,
                    cfg);
}

}  // namespace cvdecode::models
