#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "cvdecode/array.hpp"
#include "cvdecode/dataset.hpp"
#include "cvdecode/error.hpp"
#include "cvdecode/labels.hpp"
#include "cvdecode/mlp.hpp"
#include "cvdecode/rng.hpp"
#include "cvdecode/signal.hpp"

namespace cvdecode::metrics {

// ---------------------------------------------------------------------------
// Accuracy and chance
// ---------------------------------------------------------------------------

template <typename T>
inline double accuracy(const std::vector<T>& predictions, const std::vector<T>& truth) {
    if (predictions.size() != truth.size() || predictions.empty())
        throw InvalidInputError("accuracy: empty input or length mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predictions[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

struct ChanceEstimate {
    double mean = 0.0;
    std::vector<double> per_resample;

    double sem() const {
        if (per_resample.size() < 2) return 0.0;
        double var = 0.0;
        for (double v : per_resample) var += (v - mean) * (v - mean);
        var /= static_cast<double>(per_resample.size() - 1);
        return std::sqrt(var / static_cast<double>(per_resample.size()));
    }
};

/// Chance accuracy by resampling: each resample predicts every test label
/// with an independent draw from the training label distribution.
inline ChanceEstimate chance_accuracy(const std::vector<std::size_t>& train_label_counts,
                                      const std::vector<int>& test_labels,
                                      std::size_t n_resamples, std::uint64_t seed) {
    if (train_label_counts.empty() ||
        std::accumulate(train_label_counts.begin(), train_label_counts.end(),
                        std::size_t{0}) == 0)
        throw InvalidInputError("chance_accuracy: empty train label counts");
    if (test_labels.empty()) throw InvalidInputError("chance_accuracy: no test labels");
    for (int v : test_labels)
        if (v < 0 || static_cast<std::size_t>(v) >= train_label_counts.size())
            throw InvalidInputError("chance_accuracy: test label out of range");

    auto rng = make_rng(derive_seed(seed, "chance"));
    std::discrete_distribution<int> draw(train_label_counts.begin(), train_label_counts.end());
    ChanceEstimate est;
    est.per_resample.reserve(n_resamples);
    for (std::size_t r = 0; r < n_resamples; ++r) {
        std::size_t hits = 0;
        for (int truth : test_labels) hits += draw(rng) == truth;
        est.per_resample.push_back(static_cast<double>(hits) /
                                   static_cast<double>(test_labels.size()));
    }
    est.mean = std::accumulate(est.per_resample.begin(), est.per_resample.end(), 0.0) /
               static_cast<double>(n_resamples);
    return est;
}

// ---------------------------------------------------------------------------
// Task restriction
// ---------------------------------------------------------------------------

struct RestrictedAccuracy {
    double accuracy = 0.0;
    std::size_t retained = 0;
    std::size_t excluded = 0;
};

/// Project CV-level predictions and truths through a coarser labeling and
/// score exact match there. Trials whose TRUE consonant is uncategorized
/// for the task are excluded before scoring.
inline RestrictedAccuracy restrict_to_task(const std::vector<std::string>& cv_predictions,
                                           const std::vector<std::string>& cv_truth,
                                           labels::Task task,
                                           const labels::ArticulatoryFeatureTable& table =
                                               labels::default_feature_table()) {
    if (cv_predictions.size() != cv_truth.size() || cv_truth.empty())
        throw InvalidInputError("restrict_to_task: length mismatch or empty");
    RestrictedAccuracy out;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < cv_truth.size(); ++i) {
        const std::string t = labels::derive_task_label(cv_truth[i], task, table);
        if (t == labels::kExcludedLabel) {
            ++out.excluded;
            continue;
        }
        const std::string p = labels::derive_task_label(cv_predictions[i], task, table);
        ++out.retained;
        hits += p == t;
    }
    if (out.retained == 0)
        throw UndefinedTaskError("restrict_to_task: no trials retained under task '" +
                                 labels::to_string(task) + "'");
    out.accuracy = static_cast<double>(hits) / static_cast<double>(out.retained);
    return out;
}

// ---------------------------------------------------------------------------
// Confusions
// ---------------------------------------------------------------------------

struct ConfusionSummary {
    std::vector<std::string> classes;
    Array2 hard;  // counts [true, predicted]
    Array2 soft;  // mean predicted probability per true class
    std::vector<std::string> absent_classes;  // classes with zero test trials
};

/// Accumulate hard counts and mean predicted-probability rows from a
/// probability matrix and integer truths. Rows of absent classes are zero
/// and reported, not errors.
inline ConfusionSummary soft_confusion(const models::Mat& probs, const std::vector<int>& y,
                                       const std::vector<std::string>& class_names) {
    const std::size_t K = class_names.size();
    if (static_cast<std::size_t>(probs.cols()) != K)
        throw ShapeMismatchError("soft_confusion: probability width != class count");
    if (static_cast<std::size_t>(probs.rows()) != y.size())
        throw ShapeMismatchError("soft_confusion: probs/labels row mismatch");

    ConfusionSummary cs;
    cs.classes = class_names;
    cs.hard = Array2(K, K);
    cs.soft = Array2(K, K);
    std::vector<std::size_t> per_class(K, 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const auto t = static_cast<std::size_t>(y[i]);
        if (t >= K) throw InvalidInputError("soft_confusion: label out of range");
        ++per_class[t];
        int pred = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c)
            if (probs(r, c) > probs(r, pred)) pred = static_cast<int>(c);
        cs.hard(t, static_cast<std::size_t>(pred)) += 1.0;
        for (std::size_t c = 0; c < K; ++c)
            cs.soft(t, c) += probs(r, static_cast<Eigen::Index>(c));
    }
    for (std::size_t t = 0; t < K; ++t) {
        if (per_class[t] == 0) {
            cs.absent_classes.push_back(class_names[t]);
            continue;
        }
        for (std::size_t c = 0; c < K; ++c)
            cs.soft(t, c) /= static_cast<double>(per_class[t]);
    }
    return cs;
}

/// Merge fold-level summaries whose class sets
/// match; hard counts add, soft rows recombine weighted by trial counts.
inline ConfusionSummary merge_confusions(const std::vector<ConfusionSummary>& parts) {
    if (parts.empty()) throw InvalidInputError("merge_confusions: nothing to merge");
    const std::size_t K = parts.front().classes.size();
    ConfusionSummary out;
    out.classes = parts.front().classes;
    out.hard = Array2(K, K);
    Array2 soft_weighted(K, K);
    std::vector<double> weight(K, 0.0);
    for (const auto& p : parts) {
        if (p.classes != out.classes)
            throw InvalidInputError("merge_confusions: class sets differ");
        for (std::size_t t = 0; t < K; ++t) {
            double row_n = 0.0;
            for (std::size_t c = 0; c < K; ++c) row_n += p.hard(t, c);
            weight[t] += row_n;
            for (std::size_t c = 0; c < K; ++c) {
                out.hard(t, c) += p.hard(t, c);
                soft_weighted(t, c) += p.soft(t, c) * row_n;
            }
        }
    }
    out.soft = Array2(K, K);
    for (std::size_t t = 0; t < K; ++t) {
        if (weight[t] == 0.0) {
            out.absent_classes.push_back(out.classes[t]);
            continue;
        }
        for (std::size_t c = 0; c < K; ++c) out.soft(t, c) = soft_weighted(t, c) / weight[t];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Information metrics
// ---------------------------------------------------------------------------

namespace detail {

inline void check_conditional(const Array2& conditional) {
    if (conditional.rows() == 0 || conditional.cols() == 0)
        throw InvalidInputError("conditional: empty");
    for (std::size_t r = 0; r < conditional.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < conditional.cols(); ++c) {
            const double v = conditional(r, c);
            if (!(v >= 0.0) || v > 1.0 + 1e-9)
                throw InvalidInputError("conditional: entry outside [0, 1]");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-6)
            throw InvalidInputError("conditional: row " + std::to_string(r) +
                                    " sums to " + std::to_string(s));
    }
}

inline void check_prior(const std::vector<double>& prior, std::size_t n) {
    if (prior.size() != n) throw InvalidInputError("prior: wrong length");
    double s = 0.0;
    for (double v : prior) {
        if (!(v >= 0.0)) throw InvalidInputError("prior: negative entry");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) throw InvalidInputError("prior: does not sum to 1");
}

}  // namespace detail

/// I(Y_hat; Y) in bits from P(y_hat|y) rows and P(y), with 0 log 0 = 0.
inline double mutual_information(const Array2& conditional, const std::vector<double>& prior) {
    detail::check_conditional(conditional);
    detail::check_prior(prior, conditional.rows());
    const std::size_t K = conditional.rows();
    const std::size_t M = conditional.cols();
    std::vector<double> marginal(M, 0.0);
    for (std::size_t y = 0; y < K; ++y)
        for (std::size_t m = 0; m < M; ++m) marginal[m] += prior[y] * conditional(y, m);
    double bits = 0.0;
    for (std::size_t y = 0; y < K; ++y)
        for (std::size_t m = 0; m < M; ++m) {
            const double joint = prior[y] * conditional(y, m);
            if (joint > 0.0) bits += joint * std::log2(conditional(y, m) / marginal[m]);
        }
    return bits;
}

struct CapacityResult {
    double bits = 0.0;
    std::vector<double> prior;
    std::size_t iterations = 0;
};

/// Channel capacity of a discrete channel by alternating maximization over
/// the input prior (multiplicative update). Convergence when the standard
/// lower/upper capacity bounds agree within 1e-9 bits; hard iteration cap.
///
/// The bounds hold for any prior, so the step exponent can safely be
/// overrelaxed. It grows while the lower bound keeps improving and resets
/// to the plain update otherwise; without this, priors with mass vanishing
/// toward a simplex face converge too slowly to certify tight tolerances.
inline CapacityResult channel_capacity_exact(const Array2& conditional,
                                             double tol_bits = 1e-9,
                                             std::size_t max_iterations = 100000) {
    detail::check_conditional(conditional);
    const std::size_t K = conditional.rows();
    const std::size_t M = conditional.cols();
    std::vector<double> lp(K, 0.0);  // unnormalized log prior
    std::vector<double> p(K), q(M), d(K);
    double gamma = 1.0;
    double prev_lower = -std::numeric_limits<double>::infinity();

    for (std::size_t it = 1; it <= max_iterations; ++it) {
        const double lp_max = *std::max_element(lp.begin(), lp.end());
        double z = 0.0;
        for (std::size_t y = 0; y < K; ++y) z += std::exp(lp[y] - lp_max);
        for (std::size_t y = 0; y < K; ++y) p[y] = std::exp(lp[y] - lp_max) / z;

        std::fill(q.begin(), q.end(), 0.0);
        for (std::size_t y = 0; y < K; ++y)
            for (std::size_t m = 0; m < M; ++m) q[m] += p[y] * conditional(y, m);

        double upper = -std::numeric_limits<double>::infinity();
        for (std::size_t y = 0; y < K; ++y) {
            double kl = 0.0;  // KL(P(.|y) || q), nats
            for (std::size_t m = 0; m < M; ++m) {
                const double v = conditional(y, m);
                if (v > 0.0) kl += v * std::log(v / q[m]);
            }
            d[y] = kl;
            upper = std::max(upper, kl);
        }
        // lower bound log sum p*exp(d), evaluated as a log-sum-exp
        double acc = 0.0;
        for (std::size_t y = 0; y < K; ++y)
            if (p[y] > 0.0) acc += p[y] * std::exp(d[y] - upper);
        const double lower = upper + std::log(acc);

        if ((upper - lower) / std::log(2.0) < tol_bits) {
            CapacityResult out;
            out.bits = std::max(0.0, lower / std::log(2.0));
            out.prior = p;
            out.iterations = it;
            return out;
        }
        gamma = lower >= prev_lower ? std::min(gamma * 1.25, 1e9) : 1.0;
        prev_lower = lower;

        for (std::size_t y = 0; y < K; ++y) lp[y] += gamma * d[y];
        const double recenter = *std::max_element(lp.begin(), lp.end());
        // floor keeps every component resurrectable in later iterations
        for (std::size_t y = 0; y < K; ++y)
            lp[y] = std::max(lp[y] - recenter, -700.0);
    }
    throw ConvergenceError("capacity solver: bound gap above tolerance after " +
                           std::to_string(max_iterations) + " iterations");
}

/// Closed-form capacity under the uniform-accuracy, uniform-error model.
inline double channel_capacity_wolpaw(std::size_t n_classes, double accuracy_p) {
    if (n_classes < 2) throw InvalidInputError("wolpaw: need >= 2 classes");
    if (!(accuracy_p >= 0.0 && accuracy_p <= 1.0))
        throw InvalidInputError("wolpaw: accuracy outside [0, 1]");
    const double N = static_cast<double>(n_classes);
    double bits = std::log2(N);
    if (accuracy_p > 0.0) bits += accuracy_p * std::log2(accuracy_p);
    if (accuracy_p < 1.0)
        bits += (1.0 - accuracy_p) * std::log2((1.0 - accuracy_p) / (N - 1.0));
    return bits;
}

inline double itr(double capacity_bits, double symbol_duration_s = 1.3) {
    if (!(symbol_duration_s > 0.0)) throw InvalidInputError("itr: duration must be > 0");
    return capacity_bits / symbol_duration_s;
}

/// A full information-metrics record for one classifier evaluation.
struct ChannelReport {
    Array2 conditional;           // P(y_hat | y) from soft confusion rows
    std::vector<double> prior;    // empirical P(y)
    double mutual_information_bits = 0.0;
    double capacity_bits = 0.0;
    std::vector<double> capacity_prior;
    double wolpaw_bits = 0.0;
    double itr_bits_per_s = 0.0;
    double accuracy = 0.0;
    double symbol_duration_s = 1.3;
};

inline ChannelReport build_channel_report(const ConfusionSummary& cs, double accuracy_p,
                                          double symbol_duration_s = 1.3,
                                          bool use_hard_counts = false) {
    const std::size_t K = cs.classes.size();
    ChannelReport rep;
    rep.accuracy = accuracy_p;
    rep.symbol_duration_s = symbol_duration_s;

    std::vector<double> row_counts(K, 0.0);
    double total = 0.0;
    for (std::size_t t = 0; t < K; ++t) {
        for (std::size_t c = 0; c < K; ++c) row_counts[t] += cs.hard(t, c);
        total += row_counts[t];
    }
    if (total == 0.0) throw InvalidInputError("channel report: empty confusion");

    // Rows without test trials cannot define a conditional; restrict to
    // observed classes.
    std::vector<std::size_t> present;
    for (std::size_t t = 0; t < K; ++t)
        if (row_counts[t] > 0.0) present.push_back(t);
    rep.conditional = Array2(present.size(), K);
    rep.prior.resize(present.size());
    for (std::size_t i = 0; i < present.size(); ++i) {
        const std::size_t t = present[i];
        rep.prior[i] = row_counts[t] / total;
        for (std::size_t c = 0; c < K; ++c)
            rep.conditional(i, c) =
                use_hard_counts ? cs.hard(t, c) / row_counts[t] : cs.soft(t, c);
    }

    rep.mutual_information_bits = mutual_information(rep.conditional, rep.prior);
    const CapacityResult cap = channel_capacity_exact(rep.conditional);
    rep.capacity_bits = cap.bits;
    rep.capacity_prior = cap.prior;
    rep.wolpaw_bits = channel_capacity_wolpaw(std::max<std::size_t>(present.size(), 2),
                                              accuracy_p);
    rep.itr_bits_per_s = itr(rep.capacity_bits, symbol_duration_s);
    return rep;
}

// ---------------------------------------------------------------------------
// Scaling regression
// ---------------------------------------------------------------------------

struct SlopeEstimate {
    double slope_per_1000 = 0.0;
    double stderr_per_1000 = 0.0;
};

/// OLS slope of value against training-set size, reported per 1000 examples.
inline SlopeEstimate scaling_slope(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) throw InvalidInputError("scaling_slope: need >= 2 points");
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : points) {
        mx += x / 1000.0;
        my += y;
    }
    const double n = static_cast<double>(points.size());
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : points) {
        const double dx = x / 1000.0 - mx;
        sxx += dx * dx;
        sxy += dx * (y - my);
    }
    if (sxx == 0.0) throw InvalidInputError("scaling_slope: degenerate x values");
    SlopeEstimate est;
    est.slope_per_1000 = sxy / sxx;
    if (points.size() > 2) {
        double ssr = 0.0;
        const double intercept = my - est.slope_per_1000 * mx;
        for (const auto& [x, y] : points) {
            const double r = y - (intercept + est.slope_per_1000 * x / 1000.0);
            ssr += r * r;
        }
        est.stderr_per_1000 = std::sqrt(ssr / (n - 2.0) / sxx);
    }
    return est;
}

// ---------------------------------------------------------------------------
// Time-resolved decoding
// ---------------------------------------------------------------------------

/// Fixed protocol for the per-timepoint logistic models: small, fast, no
/// regularization search.
inline models::TrainConfig timepoint_train_config(std::uint64_t seed) {
    models::TrainConfig cfg;
    cfg.final_momentum = 0.9;
    cfg.momentum_saturation_epoch = 10;
    cfg.lr_init = 0.1;
    cfg.lr_min = 1e-3;
    cfg.lr_decay = 0.95;
    cfg.batch_size = 32;
    cfg.max_epochs = 40;
    cfg.weight_decay = 1e-4;
    cfg.max_filter_norm = -1.0;
    cfg.init_scale = 0.01;
    cfg.seed = seed;
    return cfg;
}

/// Mean test accuracy of an independent multinomial logistic regression at
/// every time sample of one band, aggregated over the provided folds.
inline std::vector<double> timepoint_decoding(const signal::TensorBand& band,
                                              const std::vector<int>& y, std::size_t n_classes,
                                              const std::vector<dataset::FoldSplit>& folds,
                                              std::uint64_t seed) {
    if (band.values.dim0() != y.size())
        throw InvalidInputError("timepoint_decoding: labels/trials mismatch");
    if (folds.empty()) throw InvalidInputError("timepoint_decoding: no folds");
    const std::size_t T = band.n_time();
    const std::size_t E = band.values.dim1();

    models::NetworkSpec spec;
    spec.input_dim = E;
    spec.n_classes = n_classes;

    std::vector<double> acc(T, 0.0);
    for (std::size_t k = 0; k < T; ++k) {
        models::Mat X(static_cast<Eigen::Index>(band.values.dim0()),
                      static_cast<Eigen::Index>(E));
        for (std::size_t tr = 0; tr < band.values.dim0(); ++tr)
            for (std::size_t e = 0; e < E; ++e)
                X(static_cast<Eigen::Index>(tr), static_cast<Eigen::Index>(e)) =
                    band.values(tr, e, k);
        double fold_sum = 0.0;
        for (std::size_t f = 0; f < folds.size(); ++f) {
            auto cfg = timepoint_train_config(derive_seed(seed, "timepoint", k, f));
            const auto& split = folds[f];
            models::Mat xt(static_cast<Eigen::Index>(split.train.size()), X.cols());
            models::Mat xv(static_cast<Eigen::Index>(split.val.size()), X.cols());
            models::Mat xs(static_cast<Eigen::Index>(split.test.size()), X.cols());
            for (std::size_t i = 0; i < split.train.size(); ++i)
                xt.row(static_cast<Eigen::Index>(i)) =
                    X.row(static_cast<Eigen::Index>(split.train[i]));
            for (std::size_t i = 0; i < split.val.size(); ++i)
                xv.row(static_cast<Eigen::Index>(i)) =
                    X.row(static_cast<Eigen::Index>(split.val[i]));
            for (std::size_t i = 0; i < split.test.size(); ++i)
                xs.row(static_cast<Eigen::Index>(i)) =
                    X.row(static_cast<Eigen::Index>(split.test[i]));
            const auto model =
                models::train_on(xt, models::gather(y, split.train), xv,
                                 models::gather(y, split.val), spec, cfg);
            fold_sum += models::fraction_correct(
                models::predict(model.params, spec, xs), models::gather(y, split.test));
        }
        acc[k] = fold_sum / static_cast<double>(folds.size());
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Paired significance
// ---------------------------------------------------------------------------

struct WsrtResult {
    double statistic = 0.0;  // W+ (sum of ranks of positive differences)
    double p_uncorrected = 1.0;
    double p_corrected = 1.0;
    std::size_t n_effective = 0;
    bool exact = false;
};

/// Two-sided Wilcoxon signed-rank test with Bonferroni multiplication.
/// Exact distribution when n <= 25 and all |differences| are distinct;
/// normal approximation with tie correction otherwise.
inline WsrtResult wsrt_bonferroni(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t n_corrections = 1) {
    if (a.size() != b.size() || a.size() < 5)
        throw InvalidInputError("wsrt: need paired vectors of length >= 5");
    if (n_corrections < 1) throw InvalidInputError("wsrt: corrections must be >= 1");

    std::vector<double> diff;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diff.push_back(d);
    }
    if (diff.empty()) throw UndefinedTestError("wsrt: all paired differences are zero");
    const std::size_t n = diff.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return std::abs(diff[i]) < std::abs(diff[j]);
    });
    std::vector<double> rank(n);
    bool ties = false;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n &&
               std::abs(diff[order[j + 1]]) == std::abs(diff[order[i]]))
            ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        if (j > i) ties = true;
        i = j + 1;
    }

    double w_plus = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (diff[i] > 0.0) w_plus += rank[i];

    WsrtResult res;
    res.statistic = w_plus;
    res.n_effective = n;

    if (n <= 25 && !ties) {
        // Exact null distribution: counts of subsets of {1..n} by rank sum.
        const std::size_t max_sum = n * (n + 1) / 2;
        std::vector<double> count(max_sum + 1, 0.0);
        count[0] = 1.0;
        for (std::size_t r = 1; r <= n; ++r)
            for (std::size_t s = max_sum;; --s) {
                if (s >= r) count[s] += count[s - r];
                if (s == 0) break;
            }
        const double total = std::pow(2.0, static_cast<double>(n));
        const auto w = static_cast<std::size_t>(std::llround(w_plus));
        double cdf_lo = 0.0, cdf_hi = 0.0;
        for (std::size_t s = 0; s <= max_sum; ++s) {
            if (s <= w) cdf_lo += count[s];
            if (s >= w) cdf_hi += count[s];
        }
        res.p_uncorrected = std::min(1.0, 2.0 * std::min(cdf_lo, cdf_hi) / total);
        res.exact = true;
    } else {
        const double nn = static_cast<double>(n);
        const double mean = nn * (nn + 1.0) / 4.0;
        double tie_term = 0.0;
        std::map<double, std::size_t> groups;
        for (std::size_t i = 0; i < n; ++i) ++groups[std::abs(diff[i])];
        for (const auto& [v, t] : groups) {
            const double td = static_cast<double>(t);
            tie_term += td * td * td - td;
        }
        const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
        double z = w_plus - mean;
        z -= z > 0 ? 0.5 : (z < 0 ? -0.5 : 0.0);  // continuity correction
        z /= std::sqrt(var);
        res.p_uncorrected = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
    }
    res.p_corrected = std::min(1.0, res.p_uncorrected * static_cast<double>(n_corrections));
    return res;
}

// ---------------------------------------------------------------------------
// Histograms (plot-data support)
// ---------------------------------------------------------------------------

struct Histogram {
    std::vector<double> edges;   // n_bins + 1
    std::vector<std::size_t> counts;
};

inline Histogram histogram(const std::vector<double>& values, double lo, double hi,
                           std::size_t n_bins) {
    if (!(hi > lo) || n_bins == 0) throw InvalidInputError("histogram: bad range or bins");
    Histogram h;
    h.edges.resize(n_bins + 1);
    for (std::size_t i = 0; i <= n_bins; ++i)
        h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bins);
    h.counts.assign(n_bins, 0);
    for (double v : values) {
        if (v < lo || v > hi) continue;
        auto bin = static_cast<std::size_t>((v - lo) / (hi - lo) *
                                            static_cast<double>(n_bins));
        if (bin >= n_bins) bin = n_bins - 1;  // right edge inclusive
        ++h.counts[bin];
    }
    return h;
}

}  // namespace cvdecode::metrics
