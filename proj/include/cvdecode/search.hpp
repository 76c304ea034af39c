#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvdecode/dataset.hpp"
#include "cvdecode/error.hpp"
#include "cvdecode/io.hpp"
#include "cvdecode/metrics.hpp"
#include "cvdecode/mlp.hpp"
#include "cvdecode/rng.hpp"
#include "cvdecode/stats.hpp"

namespace cvdecode::search {

// ---------------------------------------------------------------------------
// Search space
// ---------------------------------------------------------------------------

/// How a sampled uniform draw maps to the hyperparameter value:
///   integer             inclusive uniform integer in [lo, hi]
///   real                uniform in [lo, hi]
///   log_real            value = 10^u, u uniform in [lo, hi]
///   one_minus_log_real  value = 1 - 10^u, u uniform in [lo, hi]
///   choice              uniform pick from the option list
enum class ParamKind { integer, real, log_real, one_minus_log_real, choice };

struct ParamDescriptor {
    std::string name;
    ParamKind kind = ParamKind::real;
    double lo = 0.0;  // bounds in the sampled (pre-transform) space
    double hi = 0.0;
    std::vector<std::string> choices;
};

/// The searched ranges. Fixed protocol constants (initial momentum 0.5,
/// patience 10) are not part of the space. One fully-connected width is
/// drawn and shared by every hidden layer.
struct HyperparameterSpace {
    std::vector<ParamDescriptor> params;
    bool with_hidden_layers = true;

    const ParamDescriptor& param(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return p;
        throw InvalidInputError("search space has no parameter '" + name + "'");
    }
    bool has(const std::string& name) const {
        for (const auto& p : params)
            if (p.name == name) return true;
        return false;
    }

    /// task_dim bounds the fully-connected width from below. The logistic
    /// variant drops the hidden-layer rows and keeps the rest.
    static HyperparameterSpace standard(std::size_t task_dim, bool with_hidden_layers = true) {
        HyperparameterSpace s;
        s.with_hidden_layers = with_hidden_layers;
        auto add = [&s](std::string name, ParamKind kind, double lo, double hi,
                        std::vector<std::string> choices = {}) {
            s.params.push_back({std::move(name), kind, lo, hi, std::move(choices)});
        };
        if (with_hidden_layers) {
            add("num_fc_layers", ParamKind::integer, 1, 2);
            add("fc_dim", ParamKind::integer, static_cast<double>(task_dim), 1000);
            add("fc_layer_type", ParamKind::choice, 0, 0, {"relu", "tanh", "sigmoid"});
        }
        add("weight_init_scale", ParamKind::log_real, -5, 0);
        add("lr_init", ParamKind::log_real, -3, -1);
        add("lr_min", ParamKind::log_real, -5, -1);
        add("lr_decay", ParamKind::one_minus_log_real, -5, -1);
        add("final_momentum", ParamKind::one_minus_log_real, -2, -3.0102e-1);
        add("momentum_saturation_epoch", ParamKind::integer, 1, 50);
        add("batch_size", ParamKind::integer, 15, 256);
        add("max_epochs", ParamKind::integer, 10, 100);
        add("one_minus_input_dropout_rate", ParamKind::real, 0.3, 1);
        add("input_dropout_rescale", ParamKind::real, 1, 3);
        if (with_hidden_layers) {
            add("one_minus_hidden_dropout_rate", ParamKind::real, 0.3, 1);
            add("hidden_dropout_rescale", ParamKind::real, 1, 3);
        }
        add("weight_decay", ParamKind::log_real, -7, 0);
        add("max_filter_norm", ParamKind::real, 0, 3);
        return s;
    }
};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits; avoids the distribution
/// templates so sampled configs are stable across standard libraries.
inline double unit_real(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::int64_t uniform_int(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return lo + static_cast<std::int64_t>(r % span);
}

}  // namespace detail

/// One draw from the space: raw numeric values (post back-transform) and
/// enum picks by name, plus the assembled network shape and trainer config.
struct ConfigSample {
    std::size_t config_id = 0;
    std::uint64_t seed = 0;
    std::map<std::string, double> values;
    std::map<std::string, std::string> enums;
    models::NetworkSpec spec;
    models::TrainConfig config;  // per-fold seed filled in at train time

    /// Stable fingerprint of the sampled values, used to detect a stale
    /// resume log. The seed participates so that a degenerate space (all
    /// rows pinned) still distinguishes runs with different seeds.
    std::string fingerprint() const {
        nlohmann::json j{{"seed", seed}, {"values", values}, {"enums", enums}};
        const auto s = j.dump();
        return checksum_hex(fnv1a64(s));
    }
};

/// Draw every descriptor in declaration order with one generator, then
/// assemble the config. Same seed, same sample.
inline ConfigSample sample_config(const HyperparameterSpace& space, std::size_t input_dim,
                                  std::size_t n_classes, std::size_t config_id,
                                  std::uint64_t seed) {
    auto rng = make_rng(seed);
    ConfigSample out;
    out.config_id = config_id;
    out.seed = seed;
    for (const auto& p : space.params) {
        switch (p.kind) {
            case ParamKind::integer:
                out.values[p.name] = static_cast<double>(detail::uniform_int(
                    rng, static_cast<std::int64_t>(p.lo), static_cast<std::int64_t>(p.hi)));
                break;
            case ParamKind::real:
                out.values[p.name] = p.lo + (p.hi - p.lo) * detail::unit_real(rng);
                break;
            case ParamKind::log_real:
                out.values[p.name] =
                    std::pow(10.0, p.lo + (p.hi - p.lo) * detail::unit_real(rng));
                break;
            case ParamKind::one_minus_log_real:
                out.values[p.name] =
                    1.0 - std::pow(10.0, p.lo + (p.hi - p.lo) * detail::unit_real(rng));
                break;
            case ParamKind::choice: {
                const auto k = detail::uniform_int(
                    rng, 0, static_cast<std::int64_t>(p.choices.size()) - 1);
                out.enums[p.name] = p.choices[static_cast<std::size_t>(k)];
                break;
            }
        }
    }

    out.spec.input_dim = input_dim;
    out.spec.n_classes = n_classes;
    if (space.with_hidden_layers) {
        const auto layers = static_cast<std::size_t>(out.values.at("num_fc_layers"));
        const auto dim = static_cast<std::size_t>(out.values.at("fc_dim"));
        out.spec.hidden_dims.assign(layers, dim);
        out.spec.nonlinearity = models::nonlinearity_from_string(out.enums.at("fc_layer_type"));
    }

    auto& cfg = out.config;
    cfg.init_scale = out.values.at("weight_init_scale");
    cfg.lr_init = out.values.at("lr_init");
    cfg.lr_min = out.values.at("lr_min");
    cfg.lr_decay = out.values.at("lr_decay");
    cfg.final_momentum = out.values.at("final_momentum");
    cfg.momentum_saturation_epoch =
        static_cast<std::size_t>(out.values.at("momentum_saturation_epoch"));
    cfg.batch_size = static_cast<std::size_t>(out.values.at("batch_size"));
    cfg.max_epochs = static_cast<std::size_t>(out.values.at("max_epochs"));
    cfg.input_dropout_rate = 1.0 - out.values.at("one_minus_input_dropout_rate");
    cfg.input_dropout_rescale = out.values.at("input_dropout_rescale");
    if (space.with_hidden_layers) {
        cfg.hidden_dropout_rate = 1.0 - out.values.at("one_minus_hidden_dropout_rate");
        cfg.hidden_dropout_rescale = out.values.at("hidden_dropout_rescale");
    }
    cfg.weight_decay = out.values.at("weight_decay");
    cfg.max_filter_norm = out.values.at("max_filter_norm");
    out.spec.validate();
    cfg.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Search execution
// ---------------------------------------------------------------------------

struct FoldOutcome {
    std::size_t config_id = 0;
    std::size_t fold = 0;
    std::uint64_t train_seed = 0;
    double val_accuracy = 0.0;
    std::size_t best_epoch = 0;
    std::size_t stopped_epoch = 0;
    bool diverged = false;
    bool from_log = false;  // reused from a resume file, not retrained
};

struct ConfigResult {
    ConfigSample sample;
    std::vector<FoldOutcome> folds;
    double mean_val_accuracy = 0.0;  // over folds; NaN when disqualified
    bool diverged = false;           // any fold diverged
};

struct SearchResult {
    std::vector<ConfigResult> configs;  // config-id order
    std::size_t winner_id = 0;
    std::vector<double> winner_test_accuracy;  // per fold
    double winner_mean_test_accuracy = 0.0;
    metrics::ConfusionSummary winner_confusion;  // pooled over fold test sets
    std::vector<models::TrainedModel> winner_models;
};

struct SearchOptions {
    std::size_t n_samples = 50;
    std::uint64_t seed = 0;
    std::size_t n_workers = 1;
    std::filesystem::path log_path;  // empty disables logging/resume
};

namespace detail {

inline nlohmann::json outcome_to_json(const FoldOutcome& o, const std::string& fingerprint) {
    return {{"config_id", o.config_id},   {"fold", o.fold},
            {"train_seed", o.train_seed}, {"val_accuracy", o.val_accuracy},
            {"best_epoch", o.best_epoch}, {"stopped_epoch", o.stopped_epoch},
            {"diverged", o.diverged},     {"config_fingerprint", fingerprint}};
}

struct LoggedOutcome {
    FoldOutcome outcome;
    std::string fingerprint;
};

inline std::map<std::pair<std::size_t, std::size_t>, LoggedOutcome> load_log(
    const std::filesystem::path& path) {
    std::map<std::pair<std::size_t, std::size_t>, LoggedOutcome> out;
    std::ifstream f(path);
    if (!f) return out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError("search log " + path.string() + " line " +
                          std::to_string(line_no) + ": " + e.what());
        }
        const std::string ctx = path.string();
        LoggedOutcome rec;
        rec.outcome.config_id = io::detail::require<std::size_t>(j, "config_id", ctx);
        rec.outcome.fold = io::detail::require<std::size_t>(j, "fold", ctx);
        rec.outcome.train_seed = io::detail::require<std::uint64_t>(j, "train_seed", ctx);
        rec.outcome.val_accuracy = io::detail::require<double>(j, "val_accuracy", ctx);
        rec.outcome.best_epoch = io::detail::require<std::size_t>(j, "best_epoch", ctx);
        rec.outcome.stopped_epoch = io::detail::require<std::size_t>(j, "stopped_epoch", ctx);
        rec.outcome.diverged = io::detail::require<bool>(j, "diverged", ctx);
        rec.outcome.from_log = true;
        rec.fingerprint = io::detail::require<std::string>(j, "config_fingerprint", ctx);
        out[{rec.outcome.config_id, rec.outcome.fold}] = std::move(rec);
    }
    return out;
}

}  // namespace detail

/// Train one (config, fold) job. Receives only the train and validation
/// views; the fold's test rows stay untouched until a winner exists.
inline FoldOutcome run_fold_job(const dataset::LabeledDataset& ds,
                                const dataset::FoldSplit& split, const ConfigSample& sample,
                                std::size_t fold, std::uint64_t train_seed) {
    FoldOutcome o;
    o.config_id = sample.config_id;
    o.fold = fold;
    o.train_seed = train_seed;

    models::TrainConfig cfg = sample.config;
    cfg.seed = train_seed;
    try {
        const auto model = models::train_on(
            models::gather_rows(ds.X, split.train), models::gather(ds.y, split.train),
            models::gather_rows(ds.X, split.val), models::gather(ds.y, split.val),
            sample.spec, cfg);
        o.val_accuracy = model.best_val_accuracy;
        o.best_epoch = model.best_epoch;
        o.stopped_epoch = model.stopped_epoch;
    } catch (const DivergedError&) {
        o.diverged = true;
        o.val_accuracy = 0.0;
    }
    return o;
}

/// Random search: sample n configs, train each on every fold, pick the
/// best mean validation accuracy (ties to the lowest config id), then and
/// only then evaluate that winner on the fold test sets.
inline SearchResult run_search(const dataset::LabeledDataset& ds,
                               const std::vector<dataset::FoldSplit>& folds,
                               const HyperparameterSpace& space, const SearchOptions& options) {
    if (options.n_samples == 0) throw InvalidInputError("run_search: need n_samples >= 1");
    if (folds.empty()) throw InvalidInputError("run_search: need at least one fold");
    const std::size_t n_workers = std::max<std::size_t>(1, options.n_workers);

    SearchResult result;
    result.configs.resize(options.n_samples);
    for (std::size_t i = 0; i < options.n_samples; ++i) {
        result.configs[i].sample =
            sample_config(space, ds.n_features(), ds.n_classes(), i,
                          derive_seed(options.seed, "config", i));
        result.configs[i].folds.resize(folds.size());
    }

    std::map<std::pair<std::size_t, std::size_t>, detail::LoggedOutcome> logged;
    if (!options.log_path.empty()) logged = detail::load_log(options.log_path);

    // Flat job list; completed (config, fold) pairs from the log are reused
    // after their fingerprint confirms the config is the same draw.
    struct Job {
        std::size_t config = 0, fold = 0;
    };
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < options.n_samples; ++i)
        for (std::size_t f = 0; f < folds.size(); ++f) {
            const auto it = logged.find({i, f});
            if (it != logged.end()) {
                if (it->second.fingerprint != result.configs[i].sample.fingerprint())
                    throw ChecksumMismatchError(
                        "search log entry (config " + std::to_string(i) + ", fold " +
                        std::to_string(f) + ") was sampled from a different space or seed");
                result.configs[i].folds[f] = it->second.outcome;
            } else {
                jobs.push_back({i, f});
            }
        }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t k = next.fetch_add(1);
            if (k >= jobs.size()) return;
            const auto [ci, fi] = jobs[k];
            result.configs[ci].folds[fi] =
                run_fold_job(ds, folds[fi], result.configs[ci].sample, fi,
                             derive_seed(options.seed, "train", ci, fi));
        }
    };
    if (n_workers == 1 || jobs.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < std::min(n_workers, jobs.size()); ++w)
            pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // Deterministic reduction in config-id order.
    double best_mean = -1.0;
    bool any_ok = false;
    for (std::size_t i = 0; i < options.n_samples; ++i) {
        auto& cr = result.configs[i];
        double sum = 0.0;
        for (const auto& o : cr.folds) {
            cr.diverged = cr.diverged || o.diverged;
            sum += o.val_accuracy;
        }
        cr.mean_val_accuracy =
            cr.diverged ? std::numeric_limits<double>::quiet_NaN()
                        : sum / static_cast<double>(cr.folds.size());
        if (!cr.diverged && cr.mean_val_accuracy > best_mean) {
            best_mean = cr.mean_val_accuracy;
            result.winner_id = i;
            any_ok = true;
        }
    }
    if (!any_ok) throw SearchFailedError("every sampled configuration diverged");

    if (!options.log_path.empty()) {
        std::ofstream f(options.log_path, std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + options.log_path.string());
        for (const auto& cr : result.configs)
            for (const auto& o : cr.folds)
                f << detail::outcome_to_json(o, cr.sample.fingerprint()).dump() << '\n';
        if (!f) throw IoError("short write: " + options.log_path.string());
    }

    // Winner test evaluation. Retraining reproduces the search-time model
    // exactly (same seed, same data), so no models need to be cached above.
    const auto& winner = result.configs[result.winner_id].sample;
    std::vector<metrics::ConfusionSummary> parts;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        models::TrainConfig cfg = winner.config;
        cfg.seed = derive_seed(options.seed, "train", result.winner_id, f);
        const auto model = models::train_on(
            models::gather_rows(ds.X, folds[f].train), models::gather(ds.y, folds[f].train),
            models::gather_rows(ds.X, folds[f].val), models::gather(ds.y, folds[f].val),
            winner.spec, cfg);
        const auto x_test = models::gather_rows(ds.X, folds[f].test);
        const auto y_test = models::gather(ds.y, folds[f].test);
        const auto probs = models::predict_proba(model.params, winner.spec, x_test);
        result.winner_test_accuracy.push_back(
            models::fraction_correct(models::argmax_rows(probs), y_test));
        parts.push_back(metrics::soft_confusion(probs, y_test, ds.class_names));
        result.winner_models.push_back(model);
    }
    result.winner_confusion = metrics::merge_confusions(parts);
    result.winner_mean_test_accuracy = stats::mean(result.winner_test_accuracy);
    return result;
}

}  // namespace cvdecode::search
