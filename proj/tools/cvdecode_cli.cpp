// Command-line front end: seeded, reproducible runs of the decoding
// pipeline. Every command writes its outputs plus a manifest.json into
// --out; failures print one machine-readable JSON object on stderr and
// exit nonzero.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <utility>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cvdecode/cvdecode.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cvdecode;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<double> split_csv_doubles(const std::string& s) {
    std::vector<double> out;
    for (const auto& tok : split_csv(s)) out.push_back(std::stod(tok));
    return out;
}

struct CommonOpts {
    std::uint64_t seed = 0;
    std::string out;
    std::size_t workers = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--seed", opts.seed, "run seed; all stage seeds derive from it");
    cmd->add_option("--out", opts.out, "output directory")->required();
    cmd->add_option("--workers", opts.workers, "worker thread count")
        ->envname("CVDECODE_WORKERS");
}

/// Checksum every file under the run directory (except the manifest
/// itself) and write manifest.json recording the full configuration.
void write_manifest(const fs::path& out_dir, const std::string& command, const json& config) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(out_dir))
        if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
            files.push_back(fs::relative(entry.path(), out_dir));
    std::sort(files.begin(), files.end());

    json manifest;
    manifest["tool"] = "cvdecode";
    manifest["version"] = kVersion;
    manifest["command"] = command;
    manifest["config"] = config;
    json outputs = json::object();
    for (const auto& rel : files)
        outputs[rel.generic_string()] = io::file_checksum_hex(out_dir / rel);
    manifest["outputs"] = std::move(outputs);
    io::save_json(out_dir / "manifest.json", manifest);
}

/// Load features from either a saved dataset or a saved tensor; tensors
/// are rasterized here with the task projection applied to their labels.
dataset::LabeledDataset load_features(const std::string& input, const std::string& band_csv,
                                      const std::string& task_name,
                                      std::size_t min_class_count) {
    if (fs::exists(fs::path(input) / "dataset.json")) return io::load_dataset(input);
    if (!fs::exists(fs::path(input) / "tensor.json"))
        throw IoError("input needs dataset.json or tensor.json: " + input);
    const auto tensor = io::load_tensor(input);
    if (tensor.labels.empty())
        throw InvalidInputError("tensor at " + input + " carries no trial labels");
    const auto task = labels::task_from_string(task_name);
    const auto task_labels = labels::derive_task_labels(tensor.labels, task);
    return dataset::make_dataset(tensor, task_labels, split_csv(band_csv), {}, {},
                                 min_class_count);
}

// -------------------------------------------------------------------------
// synth
// -------------------------------------------------------------------------

struct SynthOpts {
    CommonOpts common;
    std::size_t trials = 30;
    std::size_t electrodes = 24;
    double snr = 3.0;
    double coupling = 0.6;
    double noise_sd = 1.0;
    double pre_s = -0.5;
    double post_s = 0.8;
    std::string bands = "high_gamma";
    bool filter_channels = false;
};

void cmd_synth(const SynthOpts& o) {
    synth::SynthConfig cfg;
    cfg.trials_per_class = o.trials;
    cfg.n_electrodes = o.electrodes;
    cfg.snr = o.snr;
    cfg.coupling = o.coupling;
    cfg.band_noise_sd = o.noise_sd;
    cfg.window_pre_s = o.pre_s;
    cfg.window_post_s = o.post_s;
    cfg.band_channels = split_csv(o.bands);
    cfg.include_filter_channels = o.filter_channels;
    cfg.seed = o.common.seed;
    cfg.validate();

    const auto result = synth::synth_generate(cfg);
    const fs::path out = o.common.out;
    fs::create_directories(out);
    io::save_tensor(out / "tensor", result.tensor);
    io::save_truth(out / "truth.json", result.truth);

    write_manifest(out, "synth",
                   {{"seed", o.common.seed},
                    {"trials_per_class", o.trials},
                    {"n_electrodes", o.electrodes},
                    {"snr", o.snr},
                    {"coupling", o.coupling},
                    {"band_noise_sd", o.noise_sd},
                    {"window_pre_s", o.pre_s},
                    {"window_post_s", o.post_s},
                    {"bands", split_csv(o.bands)},
                    {"filter_channels", o.filter_channels}});
}

// -------------------------------------------------------------------------
// preprocess
// -------------------------------------------------------------------------

struct PreprocessOpts {
    CommonOpts common;
    std::string input;
    std::string bands = "theta,alpha,low_beta,high_beta,gamma,high_gamma,beta_aggregate";
    bool with_filters = false;
    double pre_s = -0.5;
    double post_s = 0.8;
    double edge_fraction = 0.04;
};

void cmd_preprocess(const PreprocessOpts& o) {
    const auto loaded = io::load_raw(o.input);
    const auto bank = signal::default_filter_bank();

    auto referenced = signal::common_average_reference(loaded.recording);
    auto [clean, kept] = signal::drop_bad_channels(referenced);
    auto filters = signal::analytic_amplitude(clean, bank);
    filters = signal::zscore_to_baseline(std::move(filters), clean.baseline_window);

    std::vector<signal::AmplitudeChannel> channels;
    for (const auto& name : split_csv(o.bands)) {
        const auto band = signal::band_by_name(name);
        channels.push_back(
            signal::downsample_band(signal::aggregate_bands(filters, bank, band),
                                    band.center_hz()));
    }
    if (o.with_filters)
        for (std::size_t k = 0; k < filters.size(); ++k)
            channels.push_back(
                signal::downsample_band(filters[k], bank.filters[k].center_hz));

    auto tensor = signal::extract_trials(channels, clean.event_times_s,
                                         {o.pre_s, o.post_s});
    tensor = signal::edge_mean_subtract(std::move(tensor), o.edge_fraction);
    tensor.labels = loaded.event_labels;

    const fs::path out = o.common.out;
    fs::create_directories(out);
    io::save_tensor(out / "tensor", tensor);
    io::save_json(out / "channels.json",
                  {{"kept_electrodes", kept},
                   {"n_trials", tensor.n_trials()},
                   {"bands", split_csv(o.bands)},
                   {"with_filters", o.with_filters}});

    write_manifest(out, "preprocess",
                   {{"seed", o.common.seed},
                    {"input", o.input},
                    {"bands", split_csv(o.bands)},
                    {"with_filters", o.with_filters},
                    {"window_pre_s", o.pre_s},
                    {"window_post_s", o.post_s},
                    {"edge_fraction", o.edge_fraction}});
}

// -------------------------------------------------------------------------
// train
// -------------------------------------------------------------------------

struct TrainOpts {
    CommonOpts common;
    std::string input;
    std::string band;
    std::string task = "cv";
    std::size_t folds = 10;
    std::size_t fold = 0;
    std::string hidden;  // comma-separated dims; empty = logistic regression
    std::string nonlinearity = "relu";
    std::size_t epochs = 50;
    std::size_t batch = 32;
    double lr = 0.05;
    double input_dropout = 0.0;
    double hidden_dropout = 0.0;
    double weight_decay = 1e-4;
    std::size_t min_class_count = 10;
};

void cmd_train(const TrainOpts& o) {
    const auto ds = load_features(o.input, o.band, o.task, o.min_class_count);
    const auto folds = dataset::stratified_folds(ds.y, o.folds, o.common.seed);
    if (o.fold >= folds.size()) throw InvalidInputError("train: fold index out of range");
    const auto& split = folds[o.fold];

    models::NetworkSpec spec;
    spec.input_dim = ds.n_features();
    spec.n_classes = ds.n_classes();
    for (const auto& tok : split_csv(o.hidden))
        spec.hidden_dims.push_back(static_cast<std::size_t>(std::stoul(tok)));
    spec.nonlinearity = models::nonlinearity_from_string(o.nonlinearity);

    models::TrainConfig cfg;
    cfg.max_epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.lr_init = o.lr;
    cfg.lr_min = o.lr * 1e-3;
    cfg.lr_decay = 0.95;
    cfg.input_dropout_rate = o.input_dropout;
    cfg.hidden_dropout_rate = o.hidden_dropout;
    cfg.weight_decay = o.weight_decay;
    cfg.max_filter_norm = -1.0;
    cfg.seed = derive_seed(o.common.seed, "train", 0, o.fold);

    const auto model = models::train(split, ds, spec, cfg);
    const auto x_test = models::gather_rows(ds.X, split.test);
    const auto y_test = models::gather(ds.y, split.test);
    const double test_accuracy = models::fraction_correct(
        models::predict(model.params, spec, x_test), y_test);

    const fs::path out = o.common.out;
    fs::create_directories(out);
    io::save_model(out / "model", model, cfg);
    json trace = json::array();
    for (const auto& rec : model.trace)
        trace.push_back({{"train_loss", rec.train_loss}, {"val_accuracy", rec.val_accuracy}});
    io::save_json(out / "train.json", {{"fold", o.fold},
                                       {"n_features", ds.n_features()},
                                       {"n_classes", ds.n_classes()},
                                       {"class_names", ds.class_names},
                                       {"best_epoch", model.best_epoch},
                                       {"stopped_epoch", model.stopped_epoch},
                                       {"best_val_accuracy", model.best_val_accuracy},
                                       {"test_accuracy", test_accuracy},
                                       {"trace", trace}});

    write_manifest(out, "train",
                   {{"seed", o.common.seed},
                    {"input", o.input},
                    {"band", split_csv(o.band)},
                    {"task", o.task},
                    {"folds", o.folds},
                    {"fold", o.fold},
                    {"hidden", split_csv(o.hidden)},
                    {"nonlinearity", o.nonlinearity},
                    {"epochs", o.epochs},
                    {"batch", o.batch},
                    {"lr", o.lr},
                    {"input_dropout", o.input_dropout},
                    {"hidden_dropout", o.hidden_dropout},
                    {"weight_decay", o.weight_decay},
                    {"min_class_count", o.min_class_count}});
}

// -------------------------------------------------------------------------
// search
// -------------------------------------------------------------------------

struct SearchOpts {
    CommonOpts common;
    std::string input;
    std::string band;
    std::string task = "cv";
    std::size_t folds = 10;
    std::size_t budget = 50;
    bool logistic = false;
    std::size_t min_class_count = 10;
};

void cmd_search(const SearchOpts& o) {
    const auto ds = load_features(o.input, o.band, o.task, o.min_class_count);
    const auto folds = dataset::stratified_folds(ds.y, o.folds, o.common.seed);
    const auto space = search::HyperparameterSpace::standard(ds.n_classes(), !o.logistic);

    const fs::path out = o.common.out;
    fs::create_directories(out);
    search::SearchOptions opts;
    opts.n_samples = o.budget;
    opts.seed = o.common.seed;
    opts.n_workers = o.common.workers;
    opts.log_path = out / "search_log.jsonl";
    const auto result = search::run_search(ds, folds, space, opts);

    json configs = json::array();
    for (const auto& cr : result.configs) {
        json fold_accs = json::array();
        for (const auto& f : cr.folds) fold_accs.push_back(f.val_accuracy);
        configs.push_back({{"id", cr.sample.config_id},
                           {"values", cr.sample.values},
                           {"enums", cr.sample.enums},
                           {"fold_val_accuracies", std::move(fold_accs)},
                           {"mean_val_accuracy",
                            cr.diverged ? json() : json(cr.mean_val_accuracy)},
                           {"diverged", cr.diverged}});
    }
    const auto counts = ds.class_counts();
    io::save_json(out / "search.json",
                  {{"format", "cvdecode.search.v1"},
                   {"task", o.task},
                   {"bands", split_csv(o.band)},
                   {"folds", o.folds},
                   {"budget", o.budget},
                   {"seed", o.common.seed},
                   {"n_features", ds.n_features()},
                   {"class_names", ds.class_names},
                   {"class_counts", counts},
                   {"configs", std::move(configs)},
                   {"winner",
                    {{"id", result.winner_id},
                     {"test_accuracy_per_fold", result.winner_test_accuracy},
                     {"mean_test_accuracy", result.winner_mean_test_accuracy}}}});
    io::save_confusion(out / "confusion.json", result.winner_confusion);

    // Pooled winner test predictions, fold order then row order.
    json probs = json::array();
    std::vector<int> y_pool;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const auto x_test = models::gather_rows(ds.X, folds[f].test);
        const auto p = models::predict_proba(result.winner_models[f].params,
                                             result.winner_models[f].spec, x_test);
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < p.cols(); ++c) row.push_back(p(r, c));
            probs.push_back(std::move(row));
        }
        const auto y_test = models::gather(ds.y, folds[f].test);
        y_pool.insert(y_pool.end(), y_test.begin(), y_test.end());
    }
    io::save_json(out / "predictions.json", {{"format", "cvdecode.predictions.v1"},
                                             {"class_names", ds.class_names},
                                             {"class_counts", counts},
                                             {"y", y_pool},
                                             {"probs", std::move(probs)}});
    for (std::size_t f = 0; f < result.winner_models.size(); ++f) {
        models::TrainConfig cfg = result.configs[result.winner_id].sample.config;
        cfg.seed = derive_seed(o.common.seed, "train", result.winner_id, f);
        io::save_model(out / "models" / ("fold_" + std::to_string(f)),
                       result.winner_models[f], cfg);
    }

    write_manifest(out, "search",
                   {{"seed", o.common.seed},
                    {"input", o.input},
                    {"band", split_csv(o.band)},
                    {"task", o.task},
                    {"folds", o.folds},
                    {"search_budget", o.budget},
                    {"logistic", o.logistic},
                    {"workers", o.common.workers},
                    {"min_class_count", o.min_class_count}});
}

// -------------------------------------------------------------------------
// evaluate / report
// -------------------------------------------------------------------------

struct EvaluateOpts {
    CommonOpts common;
    std::string input;
    double duration = 1.3;
    bool hard_counts = false;
    std::size_t chance_resamples = 200;
};

json evaluate_run(const EvaluateOpts& o) {
    const fs::path in = o.input;
    const auto cs = io::load_confusion(in / "confusion.json");
    const auto pred = io::load_json(in / "predictions.json");
    const std::string ctx = (in / "predictions.json").string();
    const auto class_names =
        io::detail::require<std::vector<std::string>>(pred, "class_names", ctx);
    const auto class_counts =
        io::detail::require<std::vector<std::size_t>>(pred, "class_counts", ctx);
    const auto y = io::detail::require<std::vector<int>>(pred, "y", ctx);
    const auto probs = io::matrix_from_json(io::detail::require<json>(pred, "probs", ctx), ctx);
    if (probs.rows() != y.size() || probs.cols() != class_names.size())
        throw ShapeMismatchError(ctx + ": probability matrix shape mismatch");

    std::vector<int> predicted(probs.rows());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        int best = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c)
            if (probs(r, c) > probs(r, best)) best = static_cast<int>(c);
        predicted[r] = best;
    }
    const double accuracy = models::fraction_correct(predicted, y);
    const auto chance = metrics::chance_accuracy(class_counts, y, o.chance_resamples,
                                                 o.common.seed);
    const auto report = metrics::build_channel_report(cs, accuracy, o.duration, o.hard_counts);

    json out;
    out["accuracy"] = accuracy;
    out["n_test_trials"] = y.size();
    out["n_classes"] = class_names.size();
    out["chance_mean"] = chance.mean;
    out["chance_sem"] = chance.sem();
    out["accuracy_over_chance"] = accuracy / chance.mean;
    out["mutual_information_bits"] = report.mutual_information_bits;
    out["capacity_bits"] = report.capacity_bits;
    out["wolpaw_bits"] = report.wolpaw_bits;
    out["itr_bits_per_s"] = report.itr_bits_per_s;
    out["symbol_duration_s"] = o.duration;
    out["hard_counts"] = o.hard_counts;

    // Coarser-task accuracies apply only when classes are CV syllables.
    bool cv_classes = true;
    for (const auto& name : class_names) {
        try {
            labels::parse_cv(name);
        } catch (const UnknownLabelError&) {
            cv_classes = false;
            break;
        }
    }
    if (cv_classes) {
        std::vector<std::string> pred_names, true_names;
        for (std::size_t i = 0; i < y.size(); ++i) {
            pred_names.push_back(class_names[static_cast<std::size_t>(predicted[i])]);
            true_names.push_back(class_names[static_cast<std::size_t>(y[i])]);
        }
        json restricted = json::object();
        for (auto task : {labels::Task::consonant, labels::Task::vowel, labels::Task::major,
                          labels::Task::location, labels::Task::degree}) {
            const auto r = metrics::restrict_to_task(pred_names, true_names, task);
            restricted[labels::to_string(task)] = {{"accuracy", r.accuracy},
                                                   {"retained", r.retained},
                                                   {"excluded", r.excluded}};
        }
        out["restricted"] = std::move(restricted);
    }
    return out;
}

void cmd_evaluate(const EvaluateOpts& o) {
    const auto result = evaluate_run(o);
    const fs::path out = o.common.out;
    fs::create_directories(out);
    io::save_json(out / "evaluation.json", result);
    write_manifest(out, "evaluate",
                   {{"seed", o.common.seed},
                    {"input", o.input},
                    {"duration", o.duration},
                    {"hard_counts", o.hard_counts},
                    {"chance_resamples", o.chance_resamples}});
}

void cmd_report(const EvaluateOpts& o) {
    const auto result = evaluate_run(o);
    const fs::path out = o.common.out;
    fs::create_directories(out);
    io::save_json(out / "report.json", result);

    std::vector<std::vector<std::string>> rows;
    auto add = [&rows](const std::string& metric, double v) {
        rows.push_back({metric, io::fmt(v)});
    };
    add("accuracy", result.at("accuracy").get<double>());
    add("chance_accuracy", result.at("chance_mean").get<double>());
    add("accuracy_over_chance", result.at("accuracy_over_chance").get<double>());
    add("wolpaw_capacity_bits", result.at("wolpaw_bits").get<double>());
    add("exact_capacity_bits", result.at("capacity_bits").get<double>());
    add("mutual_information_bits", result.at("mutual_information_bits").get<double>());
    add("itr_bits_per_s", result.at("itr_bits_per_s").get<double>());
    io::write_tsv(out / "summary.tsv", {"metric", "value"}, rows);

    const auto search_path = fs::path(o.input) / "search.json";
    if (fs::exists(search_path)) {
        const auto sj = io::load_json(search_path);
        if (sj.contains("winner") && sj["winner"].contains("test_accuracy_per_fold")) {
            std::vector<std::vector<std::string>> fold_rows;
            const auto accs =
                sj["winner"]["test_accuracy_per_fold"].get<std::vector<double>>();
            for (std::size_t f = 0; f < accs.size(); ++f)
                fold_rows.push_back({std::to_string(f), io::fmt(accs[f])});
            io::write_tsv(out / "folds.tsv", {"fold", "test_accuracy"}, fold_rows);
        }
    }

    write_manifest(out, "report",
                   {{"seed", o.common.seed},
                    {"input", o.input},
                    {"duration", o.duration},
                    {"hard_counts", o.hard_counts},
                    {"chance_resamples", o.chance_resamples}});
}

// -------------------------------------------------------------------------
// cluster
// -------------------------------------------------------------------------

struct ClusterOpts {
    CommonOpts common;
    std::string input;
    std::string truth;
    double cutoff = -1.0;  // <0 = knee heuristic
    std::string metric = "euclidean";
};

void cmd_cluster(const ClusterOpts& o) {
    const auto cs = io::load_confusion(fs::path(o.input) / "confusion.json");
    const auto dendro = cluster::ward_cluster(cs.soft, cs.classes);
    const double knee = cluster::knee_cutoff(dendro);
    const double cutoff = o.cutoff >= 0.0 ? o.cutoff : knee;
    const auto assignment = cluster::clusters_at_cutoff(dendro, cutoff);
    const auto curve = cluster::cluster_count_curve(dendro);

    const fs::path out = o.common.out;
    fs::create_directories(out);
    io::save_dendrogram(out / "dendrogram.json", dendro);

    json clusters;
    clusters["cutoff"] = cutoff;
    clusters["knee_cutoff"] = knee;
    clusters["cutoff_overridden"] = o.cutoff >= 0.0;
    clusters["n_clusters"] =
        static_cast<std::size_t>(*std::max_element(assignment.begin(), assignment.end())) + 1;
    json assign = json::object();
    for (std::size_t i = 0; i < cs.classes.size(); ++i)
        assign[cs.classes[i]] = assignment[i];
    clusters["assignments"] = std::move(assign);

    if (!o.truth.empty()) {
        const auto truth = io::load_truth(o.truth);
        std::map<std::string, std::size_t> truth_index;
        for (std::size_t i = 0; i < truth.class_labels.size(); ++i)
            truth_index[truth.class_labels[i]] = i;
        auto group_ids = [&](const std::vector<std::string>& group_of_class) {
            std::vector<int> ids;
            std::map<std::string, int> renumber;
            for (const auto& cls : cs.classes) {
                const auto it = truth_index.find(cls);
                if (it == truth_index.end())
                    throw UnknownLabelError("class '" + cls + "' missing from ground truth");
                const auto& g = group_of_class[it->second];
                auto rit = renumber.find(g);
                if (rit == renumber.end())
                    rit = renumber.emplace(g, static_cast<int>(renumber.size())).first;
                ids.push_back(rit->second);
            }
            return ids;
        };
        clusters["ari_top"] =
            cluster::adjusted_rand_index(assignment, group_ids(truth.top_of_class));
        clusters["ari_mid"] =
            cluster::adjusted_rand_index(assignment, group_ids(truth.mid_of_class));
    }
    io::save_json(out / "clusters.json", clusters);

    std::vector<std::vector<std::string>> curve_rows;
    for (const auto& [d, n] : curve)
        curve_rows.push_back({io::fmt(d), std::to_string(n)});
    io::write_tsv(out / "count_curve.tsv", {"cutoff", "n_clusters"}, curve_rows);

    // Distance correlations against each articulatory feature block; only
    // defined when the classes are CV syllables.
    bool cv_classes = true;
    for (const auto& name : cs.classes) {
        try {
            labels::parse_cv(name);
        } catch (const UnknownLabelError&) {
            cv_classes = false;
            break;
        }
    }
    if (cv_classes) {
        const auto metric = o.metric == "sqeuclidean" ? cluster::Metric::sqeuclidean
                                                      : cluster::Metric::euclidean;
        const auto dist = cluster::pairwise_distances(cs.soft, metric);
        json blocks = json::object();
        for (const std::string block : {"major", "location", "degree", "vowel"}) {
            const auto dc = cluster::articulatory_distance_correlation(dist, cs.classes, block);
            blocks[block] = {{"per_cv", dc.per_cv},
                             {"retained", dc.retained},
                             {"excluded", dc.excluded},
                             {"median", stats::median(dc.per_cv)}};
        }
        io::save_json(out / "distance_correlation.json", blocks);
    }

    write_manifest(out, "cluster",
                   {{"seed", o.common.seed},
                    {"input", o.input},
                    {"truth", o.truth},
                    {"cutoff", o.cutoff},
                    {"metric", o.metric}});
}

// -------------------------------------------------------------------------
// xfreq
// -------------------------------------------------------------------------

struct XfreqOpts {
    CommonOpts common;
    std::string input;
    std::string truth;
    double window_lo = xfreq::kPowerWindowLo;
    double window_hi = xfreq::kPowerWindowHi;
    std::size_t bins = 40;
    std::size_t power_bins = 9;
};

void cmd_xfreq(const XfreqOpts& o) {
    const auto tensor = io::load_tensor(o.input);
    if (tensor.labels.empty())
        throw InvalidInputError("xfreq: tensor carries no trial labels");
    const auto avg_result = signal::trial_average(tensor, tensor.labels);
    const auto& avg = avg_result.average;

    const auto split = xfreq::activity_split(avg, xfreq::kHighGammaName, xfreq::kBetaName,
                                             o.window_lo, o.window_hi);
    const auto all_spectrum = xfreq::band_hg_correlation(avg);
    const auto [active_spectrum, inactive_spectrum] =
        xfreq::split_correlation_spectra(avg, split);
    const auto histograms = xfreq::hg_beta_histogram(split, o.bins);
    const auto curve = xfreq::binned_power_correlation(split.power, split.corr, o.power_bins);

    const fs::path out = o.common.out;
    fs::create_directories(out);

    json summary;
    summary["threshold"] = split.threshold;
    summary["slope"] = split.slope;
    summary["intercept"] = split.intercept;
    summary["n_fit_points"] = split.n_fit_points;
    summary["n_units"] = split.power.size();
    const auto n_active =
        static_cast<std::size_t>(std::count(split.active.begin(), split.active.end(), true));
    summary["n_active"] = n_active;
    summary["n_inactive"] = split.power.size() - n_active;
    summary["window_lo_s"] = o.window_lo;
    summary["window_hi_s"] = o.window_hi;

    if (!o.truth.empty()) {
        const auto truth = io::load_truth(o.truth);
        std::map<std::string, std::size_t> truth_index;
        for (std::size_t i = 0; i < truth.class_labels.size(); ++i)
            truth_index[truth.class_labels[i]] = i;
        std::size_t agree = 0, total = 0;
        for (std::size_t c = 0; c < avg.n_classes(); ++c) {
            const auto it = truth_index.find(avg.class_labels[c]);
            if (it == truth_index.end())
                throw UnknownLabelError("class '" + avg.class_labels[c] +
                                        "' missing from ground truth");
            for (std::size_t e = 0; e < avg.n_electrodes(); ++e) {
                agree += split.unit_active(c, e) == truth.active(it->second, e);
                ++total;
            }
        }
        summary["truth_agreement"] =
            static_cast<double>(agree) / static_cast<double>(total);
    }
    io::save_json(out / "xfreq.json", summary);

    std::vector<std::vector<std::string>> spec_rows;
    auto add_spectrum = [&spec_rows](const xfreq::CorrelationSpectrum& s) {
        for (std::size_t k = 0; k < s.filter_names.size(); ++k)
            spec_rows.push_back({s.group, s.filter_names[k], io::fmt(s.center_hz[k]),
                                 io::fmt(s.mean[k]), io::fmt(s.sem[k]),
                                 std::to_string(s.n_units[k])});
    };
    add_spectrum(all_spectrum);
    add_spectrum(active_spectrum);
    add_spectrum(inactive_spectrum);
    io::write_tsv(out / "spectrum.tsv", {"group", "filter", "center_hz", "mean", "sem", "n"},
                  spec_rows);

    auto hist_rows = [](const metrics::Histogram& h) {
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < h.counts.size(); ++i)
            rows.push_back({io::fmt(h.edges[i]), io::fmt(h.edges[i + 1]),
                            std::to_string(h.counts[i])});
        return rows;
    };
    io::write_tsv(out / "histogram_corr.tsv", {"lo", "hi", "count"},
                  hist_rows(histograms.correlation));
    io::write_tsv(out / "histogram_power.tsv", {"lo", "hi", "count"},
                  hist_rows(histograms.power));

    std::vector<std::vector<std::string>> curve_rows;
    for (std::size_t b = 0; b < curve.mean_power.size(); ++b)
        curve_rows.push_back({io::fmt(curve.mean_power[b]), io::fmt(curve.mean_corr[b]),
                              io::fmt(curve.sem_corr[b]), std::to_string(curve.counts[b])});
    io::write_tsv(out / "power_curve.tsv", {"mean_power", "mean_corr", "sem_corr", "n"},
                  curve_rows);

    std::vector<std::vector<std::string>> scatter_rows;
    for (std::size_t c = 0; c < avg.n_classes(); ++c)
        for (std::size_t e = 0; e < avg.n_electrodes(); ++e) {
            const std::size_t u = c * avg.n_electrodes() + e;
            scatter_rows.push_back({avg.class_labels[c], std::to_string(e),
                                    io::fmt(split.power[u]), io::fmt(split.corr[u]),
                                    split.active[u] ? "1" : "0"});
        }
    io::write_tsv(out / "scatter.tsv", {"class", "electrode", "power", "corr", "active"},
                  scatter_rows);

    write_manifest(out, "xfreq",
                   {{"seed", o.common.seed},
                    {"input", o.input},
                    {"truth", o.truth},
                    {"window_lo_s", o.window_lo},
                    {"window_hi_s", o.window_hi},
                    {"bins", o.bins},
                    {"power_bins", o.power_bins}});
}

// -------------------------------------------------------------------------
// scaling
// -------------------------------------------------------------------------

struct ScalingOpts {
    CommonOpts common;
    std::string input;
    std::string band;
    std::string task = "cv";
    std::size_t folds = 10;
    std::string fractions = "0.25,0.5,0.75,1";
    std::string hidden;
    std::size_t min_class_count = 10;
};

void cmd_scaling(const ScalingOpts& o) {
    const auto ds = load_features(o.input, o.band, o.task, o.min_class_count);
    const auto folds = dataset::stratified_folds(ds.y, o.folds, o.common.seed);
    const auto fractions = split_csv_doubles(o.fractions);
    if (fractions.empty()) throw InvalidInputError("scaling: no fractions given");

    models::NetworkSpec spec;
    spec.input_dim = ds.n_features();
    spec.n_classes = ds.n_classes();
    for (const auto& tok : split_csv(o.hidden))
        spec.hidden_dims.push_back(static_cast<std::size_t>(std::stoul(tok)));

    std::vector<std::pair<double, double>> points;
    json detail_rows = json::array();
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        for (std::size_t f = 0; f < folds.size(); ++f) {
            const auto sub = dataset::subsample_training(
                folds[f], ds.y, fractions[fi], derive_seed(o.common.seed, "scaling", fi, f));
            auto cfg = metrics::timepoint_train_config(
                derive_seed(o.common.seed, "scaling-train", fi, f));
            const auto model = models::train(sub, ds, spec, cfg);
            const auto x_test = models::gather_rows(ds.X, sub.test);
            const double acc = models::fraction_correct(
                models::predict(model.params, spec, x_test), models::gather(ds.y, sub.test));
            points.emplace_back(static_cast<double>(sub.train.size()), acc);
            detail_rows.push_back({{"fraction", fractions[fi]},
                                   {"fold", f},
                                   {"n_train", sub.train.size()},
                                   {"test_accuracy", acc}});
        }
    }
    const auto slope = metrics::scaling_slope(points);

    const fs::path out = o.common.out;
    fs::create_directories(out);
    io::save_json(out / "scaling.json", {{"points", detail_rows},
                                         {"slope_per_1000", slope.slope_per_1000},
                                         {"stderr_per_1000", slope.stderr_per_1000}});
    std::vector<std::vector<std::string>> rows;
    for (const auto& [n, acc] : points)
        rows.push_back({io::fmt(n), io::fmt(acc)});
    io::write_tsv(out / "scaling.tsv", {"n_train", "test_accuracy"}, rows);

    write_manifest(out, "scaling",
                   {{"seed", o.common.seed},
                    {"input", o.input},
                    {"band", split_csv(o.band)},
                    {"task", o.task},
                    {"folds", o.folds},
                    {"fractions", fractions},
                    {"hidden", split_csv(o.hidden)},
                    {"min_class_count", o.min_class_count}});
}

// -------------------------------------------------------------------------
// timepoint
// -------------------------------------------------------------------------

struct TimepointOpts {
    CommonOpts common;
    std::string input;
    std::string band = "high_gamma";
    std::string task = "cv";
    std::size_t folds = 5;
};

void cmd_timepoint(const TimepointOpts& o) {
    const auto tensor = io::load_tensor(o.input);
    if (tensor.labels.empty())
        throw InvalidInputError("timepoint: tensor carries no trial labels");
    const auto& band = tensor.band(o.band);
    const auto task = labels::task_from_string(o.task);
    const auto task_labels = labels::derive_task_labels(tensor.labels, task);

    // Trials excluded by the task projection are dropped from the band copy.
    std::vector<std::size_t> keep;
    for (std::size_t t = 0; t < task_labels.size(); ++t)
        if (task_labels[t] != labels::kExcludedLabel) keep.push_back(t);
    if (keep.empty()) throw UndefinedTaskError("timepoint: every trial excluded by task");

    std::vector<std::string> class_names;
    {
        std::set<std::string> distinct;
        for (auto t : keep) distinct.insert(task_labels[t]);
        class_names.assign(distinct.begin(), distinct.end());
    }
    std::map<std::string, int> class_index;
    for (std::size_t i = 0; i < class_names.size(); ++i)
        class_index[class_names[i]] = static_cast<int>(i);
    std::vector<int> y;
    for (auto t : keep) y.push_back(class_index.at(task_labels[t]));

    signal::TensorBand kept_band;
    kept_band.name = band.name;
    kept_band.center_hz = band.center_hz;
    kept_band.rate_hz = band.rate_hz;
    kept_band.nominal_rate_hz = band.nominal_rate_hz;
    kept_band.t_start_s = band.t_start_s;
    kept_band.values = Array3(keep.size(), band.values.dim1(), band.n_time());
    for (std::size_t i = 0; i < keep.size(); ++i)
        for (std::size_t e = 0; e < band.values.dim1(); ++e)
            std::copy(band.values.slice(keep[i], e), band.values.slice(keep[i], e) + band.n_time(),
                      kept_band.values.slice(i, e));

    const auto folds = dataset::stratified_folds(y, o.folds, o.common.seed);
    const auto acc = metrics::timepoint_decoding(kept_band, y, class_names.size(), folds,
                                                 o.common.seed);

    const fs::path out = o.common.out;
    fs::create_directories(out);
    const auto axis = kept_band.time_axis();
    std::vector<std::vector<std::string>> rows;
    for (std::size_t k = 0; k < acc.size(); ++k)
        rows.push_back({io::fmt(axis[k]), io::fmt(acc[k])});
    io::write_tsv(out / "timepoint.tsv", {"time_s", "accuracy"}, rows);
    io::save_json(out / "timepoint.json", {{"band", o.band},
                                           {"task", o.task},
                                           {"rate_hz", kept_band.rate_hz},
                                           {"t_start_s", kept_band.t_start_s},
                                           {"n_classes", class_names.size()},
                                           {"accuracies", acc}});

    write_manifest(out, "timepoint",
                   {{"seed", o.common.seed},
                    {"input", o.input},
                    {"band", o.band},
                    {"task", o.task},
                    {"folds", o.folds}});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural CV-syllable decoding toolkit"};
    app.require_subcommand(1);

    SynthOpts synth_opts;
    auto* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic tensor");
    add_common(synth_cmd, synth_opts.common);
    synth_cmd->add_option("--trials-per-class", synth_opts.trials);
    synth_cmd->add_option("--electrodes", synth_opts.electrodes);
    synth_cmd->add_option("--snr", synth_opts.snr);
    synth_cmd->add_option("--coupling", synth_opts.coupling);
    synth_cmd->add_option("--noise-sd", synth_opts.noise_sd);
    synth_cmd->add_option("--pre", synth_opts.pre_s);
    synth_cmd->add_option("--post", synth_opts.post_s);
    synth_cmd->add_option("--bands", synth_opts.bands);
    synth_cmd->add_flag("--filter-channels", synth_opts.filter_channels);

    PreprocessOpts pre_opts;
    auto* pre_cmd =
        app.add_subcommand("preprocess", "raw voltages to a z-scored amplitude tensor");
    add_common(pre_cmd, pre_opts.common);
    pre_cmd->add_option("--input", pre_opts.input)->required();
    pre_cmd->add_option("--bands", pre_opts.bands);
    pre_cmd->add_flag("--with-filters", pre_opts.with_filters);
    pre_cmd->add_option("--pre", pre_opts.pre_s);
    pre_cmd->add_option("--post", pre_opts.post_s);
    pre_cmd->add_option("--edge-fraction", pre_opts.edge_fraction);

    TrainOpts train_opts;
    auto* train_cmd = app.add_subcommand("train", "train one network on one fold");
    add_common(train_cmd, train_opts.common);
    train_cmd->add_option("--input", train_opts.input)->required();
    train_cmd->add_option("--band", train_opts.band);
    train_cmd->add_option("--task", train_opts.task);
    train_cmd->add_option("--folds", train_opts.folds);
    train_cmd->add_option("--fold", train_opts.fold);
    train_cmd->add_option("--hidden", train_opts.hidden);
    train_cmd->add_option("--nonlinearity", train_opts.nonlinearity);
    train_cmd->add_option("--epochs", train_opts.epochs);
    train_cmd->add_option("--batch", train_opts.batch);
    train_cmd->add_option("--lr", train_opts.lr);
    train_cmd->add_option("--input-dropout", train_opts.input_dropout);
    train_cmd->add_option("--hidden-dropout", train_opts.hidden_dropout);
    train_cmd->add_option("--weight-decay", train_opts.weight_decay);
    train_cmd->add_option("--min-class-count", train_opts.min_class_count);

    SearchOpts search_opts;
    auto* search_cmd =
        app.add_subcommand("search", "random hyperparameter search with winner evaluation");
    add_common(search_cmd, search_opts.common);
    search_cmd->add_option("--input", search_opts.input)->required();
    search_cmd->add_option("--band", search_opts.band);
    search_cmd->add_option("--task", search_opts.task);
    search_cmd->add_option("--folds", search_opts.folds);
    search_cmd->add_option("--search-budget", search_opts.budget);
    search_cmd->add_flag("--logistic", search_opts.logistic);
    search_cmd->add_option("--min-class-count", search_opts.min_class_count);

    EvaluateOpts eval_opts;
    auto* eval_cmd =
        app.add_subcommand("evaluate", "information metrics from stored predictions");
    add_common(eval_cmd, eval_opts.common);
    eval_cmd->add_option("--input", eval_opts.input)->required();
    eval_cmd->add_option("--duration", eval_opts.duration);
    eval_cmd->add_flag("--hard-counts", eval_opts.hard_counts);
    eval_cmd->add_option("--chance-resamples", eval_opts.chance_resamples);

    EvaluateOpts report_opts;
    auto* report_cmd = app.add_subcommand("report", "summary table and plot data for a run");
    add_common(report_cmd, report_opts.common);
    report_cmd->add_option("--input", report_opts.input)->required();
    report_cmd->add_option("--duration", report_opts.duration);
    report_cmd->add_flag("--hard-counts", report_opts.hard_counts);
    report_cmd->add_option("--chance-resamples", report_opts.chance_resamples);

    ClusterOpts cluster_opts;
    auto* cluster_cmd =
        app.add_subcommand("cluster", "hierarchy extraction from a soft confusion");
    add_common(cluster_cmd, cluster_opts.common);
    cluster_cmd->add_option("--input", cluster_opts.input)->required();
    cluster_cmd->add_option("--truth", cluster_opts.truth);
    cluster_cmd->add_option("--cutoff", cluster_opts.cutoff);
    cluster_cmd->add_option("--metric", cluster_opts.metric)
        ->check(CLI::IsMember({"euclidean", "sqeuclidean"}));

    XfreqOpts xfreq_opts;
    auto* xfreq_cmd =
        app.add_subcommand("xfreq", "amplitude coupling and the active/inactive split");
    add_common(xfreq_cmd, xfreq_opts.common);
    xfreq_cmd->add_option("--input", xfreq_opts.input)->required();
    xfreq_cmd->add_option("--truth", xfreq_opts.truth);
    xfreq_cmd->add_option("--window-lo", xfreq_opts.window_lo);
    xfreq_cmd->add_option("--window-hi", xfreq_opts.window_hi);
    xfreq_cmd->add_option("--bins", xfreq_opts.bins);
    xfreq_cmd->add_option("--power-bins", xfreq_opts.power_bins);

    ScalingOpts scaling_opts;
    auto* scaling_cmd =
        app.add_subcommand("scaling", "accuracy as a function of training-set size");
    add_common(scaling_cmd, scaling_opts.common);
    scaling_cmd->add_option("--input", scaling_opts.input)->required();
    scaling_cmd->add_option("--band", scaling_opts.band);
    scaling_cmd->add_option("--task", scaling_opts.task);
    scaling_cmd->add_option("--folds", scaling_opts.folds);
    scaling_cmd->add_option("--fraction", scaling_opts.fractions,
                            "comma-separated training fractions");
    scaling_cmd->add_option("--hidden", scaling_opts.hidden);
    scaling_cmd->add_option("--min-class-count", scaling_opts.min_class_count);

    TimepointOpts timepoint_opts;
    auto* timepoint_cmd =
        app.add_subcommand("timepoint", "per-timepoint logistic decoding curve");
    add_common(timepoint_cmd, timepoint_opts.common);
    timepoint_cmd->add_option("--input", timepoint_opts.input)->required();
    timepoint_cmd->add_option("--band", timepoint_opts.band);
    timepoint_cmd->add_option("--task", timepoint_opts.task);
    timepoint_cmd->add_option("--folds", timepoint_opts.folds);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (synth_cmd->parsed()) cmd_synth(synth_opts);
        if (pre_cmd->parsed()) cmd_preprocess(pre_opts);
        if (train_cmd->parsed()) cmd_train(train_opts);
        if (search_cmd->parsed()) cmd_search(search_opts);
        if (eval_cmd->parsed()) cmd_evaluate(eval_opts);
        if (report_cmd->parsed()) cmd_report(report_opts);
        if (cluster_cmd->parsed()) cmd_cluster(cluster_opts);
        if (xfreq_cmd->parsed()) cmd_xfreq(xfreq_opts);
        if (scaling_cmd->parsed()) cmd_scaling(scaling_opts);
        if (timepoint_cmd->parsed()) cmd_timepoint(timepoint_opts);
    } catch (const Error& e) {
        std::cerr << json{{"error", {{"kind", e.kind()},
                                     {"message", e.what()},
                                     {"command", command}}}}
                         .dump()
                  << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"kind", "internal"},
                                     {"message", e.what()},
                                     {"command", command}}}}
                         .dump()
                  << std::endl;
        return 1;
    }
    return 0;
}
