#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvdecode/cluster.hpp"
#include "cvdecode/dataset.hpp"
#include "cvdecode/error.hpp"
#include "cvdecode/metrics.hpp"
#include "cvdecode/mlp.hpp"
#include "cvdecode/rng.hpp"
#include "cvdecode/signal.hpp"
#include "cvdecode/synth.hpp"

namespace cvdecode::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Bytes, blobs, JSON
// ---------------------------------------------------------------------------

inline void write_bytes(const std::filesystem::path& path, const void* data, std::size_t n) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) throw IoError("short write: " + path.string());
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for read: " + path.string());
    f.seekg(0, std::ios::end);
    const auto n = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<unsigned char> out(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(out.data()), n);
    if (!f) throw IoError("short read: " + path.string());
    return out;
}

inline std::string file_checksum_hex(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    return checksum_hex(fnv1a64(bytes.data(), bytes.size()));
}

/// Blobs are little-endian IEEE-754 float64, row-major over the owning
/// type's axis order. Checksums run over the raw bytes.
inline std::string write_f64_blob(const std::filesystem::path& path, const double* data,
                                  std::size_t n) {
    write_bytes(path, data, n * sizeof(double));
    return checksum_hex(fnv1a64(data, n * sizeof(double)));
}

inline std::vector<double> read_f64_blob(const std::filesystem::path& path,
                                         std::size_t expected_count,
                                         const std::string& expected_checksum) {
    const auto bytes = read_bytes(path);
    if (bytes.size() != expected_count * sizeof(double))
        throw ShapeMismatchError("blob " + path.string() + ": expected " +
                                 std::to_string(expected_count * sizeof(double)) +
                                 " bytes, found " + std::to_string(bytes.size()));
    const auto actual = checksum_hex(fnv1a64(bytes.data(), bytes.size()));
    if (!expected_checksum.empty() && actual != expected_checksum)
        throw ChecksumMismatchError("blob " + path.string() + ": checksum " + actual +
                                    " != manifest " + expected_checksum);
    std::vector<double> out(expected_count);
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

/// Model parameters are stored single-precision: checkpoints exist for
/// prediction-only reuse, not for resuming optimization.
inline std::string write_f32_blob(const std::filesystem::path& path, const double* data,
                                  std::size_t n) {
    std::vector<float> narrow(n);
    for (std::size_t i = 0; i < n; ++i) narrow[i] = static_cast<float>(data[i]);
    write_bytes(path, narrow.data(), n * sizeof(float));
    return checksum_hex(fnv1a64(narrow.data(), n * sizeof(float)));
}

inline std::vector<double> read_f32_blob(const std::filesystem::path& path,
                                         std::size_t expected_count,
                                         const std::string& expected_checksum) {
    const auto bytes = read_bytes(path);
    if (bytes.size() != expected_count * sizeof(float))
        throw ShapeMismatchError("blob " + path.string() + ": expected " +
                                 std::to_string(expected_count * sizeof(float)) +
                                 " bytes, found " + std::to_string(bytes.size()));
    const auto actual = checksum_hex(fnv1a64(bytes.data(), bytes.size()));
    if (!expected_checksum.empty() && actual != expected_checksum)
        throw ChecksumMismatchError("blob " + path.string() + ": checksum " + actual +
                                    " != manifest " + expected_checksum);
    std::vector<float> narrow(expected_count);
    std::memcpy(narrow.data(), bytes.data(), bytes.size());
    return std::vector<double>(narrow.begin(), narrow.end());
}

inline void save_json(const std::filesystem::path& path, const json& j, int indent = 2) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f << j.dump(indent) << '\n';
    if (!f) throw IoError("short write: " + path.string());
}

inline json load_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open for read: " + path.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

namespace detail {

/// Field access that reports the file's name instead of a raw json error.
template <typename T>
T require(const json& j, const std::string& key, const std::string& context) {
    if (!j.contains(key)) throw IoError(context + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw IoError(context + ": bad field '" + key + "': " + e.what());
    }
}

inline void require_format(const json& j, const std::string& expected,
                           const std::string& context) {
    if (require<std::string>(j, "format", context) != expected)
        throw IoError(context + ": expected format '" + expected + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Spectral tensors (directory: tensor.json + one blob per band)
// ---------------------------------------------------------------------------

constexpr const char* kTensorFormat = "cvdecode.tensor.v1";
constexpr const char* kDatasetFormat = "cvdecode.dataset.v1";
constexpr const char* kModelFormat = "cvdecode.model.v1";
constexpr const char* kTruthFormat = "cvdecode.truth.v1";
constexpr const char* kDendrogramFormat = "cvdecode.dendrogram.v1";

inline void save_tensor(const std::filesystem::path& dir, const signal::SpectralTensor& tensor) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = kTensorFormat;
    manifest["n_trials"] = tensor.n_trials();
    manifest["n_electrodes"] = tensor.n_electrodes();
    manifest["labels"] = tensor.labels;
    manifest["bands"] = json::array();
    for (const auto& band : tensor.bands) {
        const std::string file = "band_" + band.name + ".f64";
        const auto checksum =
            write_f64_blob(dir / file, band.values.data(), band.values.size());
        manifest["bands"].push_back({{"name", band.name},
                                     {"center_hz", band.center_hz},
                                     {"rate_hz", band.rate_hz},
                                     {"nominal_rate_hz", band.nominal_rate_hz},
                                     {"t_start_s", band.t_start_s},
                                     {"n_time", band.n_time()},
                                     {"file", file},
                                     {"checksum", checksum}});
    }
    save_json(dir / "tensor.json", manifest);
}

inline signal::SpectralTensor load_tensor(const std::filesystem::path& dir) {
    const auto manifest = load_json(dir / "tensor.json");
    const std::string ctx = (dir / "tensor.json").string();
    detail::require_format(manifest, kTensorFormat, ctx);
    const auto n_trials = detail::require<std::size_t>(manifest, "n_trials", ctx);
    const auto n_electrodes = detail::require<std::size_t>(manifest, "n_electrodes", ctx);

    signal::SpectralTensor tensor;
    tensor.labels = detail::require<std::vector<std::string>>(manifest, "labels", ctx);
    if (!tensor.labels.empty() && tensor.labels.size() != n_trials)
        throw ShapeMismatchError(ctx + ": label count != n_trials");
    for (const auto& jb : detail::require<json>(manifest, "bands", ctx)) {
        signal::TensorBand band;
        band.name = detail::require<std::string>(jb, "name", ctx);
        band.center_hz = detail::require<double>(jb, "center_hz", ctx);
        band.rate_hz = detail::require<double>(jb, "rate_hz", ctx);
        band.nominal_rate_hz = detail::require<double>(jb, "nominal_rate_hz", ctx);
        band.t_start_s = detail::require<double>(jb, "t_start_s", ctx);
        const auto n_time = detail::require<std::size_t>(jb, "n_time", ctx);
        const auto file = detail::require<std::string>(jb, "file", ctx);
        const auto checksum = detail::require<std::string>(jb, "checksum", ctx);
        const auto flat = read_f64_blob(dir / file, n_trials * n_electrodes * n_time, checksum);
        band.values = Array3(n_trials, n_electrodes, n_time);
        band.values.raw() = flat;
        tensor.bands.push_back(std::move(band));
    }
    return tensor;
}

// ---------------------------------------------------------------------------
// Labeled datasets (directory: dataset.json + features.f64)
// ---------------------------------------------------------------------------

inline void save_dataset(const std::filesystem::path& dir, const dataset::LabeledDataset& ds) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = kDatasetFormat;
    manifest["n_samples"] = ds.n_samples();
    manifest["n_features"] = ds.n_features();
    manifest["class_names"] = ds.class_names;
    manifest["y"] = ds.y;
    manifest["source_trials"] = ds.source_trials;
    manifest["excluded_classes"] = ds.excluded_classes;
    manifest["blocks"] = json::array();
    for (const auto& b : ds.layout.blocks)
        manifest["blocks"].push_back({{"band", b.band},
                                      {"rate_hz", b.rate_hz},
                                      {"n_electrodes", b.n_electrodes},
                                      {"n_time", b.n_time},
                                      {"offset", b.offset}});
    manifest["features_file"] = "features.f64";
    manifest["checksum"] = write_f64_blob(dir / "features.f64", ds.X.data(), ds.X.size());
    save_json(dir / "dataset.json", manifest);
}

inline dataset::LabeledDataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest = load_json(dir / "dataset.json");
    const std::string ctx = (dir / "dataset.json").string();
    detail::require_format(manifest, kDatasetFormat, ctx);

    dataset::LabeledDataset ds;
    const auto n_samples = detail::require<std::size_t>(manifest, "n_samples", ctx);
    const auto n_features = detail::require<std::size_t>(manifest, "n_features", ctx);
    ds.class_names = detail::require<std::vector<std::string>>(manifest, "class_names", ctx);
    ds.y = detail::require<std::vector<int>>(manifest, "y", ctx);
    ds.source_trials =
        detail::require<std::vector<std::size_t>>(manifest, "source_trials", ctx);
    ds.excluded_classes =
        detail::require<std::vector<std::string>>(manifest, "excluded_classes", ctx);
    if (ds.y.size() != n_samples) throw ShapeMismatchError(ctx + ": y length != n_samples");
    for (int label : ds.y)
        if (label < 0 || static_cast<std::size_t>(label) >= ds.class_names.size())
            throw UnknownLabelError(ctx + ": class index " + std::to_string(label) +
                                    " outside class_names");
    for (const auto& jb : detail::require<json>(manifest, "blocks", ctx))
        ds.layout.blocks.push_back({detail::require<std::string>(jb, "band", ctx),
                                    detail::require<double>(jb, "rate_hz", ctx),
                                    detail::require<std::size_t>(jb, "n_electrodes", ctx),
                                    detail::require<std::size_t>(jb, "n_time", ctx),
                                    detail::require<std::size_t>(jb, "offset", ctx)});
    ds.layout.n_features = n_features;

    const auto file = detail::require<std::string>(manifest, "features_file", ctx);
    const auto checksum = detail::require<std::string>(manifest, "checksum", ctx);
    const auto flat = read_f64_blob(dir / file, n_samples * n_features, checksum);
    ds.X = Array2(n_samples, n_features);
    ds.X.raw() = flat;
    return ds;
}

// ---------------------------------------------------------------------------
// Model checkpoints (directory: model.json + params.f64)
// ---------------------------------------------------------------------------

inline json train_config_to_json(const models::TrainConfig& cfg) {
    return {{"init_momentum", cfg.init_momentum},
            {"final_momentum", cfg.final_momentum},
            {"momentum_saturation_epoch", cfg.momentum_saturation_epoch},
            {"lr_init", cfg.lr_init},
            {"lr_min", cfg.lr_min},
            {"lr_decay", cfg.lr_decay},
            {"batch_size", cfg.batch_size},
            {"max_epochs", cfg.max_epochs},
            {"input_dropout_rate", cfg.input_dropout_rate},
            {"input_dropout_rescale", cfg.input_dropout_rescale},
            {"hidden_dropout_rate", cfg.hidden_dropout_rate},
            {"hidden_dropout_rescale", cfg.hidden_dropout_rescale},
            {"weight_decay", cfg.weight_decay},
            {"max_filter_norm", cfg.max_filter_norm},
            {"init_scale", cfg.init_scale},
            {"patience", cfg.patience},
            {"seed", cfg.seed}};
}

inline models::TrainConfig train_config_from_json(const json& j, const std::string& ctx) {
    models::TrainConfig cfg;
    cfg.init_momentum = detail::require<double>(j, "init_momentum", ctx);
    cfg.final_momentum = detail::require<double>(j, "final_momentum", ctx);
    cfg.momentum_saturation_epoch =
        detail::require<std::size_t>(j, "momentum_saturation_epoch", ctx);
    cfg.lr_init = detail::require<double>(j, "lr_init", ctx);
    cfg.lr_min = detail::require<double>(j, "lr_min", ctx);
    cfg.lr_decay = detail::require<double>(j, "lr_decay", ctx);
    cfg.batch_size = detail::require<std::size_t>(j, "batch_size", ctx);
    cfg.max_epochs = detail::require<std::size_t>(j, "max_epochs", ctx);
    cfg.input_dropout_rate = detail::require<double>(j, "input_dropout_rate", ctx);
    cfg.input_dropout_rescale = detail::require<double>(j, "input_dropout_rescale", ctx);
    cfg.hidden_dropout_rate = detail::require<double>(j, "hidden_dropout_rate", ctx);
    cfg.hidden_dropout_rescale = detail::require<double>(j, "hidden_dropout_rescale", ctx);
    cfg.weight_decay = detail::require<double>(j, "weight_decay", ctx);
    cfg.max_filter_norm = detail::require<double>(j, "max_filter_norm", ctx);
    cfg.init_scale = detail::require<double>(j, "init_scale", ctx);
    cfg.patience = detail::require<std::size_t>(j, "patience", ctx);
    cfg.seed = detail::require<std::uint64_t>(j, "seed", ctx);
    return cfg;
}

inline void save_model(const std::filesystem::path& dir, const models::TrainedModel& model,
                       const models::TrainConfig& cfg) {
    std::filesystem::create_directories(dir);
    std::vector<double> flat;
    for (std::size_t i = 0; i < model.params.W.size(); ++i) {
        const auto& W = model.params.W[i];
        flat.insert(flat.end(), W.data(), W.data() + W.size());  // row-major Mat
        const auto& b = model.params.b[i];
        flat.insert(flat.end(), b.data(), b.data() + b.size());
    }

    json manifest;
    manifest["format"] = kModelFormat;
    manifest["spec"] = {{"input_dim", model.spec.input_dim},
                        {"hidden_dims", model.spec.hidden_dims},
                        {"nonlinearity", models::to_string(model.spec.nonlinearity)},
                        {"n_classes", model.spec.n_classes}};
    manifest["train_config"] = train_config_to_json(cfg);
    manifest["best_epoch"] = model.best_epoch;
    manifest["stopped_epoch"] = model.stopped_epoch;
    manifest["best_val_accuracy"] = model.best_val_accuracy;
    json trace = json::array();
    for (const auto& rec : model.trace)
        trace.push_back({{"train_loss", rec.train_loss}, {"val_accuracy", rec.val_accuracy}});
    manifest["trace"] = std::move(trace);
    manifest["params_file"] = "params.f32";
    manifest["checksum"] = write_f32_blob(dir / "params.f32", flat.data(), flat.size());
    save_json(dir / "model.json", manifest);
}

struct LoadedModel {
    models::TrainedModel model;
    models::TrainConfig config;
};

inline LoadedModel load_model(const std::filesystem::path& dir) {
    const auto manifest = load_json(dir / "model.json");
    const std::string ctx = (dir / "model.json").string();
    detail::require_format(manifest, kModelFormat, ctx);

    LoadedModel out;
    const auto jspec = detail::require<json>(manifest, "spec", ctx);
    out.model.spec.input_dim = detail::require<std::size_t>(jspec, "input_dim", ctx);
    out.model.spec.hidden_dims =
        detail::require<std::vector<std::size_t>>(jspec, "hidden_dims", ctx);
    out.model.spec.nonlinearity = models::nonlinearity_from_string(
        detail::require<std::string>(jspec, "nonlinearity", ctx));
    out.model.spec.n_classes = detail::require<std::size_t>(jspec, "n_classes", ctx);
    out.model.spec.validate();
    out.config = train_config_from_json(detail::require<json>(manifest, "train_config", ctx), ctx);
    out.model.best_epoch = detail::require<std::size_t>(manifest, "best_epoch", ctx);
    out.model.stopped_epoch = detail::require<std::size_t>(manifest, "stopped_epoch", ctx);
    out.model.best_val_accuracy = detail::require<double>(manifest, "best_val_accuracy", ctx);
    for (const auto& jr : detail::require<json>(manifest, "trace", ctx))
        out.model.trace.push_back({detail::require<double>(jr, "train_loss", ctx),
                                   detail::require<double>(jr, "val_accuracy", ctx)});

    std::size_t count = 0;
    for (std::size_t i = 0; i < out.model.spec.n_layers(); ++i)
        count += out.model.spec.layer_in(i) * out.model.spec.layer_out(i) +
                 out.model.spec.layer_out(i);
    const auto file = detail::require<std::string>(manifest, "params_file", ctx);
    const auto checksum = detail::require<std::string>(manifest, "checksum", ctx);
    const auto flat = read_f32_blob(dir / file, count, checksum);

    std::size_t pos = 0;
    for (std::size_t i = 0; i < out.model.spec.n_layers(); ++i) {
        const auto rows = out.model.spec.layer_in(i);
        const auto cols = out.model.spec.layer_out(i);
        models::Mat W(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        std::copy(flat.begin() + pos, flat.begin() + pos + rows * cols, W.data());
        pos += rows * cols;
        models::RowVec b(static_cast<Eigen::Index>(cols));
        std::copy(flat.begin() + pos, flat.begin() + pos + cols, b.data());
        pos += cols;
        out.model.params.W.push_back(std::move(W));
        out.model.params.b.push_back(std::move(b));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Raw recordings (directory: raw.json + voltage.f64)
// ---------------------------------------------------------------------------

constexpr const char* kRawFormat = "cvdecode.raw.v1";

struct LoadedRecording {
    signal::RawRecording recording;
    std::vector<std::string> event_labels;  // one per event time (may be empty)
};

inline void save_raw(const std::filesystem::path& dir, const signal::RawRecording& raw,
                     const std::vector<std::string>& event_labels = {}) {
    if (!event_labels.empty() && event_labels.size() != raw.event_times_s.size())
        throw InvalidInputError("save_raw: need one label per event time");
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = kRawFormat;
    manifest["n_electrodes"] = raw.n_electrodes();
    manifest["n_samples"] = raw.n_samples();
    manifest["sample_rate_hz"] = raw.sample_rate_hz;
    manifest["bad_channels"] =
        std::vector<std::size_t>(raw.bad_channels.begin(), raw.bad_channels.end());
    manifest["baseline_window"] = {raw.baseline_window.first, raw.baseline_window.second};
    manifest["event_times_s"] = raw.event_times_s;
    manifest["event_labels"] = event_labels;
    manifest["voltage_file"] = "voltage.f64";
    manifest["checksum"] =
        write_f64_blob(dir / "voltage.f64", raw.voltage.data(), raw.voltage.size());
    save_json(dir / "raw.json", manifest);
}

inline LoadedRecording load_raw(const std::filesystem::path& dir) {
    const auto manifest = load_json(dir / "raw.json");
    const std::string ctx = (dir / "raw.json").string();
    detail::require_format(manifest, kRawFormat, ctx);

    LoadedRecording out;
    const auto n_electrodes = detail::require<std::size_t>(manifest, "n_electrodes", ctx);
    const auto n_samples = detail::require<std::size_t>(manifest, "n_samples", ctx);
    out.recording.sample_rate_hz = detail::require<double>(manifest, "sample_rate_hz", ctx);
    for (auto c : detail::require<std::vector<std::size_t>>(manifest, "bad_channels", ctx))
        out.recording.bad_channels.insert(c);
    const auto win = detail::require<std::vector<std::size_t>>(manifest, "baseline_window", ctx);
    if (win.size() != 2) throw IoError(ctx + ": baseline_window must have two entries");
    out.recording.baseline_window = {win[0], win[1]};
    out.recording.event_times_s =
        detail::require<std::vector<double>>(manifest, "event_times_s", ctx);
    out.event_labels = detail::require<std::vector<std::string>>(manifest, "event_labels", ctx);
    if (!out.event_labels.empty() &&
        out.event_labels.size() != out.recording.event_times_s.size())
        throw ShapeMismatchError(ctx + ": event label count != event time count");

    const auto file = detail::require<std::string>(manifest, "voltage_file", ctx);
    const auto checksum = detail::require<std::string>(manifest, "checksum", ctx);
    const auto flat = read_f64_blob(dir / file, n_electrodes * n_samples, checksum);
    out.recording.voltage = Array2(n_electrodes, n_samples);
    out.recording.voltage.raw() = flat;
    return out;
}

// ---------------------------------------------------------------------------
// Confusion summaries
// ---------------------------------------------------------------------------

constexpr const char* kConfusionFormat = "cvdecode.confusion.v1";

inline json matrix_to_json(const Array2& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Array2 matrix_from_json(const json& j, const std::string& ctx) {
    if (!j.is_array() || j.empty()) throw IoError(ctx + ": matrix must be a nonempty array");
    const std::size_t rows = j.size();
    const std::size_t cols = j.front().size();
    Array2 m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            throw ShapeMismatchError(ctx + ": ragged matrix rows");
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

inline void save_confusion(const std::filesystem::path& path,
                           const metrics::ConfusionSummary& cs) {
    json j;
    j["format"] = kConfusionFormat;
    j["classes"] = cs.classes;
    j["hard"] = matrix_to_json(cs.hard);
    j["soft"] = matrix_to_json(cs.soft);
    j["absent_classes"] = cs.absent_classes;
    save_json(path, j);
}

inline metrics::ConfusionSummary load_confusion(const std::filesystem::path& path) {
    const auto j = load_json(path);
    const std::string ctx = path.string();
    detail::require_format(j, kConfusionFormat, ctx);
    metrics::ConfusionSummary cs;
    cs.classes = detail::require<std::vector<std::string>>(j, "classes", ctx);
    cs.hard = matrix_from_json(detail::require<json>(j, "hard", ctx), ctx);
    cs.soft = matrix_from_json(detail::require<json>(j, "soft", ctx), ctx);
    cs.absent_classes = detail::require<std::vector<std::string>>(j, "absent_classes", ctx);
    const std::size_t K = cs.classes.size();
    if (cs.hard.rows() != K || cs.hard.cols() != K || cs.soft.rows() != K ||
        cs.soft.cols() != K)
        throw ShapeMismatchError(ctx + ": confusion matrices must be K x K");
    return cs;
}

// ---------------------------------------------------------------------------
// Generator ground truth
// ---------------------------------------------------------------------------

inline void save_truth(const std::filesystem::path& path, const synth::SynthTruth& truth) {
    json j;
    j["format"] = kTruthFormat;
    j["class_labels"] = truth.class_labels;
    j["top_of_class"] = truth.top_of_class;
    j["mid_of_class"] = truth.mid_of_class;
    j["active_electrodes"] = json::array();
    for (const auto& s : truth.active_electrodes)
        j["active_electrodes"].push_back(std::vector<std::size_t>(s.begin(), s.end()));
    j["snr"] = truth.snr;
    j["coupling"] = truth.coupling;
    j["band_noise_sd"] = truth.band_noise_sd;
    save_json(path, j);
}

inline synth::SynthTruth load_truth(const std::filesystem::path& path) {
    const auto j = load_json(path);
    const std::string ctx = path.string();
    detail::require_format(j, kTruthFormat, ctx);
    synth::SynthTruth truth;
    truth.class_labels = detail::require<std::vector<std::string>>(j, "class_labels", ctx);
    truth.top_of_class = detail::require<std::vector<std::string>>(j, "top_of_class", ctx);
    truth.mid_of_class = detail::require<std::vector<std::string>>(j, "mid_of_class", ctx);
    for (const auto& arr :
         detail::require<std::vector<std::vector<std::size_t>>>(j, "active_electrodes", ctx))
        truth.active_electrodes.emplace_back(arr.begin(), arr.end());
    if (truth.top_of_class.size() != truth.class_labels.size() ||
        truth.mid_of_class.size() != truth.class_labels.size() ||
        truth.active_electrodes.size() != truth.class_labels.size())
        throw ShapeMismatchError(ctx + ": per-class arrays disagree in length");
    truth.snr = detail::require<double>(j, "snr", ctx);
    truth.coupling = detail::require<double>(j, "coupling", ctx);
    truth.band_noise_sd = detail::require<double>(j, "band_noise_sd", ctx);
    return truth;
}

// ---------------------------------------------------------------------------
// Dendrograms
// ---------------------------------------------------------------------------

inline void save_dendrogram(const std::filesystem::path& path,
                            const cluster::Dendrogram& dendro) {
    json j;
    j["format"] = kDendrogramFormat;
    j["leaf_labels"] = dendro.leaf_labels;
    j["merges"] = json::array();
    for (const auto& m : dendro.merges)
        j["merges"].push_back({{"left", m.left},
                               {"right", m.right},
                               {"height", m.height},
                               {"new_id", m.new_id}});
    save_json(path, j);
}

inline cluster::Dendrogram load_dendrogram(const std::filesystem::path& path) {
    const auto j = load_json(path);
    const std::string ctx = path.string();
    detail::require_format(j, kDendrogramFormat, ctx);
    cluster::Dendrogram dendro;
    dendro.leaf_labels = detail::require<std::vector<std::string>>(j, "leaf_labels", ctx);
    for (const auto& jm : detail::require<json>(j, "merges", ctx))
        dendro.merges.push_back({detail::require<std::size_t>(jm, "left", ctx),
                                 detail::require<std::size_t>(jm, "right", ctx),
                                 detail::require<double>(jm, "height", ctx),
                                 detail::require<std::size_t>(jm, "new_id", ctx)});
    if (dendro.merges.size() + 1 != dendro.leaf_labels.size())
        throw ShapeMismatchError(ctx + ": merge count must be leaf count - 1");
    return dendro;
}

// ---------------------------------------------------------------------------
// Plot data (tab-separated, one header row)
// ---------------------------------------------------------------------------

inline void write_tsv(const std::filesystem::path& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i)
        f << (i ? "\t" : "") << header[i];
    f << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw InvalidInputError("write_tsv: row width != header width");
        for (std::size_t i = 0; i < row.size(); ++i)
            f << (i ? "\t" : "") << row[i];
        f << '\n';
    }
    if (!f) throw IoError("short write: " + path.string());
}

/// Full-precision float formatting so plot files round-trip exactly.
inline std::string fmt(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

}  // namespace cvdecode::io
