#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "cvdecode/dataset.hpp"
#include "cvdecode/io.hpp"
#include "cvdecode/mlp.hpp"
#include "cvdecode/synth.hpp"

using namespace cvdecode;
namespace fs = std::filesystem;

namespace {

fs::path work_dir(const std::string& tag) {
    const auto dir = fs::temp_directory_path() / ("cvdecode_io_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void flip_byte(const fs::path& path, std::size_t offset) {
    auto bytes = io::read_bytes(path);
    REQUIRE(offset < bytes.size());
    bytes[offset] ^= 0xff;
    io::write_bytes(path, bytes.data(), bytes.size());
}

void truncate_file(const fs::path& path, std::size_t n) {
    auto bytes = io::read_bytes(path);
    REQUIRE(n < bytes.size());
    io::write_bytes(path, bytes.data(), n);
}

synth::SynthConfig tiny_synth() {
    synth::SynthConfig cfg;
    cfg.trials_per_class = 2;
    cfg.n_electrodes = 4;
    cfg.window_pre_s = -0.05;
    cfg.window_post_s = 0.1;
    cfg.band_channels = {"high_gamma", "beta_aggregate"};
    cfg.seed = 404;
    return cfg;
}

}  // namespace

TEST_CASE("float64 blobs round-trip bitwise and verify checksums") {
    const auto dir = work_dir("blob64");
    const std::vector<double> data = {0.0, -1.5, 3.1415926535897931, 1e-300, -0.0, 42.0};

    const auto checksum = io::write_f64_blob(dir / "a.f64", data.data(), data.size());
    REQUIRE(checksum.size() == 16);
    CHECK(io::read_f64_blob(dir / "a.f64", data.size(), checksum) == data);
    CHECK(io::read_f64_blob(dir / "a.f64", data.size(), "") == data);  // no checksum pin

    CHECK_THROWS_AS(io::read_f64_blob(dir / "a.f64", data.size() + 1, checksum),
                    ShapeMismatchError);

    truncate_file(dir / "a.f64", 3 * sizeof(double));
    CHECK_THROWS_AS(io::read_f64_blob(dir / "a.f64", data.size(), checksum),
                    ShapeMismatchError);

    io::write_f64_blob(dir / "a.f64", data.data(), data.size());
    flip_byte(dir / "a.f64", 9);
    CHECK_THROWS_AS(io::read_f64_blob(dir / "a.f64", data.size(), checksum),
                    ChecksumMismatchError);
    fs::remove_all(dir);
}

TEST_CASE("float32 blobs round-trip to single precision") {
    const auto dir = work_dir("blob32");
    std::vector<double> data(100);
    auto rng = make_rng(7);
    std::normal_distribution<double> gauss(0.0, 2.0);
    for (auto& v : data) v = gauss(rng);

    const auto checksum = io::write_f32_blob(dir / "a.f32", data.data(), data.size());
    const auto back = io::read_f32_blob(dir / "a.f32", data.size(), checksum);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i] == Catch::Approx(data[i]).margin(1e-5));
        CHECK(back[i] == static_cast<double>(static_cast<float>(data[i])));
    }
    CHECK(fs::file_size(dir / "a.f32") == data.size() * sizeof(float));

    flip_byte(dir / "a.f32", 0);
    CHECK_THROWS_AS(io::read_f32_blob(dir / "a.f32", data.size(), checksum),
                    ChecksumMismatchError);
    fs::remove_all(dir);
}

TEST_CASE("json helpers report file problems as IoError") {
    const auto dir = work_dir("json");
    const io::json j = {{"alpha", 1}, {"beta", {1, 2, 3}}, {"gamma", "x"}};
    io::save_json(dir / "ok.json", j);
    CHECK(io::load_json(dir / "ok.json") == j);

    {
        std::ofstream f(dir / "broken.json");
        f << "{ not json";
    }
    CHECK_THROWS_AS(io::load_json(dir / "broken.json"), IoError);
    CHECK_THROWS_AS(io::load_json(dir / "absent.json"), IoError);

    CHECK(io::detail::require<int>(j, "alpha", "ctx") == 1);
    CHECK_THROWS_AS(io::detail::require<int>(j, "missing", "ctx"), IoError);
    CHECK_THROWS_AS(io::detail::require<int>(j, "gamma", "ctx"), IoError);

    const auto a = io::file_checksum_hex(dir / "ok.json");
    CHECK(a == io::file_checksum_hex(dir / "ok.json"));
    io::save_json(dir / "ok.json", io::json{{"alpha", 2}});
    CHECK(a != io::file_checksum_hex(dir / "ok.json"));
    fs::remove_all(dir);
}

TEST_CASE("spectral tensors round-trip through a directory") {
    const auto dir = work_dir("tensor");
    const auto gen = synth::synth_generate(tiny_synth());
    const auto& tensor = gen.tensor;

    io::save_tensor(dir, tensor);
    REQUIRE(fs::exists(dir / "tensor.json"));
    REQUIRE(fs::exists(dir / "band_high_gamma.f64"));
    REQUIRE(fs::exists(dir / "band_beta_aggregate.f64"));

    const auto back = io::load_tensor(dir);
    CHECK(back.labels == tensor.labels);
    REQUIRE(back.bands.size() == tensor.bands.size());
    for (std::size_t b = 0; b < tensor.bands.size(); ++b) {
        CHECK(back.bands[b].name == tensor.bands[b].name);
        CHECK(back.bands[b].center_hz == tensor.bands[b].center_hz);
        CHECK(back.bands[b].rate_hz == tensor.bands[b].rate_hz);
        CHECK(back.bands[b].nominal_rate_hz == tensor.bands[b].nominal_rate_hz);
        CHECK(back.bands[b].t_start_s == tensor.bands[b].t_start_s);
        CHECK(back.bands[b].values.raw() == tensor.bands[b].values.raw());  // bitwise
    }

    SECTION("saving twice produces identical files") {
        const auto first = io::file_checksum_hex(dir / "tensor.json");
        io::save_tensor(dir, tensor);
        CHECK(io::file_checksum_hex(dir / "tensor.json") == first);
    }

    SECTION("a corrupted blob fails the checksum") {
        flip_byte(dir / "band_high_gamma.f64", 17);
        CHECK_THROWS_AS(io::load_tensor(dir), ChecksumMismatchError);
    }

    SECTION("a truncated blob fails the size check") {
        truncate_file(dir / "band_beta_aggregate.f64", 8);
        CHECK_THROWS_AS(io::load_tensor(dir), ShapeMismatchError);
    }

    SECTION("label count must match the trial count") {
        auto manifest = io::load_json(dir / "tensor.json");
        manifest["labels"] = std::vector<std::string>{"ba"};
        io::save_json(dir / "tensor.json", manifest);
        CHECK_THROWS_AS(io::load_tensor(dir), ShapeMismatchError);
    }

    SECTION("wrong format tag is rejected") {
        auto manifest = io::load_json(dir / "tensor.json");
        manifest["format"] = "something.else";
        io::save_json(dir / "tensor.json", manifest);
        CHECK_THROWS_AS(io::load_tensor(dir), IoError);
    }
    fs::remove_all(dir);
}

TEST_CASE("labeled datasets round-trip through a directory") {
    const auto dir = work_dir("dataset");
    const auto gen = synth::synth_generate(tiny_synth());
    const auto ds = dataset::make_dataset(gen.tensor, gen.tensor.labels, {}, {}, {}, 1);

    io::save_dataset(dir, ds);
    const auto back = io::load_dataset(dir);
    CHECK(back.X.raw() == ds.X.raw());
    CHECK(back.y == ds.y);
    CHECK(back.class_names == ds.class_names);
    CHECK(back.excluded_classes == ds.excluded_classes);
    CHECK(back.source_trials == ds.source_trials);
    CHECK(back.layout.n_features == ds.layout.n_features);
    REQUIRE(back.layout.blocks.size() == ds.layout.blocks.size());
    for (std::size_t b = 0; b < ds.layout.blocks.size(); ++b) {
        CHECK(back.layout.blocks[b].band == ds.layout.blocks[b].band);
        CHECK(back.layout.blocks[b].rate_hz == ds.layout.blocks[b].rate_hz);
        CHECK(back.layout.blocks[b].n_electrodes == ds.layout.blocks[b].n_electrodes);
        CHECK(back.layout.blocks[b].n_time == ds.layout.blocks[b].n_time);
        CHECK(back.layout.blocks[b].offset == ds.layout.blocks[b].offset);
    }

    SECTION("class indices outside class_names are rejected") {
        auto manifest = io::load_json(dir / "dataset.json");
        auto y = manifest["y"].get<std::vector<int>>();
        y[0] = static_cast<int>(ds.class_names.size());
        manifest["y"] = y;
        io::save_json(dir / "dataset.json", manifest);
        CHECK_THROWS_AS(io::load_dataset(dir), UnknownLabelError);
    }

    SECTION("label vector length must match n_samples") {
        auto manifest = io::load_json(dir / "dataset.json");
        auto y = manifest["y"].get<std::vector<int>>();
        y.pop_back();
        manifest["y"] = y;
        io::save_json(dir / "dataset.json", manifest);
        CHECK_THROWS_AS(io::load_dataset(dir), ShapeMismatchError);
    }

    SECTION("corrupted feature blob fails the checksum") {
        flip_byte(dir / "features.f64", 3);
        CHECK_THROWS_AS(io::load_dataset(dir), ChecksumMismatchError);
    }
    fs::remove_all(dir);
}

TEST_CASE("model checkpoints reload to matching predictions") {
    const auto dir = work_dir("model");
    const auto ds = synth::make_separable_dataset(20, 3, 2.0, 0.5, 6);
    const auto folds = dataset::stratified_folds(ds.y, 3, 11);

    models::NetworkSpec spec;
    spec.input_dim = ds.n_features();
    spec.n_classes = ds.n_classes();
    spec.hidden_dims = {4};
    spec.nonlinearity = models::Nonlinearity::tanh;

    models::TrainConfig cfg;
    cfg.lr_init = 0.1;
    cfg.max_epochs = 15;
    cfg.batch_size = 8;
    cfg.init_scale = 0.3;
    cfg.max_filter_norm = -1.0;
    cfg.seed = 90;
    const auto model = models::train(folds[0], ds, spec, cfg);

    io::save_model(dir, model, cfg);
    const auto loaded = io::load_model(dir);

    CHECK(loaded.model.spec.input_dim == spec.input_dim);
    CHECK(loaded.model.spec.hidden_dims == spec.hidden_dims);
    CHECK(loaded.model.spec.n_classes == spec.n_classes);
    CHECK(loaded.model.spec.nonlinearity == spec.nonlinearity);
    CHECK(loaded.model.best_epoch == model.best_epoch);
    CHECK(loaded.model.stopped_epoch == model.stopped_epoch);
    CHECK(loaded.model.best_val_accuracy == model.best_val_accuracy);
    REQUIRE(loaded.model.trace.size() == model.trace.size());
    for (std::size_t i = 0; i < model.trace.size(); ++i) {
        CHECK(loaded.model.trace[i].train_loss == model.trace[i].train_loss);
        CHECK(loaded.model.trace[i].val_accuracy == model.trace[i].val_accuracy);
    }
    CHECK(loaded.config.lr_init == cfg.lr_init);
    CHECK(loaded.config.batch_size == cfg.batch_size);
    CHECK(loaded.config.seed == cfg.seed);
    CHECK(loaded.config.patience == cfg.patience);

    // parameters are stored single precision; predictions stay close
    const auto test_X = models::gather_rows(ds.X, folds[0].test);
    const auto p0 = models::predict_proba(model.params, spec, test_X);
    const auto p1 = models::predict_proba(loaded.model.params, loaded.model.spec, test_X);
    REQUIRE(p1.rows() == p0.rows());
    for (Eigen::Index i = 0; i < p0.rows(); ++i)
        for (Eigen::Index j = 0; j < p0.cols(); ++j)
            CHECK(p1(i, j) == Catch::Approx(p0(i, j)).margin(1e-5));
    CHECK(models::argmax_rows(p1) == models::argmax_rows(p0));

    SECTION("corrupted parameter blob fails the checksum") {
        flip_byte(dir / "params.f32", 2);
        CHECK_THROWS_AS(io::load_model(dir), ChecksumMismatchError);
    }

    SECTION("truncated parameter blob fails the size check") {
        truncate_file(dir / "params.f32", 4);
        CHECK_THROWS_AS(io::load_model(dir), ShapeMismatchError);
    }
    fs::remove_all(dir);
}

TEST_CASE("raw recordings round-trip with events and metadata") {
    const auto dir = work_dir("raw");
    signal::RawRecording raw;
    raw.voltage = Array2(3, 50);
    for (std::size_t e = 0; e < 3; ++e)
        for (std::size_t s = 0; s < 50; ++s)
            raw.voltage(e, s) = std::sin(0.1 * static_cast<double>(s + e));
    raw.sample_rate_hz = 400.0;
    raw.bad_channels = {1};
    raw.baseline_window = {5, 20};
    raw.event_times_s = {0.02, 0.08};

    io::save_raw(dir, raw, {"ba", "da"});
    const auto back = io::load_raw(dir);
    CHECK(back.recording.voltage.raw() == raw.voltage.raw());
    CHECK(back.recording.sample_rate_hz == raw.sample_rate_hz);
    CHECK(back.recording.bad_channels == raw.bad_channels);
    CHECK(back.recording.baseline_window == raw.baseline_window);
    CHECK(back.recording.event_times_s == raw.event_times_s);
    CHECK(back.event_labels == std::vector<std::string>{"ba", "da"});

    CHECK_THROWS_AS(io::save_raw(dir, raw, {"ba"}), InvalidInputError);

    SECTION("labels may be omitted entirely") {
        io::save_raw(dir, raw);
        CHECK(io::load_raw(dir).event_labels.empty());
    }

    SECTION("label count mismatches are caught on load") {
        auto manifest = io::load_json(dir / "raw.json");
        manifest["event_labels"] = std::vector<std::string>{"ba", "da", "ga"};
        io::save_json(dir / "raw.json", manifest);
        CHECK_THROWS_AS(io::load_raw(dir), ShapeMismatchError);
    }

    SECTION("corrupted voltage blob fails the checksum") {
        flip_byte(dir / "voltage.f64", 100);
        CHECK_THROWS_AS(io::load_raw(dir), ChecksumMismatchError);
    }
    fs::remove_all(dir);
}

TEST_CASE("confusion summaries round-trip exactly") {
    const auto dir = work_dir("confusion");
    models::Mat probs(3, 3);
    probs << 0.7, 0.2, 0.1, 0.3, 0.5, 0.2, 0.25, 0.25, 0.5;
    const auto cs = metrics::soft_confusion(probs, {0, 1, 0}, {"ba", "da", "ga"});

    io::save_confusion(dir / "c.json", cs);
    const auto back = io::load_confusion(dir / "c.json");
    CHECK(back.classes == cs.classes);
    CHECK(back.absent_classes == cs.absent_classes);
    CHECK(back.hard.raw() == cs.hard.raw());
    CHECK(back.soft.raw() == cs.soft.raw());

    SECTION("matrix shape must stay K x K") {
        auto j = io::load_json(dir / "c.json");
        j["classes"] = std::vector<std::string>{"ba", "da"};
        io::save_json(dir / "c.json", j);
        CHECK_THROWS_AS(io::load_confusion(dir / "c.json"), ShapeMismatchError);
    }

    SECTION("ragged matrices are rejected") {
        auto j = io::load_json(dir / "c.json");
        j["soft"][1] = std::vector<double>{0.5, 0.5};
        io::save_json(dir / "c.json", j);
        CHECK_THROWS_AS(io::load_confusion(dir / "c.json"), ShapeMismatchError);
    }
    fs::remove_all(dir);
}

TEST_CASE("matrix json helpers validate their input") {
    Array2 m(2, 3);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j) m(i, j) = static_cast<double>(3 * i + j) / 7.0;
    const auto j = io::matrix_to_json(m);
    const auto back = io::matrix_from_json(j, "ctx");
    CHECK(back.raw() == m.raw());

    CHECK_THROWS_AS(io::matrix_from_json(io::json::array(), "ctx"), IoError);
    CHECK_THROWS_AS(io::matrix_from_json(io::json{{1.0, 2.0}, {3.0}}, "ctx"),
                    ShapeMismatchError);
}

TEST_CASE("generator ground truth round-trips") {
    const auto dir = work_dir("truth");
    const auto gen = synth::synth_generate(tiny_synth());

    io::save_truth(dir / "truth.json", gen.truth);
    const auto back = io::load_truth(dir / "truth.json");
    CHECK(back.class_labels == gen.truth.class_labels);
    CHECK(back.top_of_class == gen.truth.top_of_class);
    CHECK(back.mid_of_class == gen.truth.mid_of_class);
    CHECK(back.active_electrodes == gen.truth.active_electrodes);
    CHECK(back.snr == gen.truth.snr);
    CHECK(back.coupling == gen.truth.coupling);
    CHECK(back.band_noise_sd == gen.truth.band_noise_sd);

    SECTION("per-class arrays must agree in length") {
        auto j = io::load_json(dir / "truth.json");
        auto tops = j["top_of_class"].get<std::vector<std::string>>();
        tops.pop_back();
        j["top_of_class"] = tops;
        io::save_json(dir / "truth.json", j);
        CHECK_THROWS_AS(io::load_truth(dir / "truth.json"), ShapeMismatchError);
    }
    fs::remove_all(dir);
}

TEST_CASE("dendrograms round-trip") {
    const auto dir = work_dir("dendro");
    Array2 points(5, 1);
    points(0, 0) = 0.0;
    points(1, 0) = 0.2;
    points(2, 0) = 5.0;
    points(3, 0) = 5.3;
    points(4, 0) = 11.0;
    const auto dendro = cluster::ward_cluster(points, {"a", "b", "c", "d", "e"});

    io::save_dendrogram(dir / "d.json", dendro);
    const auto back = io::load_dendrogram(dir / "d.json");
    CHECK(back.leaf_labels == dendro.leaf_labels);
    REQUIRE(back.merges.size() == dendro.merges.size());
    for (std::size_t i = 0; i < dendro.merges.size(); ++i) {
        CHECK(back.merges[i].left == dendro.merges[i].left);
        CHECK(back.merges[i].right == dendro.merges[i].right);
        CHECK(back.merges[i].height == dendro.merges[i].height);
        CHECK(back.merges[i].new_id == dendro.merges[i].new_id);
    }

    SECTION("merge count must be leaf count minus one") {
        auto j = io::load_json(dir / "d.json");
        j["leaf_labels"] = std::vector<std::string>{"a", "b"};
        io::save_json(dir / "d.json", j);
        CHECK_THROWS_AS(io::load_dendrogram(dir / "d.json"), ShapeMismatchError);
    }
    fs::remove_all(dir);
}

TEST_CASE("tsv writer emits a header and tab-separated rows") {
    const auto dir = work_dir("tsv");
    io::write_tsv(dir / "t.tsv", {"x", "y"}, {{"1", "2"}, {"3.5", io::fmt(1.0 / 3.0)}});

    std::ifstream f(dir / "t.tsv");
    std::string line;
    std::getline(f, line);
    CHECK(line == "x\ty");
    std::getline(f, line);
    CHECK(line == "1\t2");
    std::getline(f, line);
    REQUIRE(line.rfind("3.5\t", 0) == 0);
    CHECK(std::stod(line.substr(4)) == 1.0 / 3.0);  // fmt round-trips doubles
    CHECK_FALSE(std::getline(f, line));

    CHECK_THROWS_AS(io::write_tsv(dir / "bad.tsv", {"x", "y"}, {{"1"}}), InvalidInputError);
    fs::remove_all(dir);
}
