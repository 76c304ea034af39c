#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <catch2/catch_amalgamated.hpp>

#include "cvdecode/io.hpp"
#include "cvdecode/signal.hpp"

using namespace cvdecode;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path test_root() {
    static const fs::path root = [] {
        const auto dir = fs::temp_directory_path() / "cvdecode_cli_tests";
        fs::remove_all(dir);
        fs::create_directories(dir);
        return dir;
    }();
    return root;
}

struct CliRun {
    int exit_code = -1;
    std::string err;
};

CliRun run_cli(const std::string& args) {
    const auto err_file = test_root() / "stderr.txt";
    const std::string cmd =
        std::string(CVDECODE_CLI_PATH) + " " + args + " 2> " + err_file.string();
    const int status = std::system(cmd.c_str());
    CliRun out;
    out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream f(err_file);
    std::string line;
    while (std::getline(f, line)) out.err += line + "\n";
    return out;
}

json manifest_outputs(const fs::path& dir) {
    const auto manifest = io::load_json(dir / "manifest.json");
    REQUIRE(manifest.at("tool") == "cvdecode");
    return manifest.at("outputs");
}

// small fast synth run shared by the pipeline tests
fs::path synth_dir() {
    static const fs::path dir = [] {
        const auto out = test_root() / "synth";
        const auto r = run_cli("synth --seed 3 --trials-per-class 10 --electrodes 6"
                               " --pre -0.05 --post 0.1 --out " +
                               out.string());
        REQUIRE(r.exit_code == 0);
        return out;
    }();
    return dir;
}

}  // namespace

TEST_CASE("synth writes a checksummed run directory") {
    const auto a = test_root() / "synth_a";
    const auto r = run_cli("synth --seed 7 --trials-per-class 3 --electrodes 8"
                           " --pre -0.05 --post 0.1 --out " +
                           a.string());
    REQUIRE(r.exit_code == 0);

    const auto outputs = manifest_outputs(a);
    REQUIRE(outputs.contains("truth.json"));
    REQUIRE(outputs.contains("tensor/tensor.json"));
    REQUIRE(outputs.contains("tensor/band_high_gamma.f64"));
    for (const auto& [rel, checksum] : outputs.items())
        CHECK(io::file_checksum_hex(a / rel) == checksum.get<std::string>());

    const auto tensor = io::load_tensor(a / "tensor");
    CHECK(tensor.n_trials() == 39 * 3);
    CHECK(tensor.labels.size() == tensor.n_trials());
    CHECK(tensor.band("high_gamma").rate_hz == 200.0);

    const auto truth = io::load_truth(a / "truth.json");
    CHECK(truth.class_labels.size() == 39);

    SECTION("the same seed reproduces every output bitwise") {
        const auto b = test_root() / "synth_b";
        REQUIRE(run_cli("synth --seed 7 --trials-per-class 3 --electrodes 8"
                        " --pre -0.05 --post 0.1 --out " +
                        b.string())
                    .exit_code == 0);
        CHECK(manifest_outputs(b) == outputs);
    }

    SECTION("a different seed changes the data") {
        const auto c = test_root() / "synth_c";
        REQUIRE(run_cli("synth --seed 8 --trials-per-class 3 --electrodes 8"
                        " --pre -0.05 --post 0.1 --out " +
                        c.string())
                    .exit_code == 0);
        CHECK(manifest_outputs(c)["tensor/band_high_gamma.f64"] !=
              outputs["tensor/band_high_gamma.f64"]);
    }
}

TEST_CASE("failures print one machine-readable error object") {
    const auto out = test_root() / "err";

    const auto bad = run_cli("synth --snr 0 --out " + out.string());
    REQUIRE(bad.exit_code == 1);
    const auto err = json::parse(bad.err);
    CHECK(err.at("error").at("kind") == "invalid-input");
    CHECK(err.at("error").at("command") == "synth");
    CHECK_FALSE(err.at("error").at("message").get<std::string>().empty());

    const auto missing = run_cli("train --input " + (test_root() / "nowhere").string() +
                                 " --out " + out.string());
    REQUIRE(missing.exit_code == 1);
    CHECK(json::parse(missing.err).at("error").at("kind") == "io");

    CHECK(run_cli("synth").exit_code != 0);            // --out is required
    CHECK(run_cli("no-such-command").exit_code != 0);  // unknown subcommand
}

TEST_CASE("search and report form a reproducible pipeline") {
    const auto s = synth_dir();
    const std::string search_args = " --input " + s.string() + "/tensor" +
                                    " --task vowel --folds 3 --search-budget 2"
                                    " --logistic --seed 5 --out ";

    const auto r1 = test_root() / "run1";
    REQUIRE(run_cli("search" + search_args + r1.string()).exit_code == 0);

    const auto sj = io::load_json(r1 / "search.json");
    CHECK(sj.at("class_names").get<std::vector<std::string>>() ==
          std::vector<std::string>{"a", "i", "u"});
    CHECK(sj.at("configs").size() == 2);
    CHECK(sj.at("winner").at("test_accuracy_per_fold").size() == 3);
    const auto winner_id = sj.at("winner").at("id").get<std::size_t>();
    CHECK(winner_id < 2);
    REQUIRE(fs::exists(r1 / "confusion.json"));
    REQUIRE(fs::exists(r1 / "predictions.json"));
    REQUIRE(fs::exists(r1 / "search_log.jsonl"));
    for (int f = 0; f < 3; ++f)
        REQUIRE(fs::exists(r1 / "models" / ("fold_" + std::to_string(f)) / "model.json"));
    const auto loaded = io::load_model(r1 / "models" / "fold_0");
    CHECK(loaded.model.spec.hidden_dims.empty());  // --logistic space
    CHECK(loaded.model.spec.n_classes == 3);

    const auto p1 = test_root() / "rep1";
    REQUIRE(run_cli("report --input " + r1.string() + " --seed 5 --out " + p1.string())
                .exit_code == 0);
    const auto report = io::load_json(p1 / "report.json");
    CHECK(report.at("accuracy").get<double>() >= 0.0);
    CHECK(report.at("accuracy").get<double>() <= 1.0);
    CHECK(report.at("n_classes") == 3);
    CHECK(report.at("chance_mean").get<double>() == Catch::Approx(1.0 / 3).margin(0.1));
    CHECK_FALSE(report.contains("restricted"));  // vowel names are not CV labels

    // summary.tsv carries exactly the seven headline metrics, in order
    std::ifstream tsv(p1 / "summary.tsv");
    std::vector<std::string> metric_names;
    std::string line;
    std::getline(tsv, line);
    CHECK(line == "metric\tvalue");
    while (std::getline(tsv, line))
        metric_names.push_back(line.substr(0, line.find('\t')));
    CHECK(metric_names == std::vector<std::string>{
                              "accuracy", "chance_accuracy", "accuracy_over_chance",
                              "wolpaw_capacity_bits", "exact_capacity_bits",
                              "mutual_information_bits", "itr_bits_per_s"});
    REQUIRE(fs::exists(p1 / "folds.tsv"));

    SECTION("the same seed reproduces search and report outputs") {
        const auto r2 = test_root() / "run2";
        REQUIRE(run_cli("search" + search_args + r2.string()).exit_code == 0);
        CHECK(manifest_outputs(r2) == manifest_outputs(r1));

        const auto p2 = test_root() / "rep2";
        REQUIRE(run_cli("report --input " + r1.string() + " --seed 5 --out " + p2.string())
                    .exit_code == 0);
        CHECK(manifest_outputs(p2) == manifest_outputs(p1));
    }

    SECTION("evaluate emits the same metrics without plot files") {
        const auto e = test_root() / "eval";
        REQUIRE(run_cli("evaluate --input " + r1.string() + " --seed 5 --out " + e.string())
                    .exit_code == 0);
        const auto ev = io::load_json(e / "evaluation.json");
        for (const auto* key : {"accuracy", "chance_mean", "mutual_information_bits",
                                "capacity_bits", "wolpaw_bits", "itr_bits_per_s"})
            CHECK(ev.contains(key));
        CHECK_FALSE(fs::exists(e / "summary.tsv"));
    }

    SECTION("cluster summarizes the winner confusion") {
        const auto c = test_root() / "clus";
        REQUIRE(run_cli("cluster --input " + r1.string() + " --out " + c.string())
                    .exit_code == 0);
        const auto cj = io::load_json(c / "clusters.json");
        CHECK(cj.at("n_clusters").get<std::size_t>() >= 1);
        CHECK(cj.at("n_clusters").get<std::size_t>() <= 3);
        CHECK(cj.at("assignments").size() == 3);
        const auto dendro = io::load_dendrogram(c / "dendrogram.json");
        CHECK(dendro.leaf_labels == std::vector<std::string>{"a", "i", "u"});
        REQUIRE(fs::exists(c / "count_curve.tsv"));
        // vowel names are not CV labels, so no articulatory correlations
        CHECK_FALSE(fs::exists(c / "distance_correlation.json"));
    }
}

TEST_CASE("train fits one fold and checkpoints the model") {
    const auto s = synth_dir();
    const auto t = test_root() / "train";
    const auto r = run_cli("train --input " + s.string() + "/tensor" +
                           " --task vowel --folds 3 --fold 1 --hidden 8"
                           " --nonlinearity tanh --epochs 5 --batch 32 --seed 2 --out " +
                           t.string());
    REQUIRE(r.exit_code == 0);

    const auto tj = io::load_json(t / "train.json");
    CHECK(tj.at("fold") == 1);
    CHECK(tj.at("n_classes") == 3);
    CHECK(tj.at("best_epoch").get<std::size_t>() < 5);
    CHECK(tj.at("trace").size() == tj.at("stopped_epoch").get<std::size_t>());
    const double acc = tj.at("test_accuracy").get<double>();
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);

    const auto loaded = io::load_model(t / "model");
    CHECK(loaded.model.spec.hidden_dims == std::vector<std::size_t>{8});
    CHECK(loaded.config.max_epochs == 5);
}

TEST_CASE("xfreq reports the activity split against ground truth") {
    const auto s2 = test_root() / "synth_beta";
    REQUIRE(run_cli("synth --seed 11 --trials-per-class 3 --electrodes 12"
                    " --coupling 0.7 --bands high_gamma,beta_aggregate"
                    " --pre -0.1 --post 0.2 --out " +
                    s2.string())
                .exit_code == 0);

    const auto x = test_root() / "xfreq";
    REQUIRE(run_cli("xfreq --input " + s2.string() + "/tensor --truth " + s2.string() +
                    "/truth.json --out " + x.string())
                .exit_code == 0);

    const auto xj = io::load_json(x / "xfreq.json");
    CHECK(xj.at("n_units") == 39 * 12);
    CHECK(xj.at("n_active").get<std::size_t>() + xj.at("n_inactive").get<std::size_t>() ==
          39 * 12);
    CHECK(xj.at("n_fit_points").get<std::size_t>() >= 2);
    const double agreement = xj.at("truth_agreement").get<double>();
    CHECK(agreement >= 0.0);
    CHECK(agreement <= 1.0);
    for (const auto* name : {"spectrum.tsv", "histogram_corr.tsv", "histogram_power.tsv",
                             "power_curve.tsv", "scatter.tsv"})
        REQUIRE(fs::exists(x / name));

    std::ifstream scatter(x / "scatter.tsv");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(scatter, line)) ++rows;
    CHECK(rows == 1 + 39 * 12);
}

TEST_CASE("scaling sweeps training-set size") {
    const auto s = synth_dir();
    const auto out = test_root() / "scaling";
    REQUIRE(run_cli("scaling --input " + s.string() + "/tensor" +
                    " --task vowel --folds 3 --fraction 0.5,1 --seed 4 --out " +
                    out.string())
                .exit_code == 0);

    const auto sj = io::load_json(out / "scaling.json");
    CHECK(sj.at("points").size() == 6);  // two fractions x three folds
    CHECK(sj.contains("slope_per_1000"));
    CHECK(sj.contains("stderr_per_1000"));
    std::ifstream tsv(out / "scaling.tsv");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(tsv, line)) ++rows;
    CHECK(rows == 7);
}

TEST_CASE("timepoint traces accuracy along the trial axis") {
    const auto s = synth_dir();
    const auto out = test_root() / "timepoint";
    REQUIRE(run_cli("timepoint --input " + s.string() + "/tensor" +
                    " --task vowel --folds 3 --seed 9 --out " +
                    out.string())
                .exit_code == 0);

    const auto tj = io::load_json(out / "timepoint.json");
    CHECK(tj.at("band") == "high_gamma");
    CHECK(tj.at("n_classes") == 3);
    const auto accs = tj.at("accuracies").get<std::vector<double>>();
    CHECK(accs.size() == 31);  // 0.15 s window at 200 Hz
    for (double a : accs) {
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
    }
}

TEST_CASE("preprocess turns raw voltage into a labeled tensor") {
    const auto raw_dir = test_root() / "raw";
    signal::RawRecording raw;
    // 6001 samples at 1000 Hz resample onto an exact 200 Hz grid, and the
    // filter bank's 200 Hz top filter stays below Nyquist
    const std::size_t n_samples = 6001;
    raw.voltage = Array2(4, n_samples);
    auto rng = make_rng(17);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t e = 0; e < 4; ++e)
        for (std::size_t s = 0; s < n_samples; ++s)
            raw.voltage(e, s) = gauss(rng) + std::sin(2 * 3.14159265 * 90.0 * s / 1000.0);
    raw.sample_rate_hz = 1000.0;
    raw.baseline_window = {0, 400};
    raw.event_times_s = {2.0, 4.0};
    io::save_raw(raw_dir, raw, {"ba", "da"});

    const auto out = test_root() / "pre";
    REQUIRE(run_cli("preprocess --input " + raw_dir.string() +
                    " --bands high_gamma --pre -0.05 --post 0.1 --out " + out.string())
                .exit_code == 0);

    const auto tensor = io::load_tensor(out / "tensor");
    CHECK(tensor.labels == std::vector<std::string>{"ba", "da"});
    REQUIRE(tensor.bands.size() == 1);
    CHECK(tensor.bands[0].name == "high_gamma");
    CHECK(tensor.bands[0].rate_hz == 200.0);
    CHECK(tensor.n_trials() == 2);
    CHECK(tensor.n_electrodes() == 4);

    const auto cj = io::load_json(out / "channels.json");
    CHECK(cj.at("kept_electrodes").size() == 4);
}
