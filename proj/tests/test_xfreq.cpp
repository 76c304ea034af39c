#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "cvdecode/rng.hpp"
#include "cvdecode/synth.hpp"
#include "cvdecode/xfreq.hpp"

using namespace cvdecode;

namespace {

const double kNan = std::numeric_limits<double>::quiet_NaN();

signal::AverageBand make_band(const std::string& name, double rate_hz, double t_start_s,
                              std::size_t n_classes, std::size_t n_electrodes,
                              std::size_t n_time) {
    signal::AverageBand band;
    band.name = name;
    band.center_hz = rate_hz;
    band.rate_hz = rate_hz;
    band.nominal_rate_hz = rate_hz;
    band.t_start_s = t_start_s;
    band.values = Array3(n_classes, n_electrodes, n_time);
    return band;
}

}  // namespace

TEST_CASE("axis resampling is exact on linear traces and clamps outside") {
    const std::vector<double> src_t = {0.0, 0.1, 0.2, 0.3};
    const std::vector<double> src_v = {1.0, 3.0, 5.0, 7.0};  // 20 t + 1
    const std::vector<double> dst_t = {-0.5, 0.05, 0.15, 0.25, 0.9};
    const auto out = xfreq::detail::resample_to_axis(src_v.data(), 4, src_t, dst_t);
    CHECK(out[0] == 1.0);  // clamped to the first sample
    CHECK(out[1] == Catch::Approx(2.0).margin(1e-12));
    CHECK(out[2] == Catch::Approx(4.0).margin(1e-12));
    CHECK(out[3] == Catch::Approx(6.0).margin(1e-12));
    CHECK(out[4] == 7.0);  // clamped to the last sample
}

TEST_CASE("windowed power averages the reference trace") {
    signal::TrialAverageTensor avg;
    avg.class_labels = {"ba", "da"};
    auto hg = make_band("high_gamma", 200.0, -0.1, 2, 3, 71);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t e = 0; e < 3; ++e)
            for (std::size_t k = 0; k < 71; ++k) {
                const double t = -0.1 + static_cast<double>(k) / 200.0;
                hg.values(c, e, k) = static_cast<double>(c + 1) * t;
            }
    avg.bands.push_back(std::move(hg));

    // samples with -0.07 <= t <= 0.14 survive; their times average to 0.035
    const auto power = xfreq::hg_power(avg, -0.0749, 0.1401);
    CHECK(power.rows() == 2);
    CHECK(power.cols() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(power(0, e) == Catch::Approx(0.035).margin(1e-12));
        CHECK(power(1, e) == Catch::Approx(0.070).margin(1e-12));
    }

    // the default window scales the same way
    const auto dflt = xfreq::hg_power(avg);
    CHECK(dflt(1, 0) == Catch::Approx(2.0 * dflt(0, 0)).margin(1e-12));

    CHECK_THROWS_AS(xfreq::hg_power(avg, 0.2, 0.1), InvalidInputError);
    CHECK_THROWS_AS(xfreq::hg_power(avg, -0.07, 0.5), InvalidInputError);
    CHECK_THROWS_AS(xfreq::hg_power(avg, -0.5, 0.14), InvalidInputError);
}

TEST_CASE("correlation spectrum is exactly +-1 for affine slow traces") {
    // slow band on a 40 Hz grid over the same span as the 200 Hz reference:
    // linear interpolation of an affine trace is exact, so the correlation
    // carries no resampling error
    for (const double slope : {2.0, -2.0}) {
        signal::TrialAverageTensor avg;
        avg.class_labels = {"ba", "da"};
        auto hg = make_band("high_gamma", 200.0, 0.0, 2, 2, 41);
        auto beta = make_band("beta_aggregate", 40.0, 0.0, 2, 2, 9);
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t e = 0; e < 2; ++e) {
                for (std::size_t k = 0; k < 41; ++k)
                    hg.values(c, e, k) = static_cast<double>(k) / 200.0;
                for (std::size_t k = 0; k < 9; ++k)
                    beta.values(c, e, k) = slope * static_cast<double>(k) / 40.0 + 5.0;
            }
        avg.bands.push_back(std::move(hg));
        avg.bands.push_back(std::move(beta));

        const auto spec = xfreq::band_hg_correlation(avg);
        REQUIRE(spec.filter_names == std::vector<std::string>{"beta_aggregate"});
        REQUIRE(spec.n_units == std::vector<std::size_t>{4});
        CHECK(spec.mean[0] == Catch::Approx(slope > 0 ? 1.0 : -1.0).margin(1e-9));
        CHECK(spec.sem[0] == Catch::Approx(0.0).margin(1e-9));
        CHECK(spec.excluded_pairs == 0);
    }
}

TEST_CASE("flat traces drop out of the spectrum as excluded pairs") {
    signal::TrialAverageTensor avg;
    avg.class_labels = {"ba"};
    auto hg = make_band("high_gamma", 100.0, 0.0, 1, 2, 10);
    auto other = make_band("alpha", 100.0, 0.0, 1, 2, 10);
    for (std::size_t k = 0; k < 10; ++k) {
        hg.values(0, 0, k) = static_cast<double>(k);
        hg.values(0, 1, k) = static_cast<double>(k);
        other.values(0, 0, k) = static_cast<double>(k % 3);
        other.values(0, 1, k) = 7.0;  // constant: undefined correlation
    }
    avg.bands.push_back(std::move(hg));
    avg.bands.push_back(std::move(other));

    const auto spec = xfreq::band_hg_correlation(avg);
    CHECK(spec.n_units == std::vector<std::size_t>{1});
    CHECK(spec.excluded_pairs == 1);

    signal::TrialAverageTensor only_ref;
    only_ref.class_labels = {"ba"};
    only_ref.bands.push_back(make_band("high_gamma", 100.0, 0.0, 1, 2, 10));
    CHECK_THROWS_AS(xfreq::band_hg_correlation(only_ref), InvalidInputError);
}

TEST_CASE("spectrum mean tracks the planted coupling strength") {
    auto rng = make_rng(3);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t C = 20, E = 20, T = 60;
    signal::TrialAverageTensor avg;
    for (std::size_t c = 0; c < C; ++c) avg.class_labels.push_back("c" + std::to_string(c));
    auto hg = make_band("high_gamma", 200.0, 0.0, C, E, T);
    auto beta = make_band("beta_aggregate", 200.0, 0.0, C, E, T);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t e = 0; e < E; ++e)
            for (std::size_t k = 0; k < T; ++k) {
                const double h = gauss(rng);
                hg.values(c, e, k) = h;
                beta.values(c, e, k) = 0.6 * h + 0.8 * gauss(rng);
            }
    avg.bands.push_back(std::move(hg));
    avg.bands.push_back(std::move(beta));

    const auto spec = xfreq::band_hg_correlation(avg);
    // attenuation of a unit-variance source: r = c / sqrt(c^2 + sigma^2)
    CHECK(spec.mean[0] == Catch::Approx(0.6).margin(0.05));
    CHECK(spec.sem[0] < 0.02);
}

TEST_CASE("activity threshold comes from the zero crossing of the fit") {
    // no point sits on the crossing itself; its flag would hinge on
    // last-bit rounding in the fit
    const std::vector<double> power = {-1.0, 0.0, 1.0, 1.75, 3.0, 4.0};
    std::vector<double> corr;
    for (double p : power) corr.push_back(0.1 * p - 0.2);

    const auto split = xfreq::fit_activity_threshold(power, corr);
    CHECK(split.slope == Catch::Approx(0.1).margin(1e-12));
    CHECK(split.intercept == Catch::Approx(-0.2).margin(1e-12));
    CHECK(split.threshold == Catch::Approx(2.0).margin(1e-9));
    CHECK(split.n_fit_points == 4);  // only strictly positive power enters
    CHECK(split.active ==
          std::vector<bool>{false, false, false, false, true, true});

    // an undefined correlation is excluded from the fit but still flagged
    auto with_nan = corr;
    with_nan[3] = kNan;
    const auto partial = xfreq::fit_activity_threshold(power, with_nan);
    CHECK(partial.n_fit_points == 3);
    CHECK(partial.active.size() == 6);
}

TEST_CASE("degenerate scatters refuse to define a split") {
    CHECK_THROWS_AS(xfreq::fit_activity_threshold({-1.0, 1.0}, {0.1, 0.2}),
                    SplitUndefinedError);
    CHECK_THROWS_AS(xfreq::fit_activity_threshold({1.0, 1.0}, {0.1, 0.2}),
                    SplitUndefinedError);
    CHECK_THROWS_AS(xfreq::fit_activity_threshold({1.0, 2.0, 3.0}, {0.5, 0.5, 0.5}),
                    SplitUndefinedError);
    CHECK_THROWS_AS(xfreq::fit_activity_threshold({1.0}, {0.5}), SplitUndefinedError);
    CHECK_THROWS_AS(xfreq::fit_activity_threshold({1.0, 2.0}, {0.5}), InvalidInputError);
}

TEST_CASE("group spectra demand both activity groups") {
    signal::TrialAverageTensor avg;
    avg.class_labels = {"ba", "da"};
    auto hg = make_band("high_gamma", 100.0, 0.0, 2, 2, 12);
    auto beta = make_band("beta_aggregate", 100.0, 0.0, 2, 2, 12);
    auto rng = make_rng(9);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t e = 0; e < 2; ++e)
            for (std::size_t k = 0; k < 12; ++k) {
                hg.values(c, e, k) = gauss(rng);
                beta.values(c, e, k) = gauss(rng);
            }
    avg.bands.push_back(std::move(hg));
    avg.bands.push_back(std::move(beta));

    xfreq::ActivitySplit split;
    split.n_classes = 2;
    split.n_electrodes = 2;
    split.active = {true, false, true, false};
    split.power = {1.0, 0.1, 2.0, 0.2};
    split.corr = {0.5, 0.0, 0.6, 0.1};

    const auto [active, inactive] = xfreq::split_correlation_spectra(avg, split);
    CHECK(active.group == "active");
    CHECK(inactive.group == "inactive");
    CHECK(active.n_units == std::vector<std::size_t>{2});
    CHECK(inactive.n_units == std::vector<std::size_t>{2});

    split.active = {true, true, true, true};
    CHECK_THROWS_AS(xfreq::split_correlation_spectra(avg, split), GroupEmptyError);
    split.active = {false, false, false, false};
    CHECK_THROWS_AS(xfreq::split_correlation_spectra(avg, split), GroupEmptyError);
    split.active = {true, false};
    CHECK_THROWS_AS(xfreq::split_correlation_spectra(avg, split), InvalidInputError);
}

TEST_CASE("coupling histograms count defined units over fixed ranges") {
    xfreq::ActivitySplit split;
    split.corr = {-1.0, -0.5, 0.0, 0.5, 1.0, kNan};
    split.power = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};

    const auto h = xfreq::hg_beta_histogram(split);
    CHECK(h.n_units == 5);
    REQUIRE(h.correlation.edges.size() == 41);
    CHECK(h.correlation.edges.front() == -1.0);
    CHECK(h.correlation.edges.back() == 1.0);
    std::size_t corr_total = 0;
    for (auto c : h.correlation.counts) corr_total += c;
    CHECK(corr_total == 5);
    std::size_t power_total = 0;
    for (auto c : h.power.counts) power_total += c;
    CHECK(power_total == 6);
    CHECK(h.power.edges.front() == 1.0);
    CHECK(h.power.edges.back() == 6.0);

    // a flat power spread widens to a unit window so the bin is well formed
    xfreq::ActivitySplit flat;
    flat.corr = {0.1, 0.2};
    flat.power = {3.0, 3.0};
    const auto hf = xfreq::hg_beta_histogram(flat);
    CHECK(hf.power.edges.front() == 2.5);
    CHECK(hf.power.edges.back() == 3.5);

    xfreq::ActivitySplit none;
    none.corr = {kNan};
    none.power = {1.0};
    CHECK_THROWS_AS(xfreq::hg_beta_histogram(none), InvalidInputError);
}

TEST_CASE("equal-count power bins chunk the sorted units") {
    std::vector<double> power, corr;
    for (int i = 27; i >= 1; --i) {
        power.push_back(static_cast<double>(i));
        corr.push_back(0.01 * static_cast<double>(i));
    }
    const auto curve = xfreq::binned_power_correlation(power, corr, 9);
    REQUIRE(curve.counts == std::vector<std::size_t>(9, 3));
    for (std::size_t b = 0; b < 9; ++b) {
        const double want = 3.0 * static_cast<double>(b) + 2.0;
        CHECK(curve.mean_power[b] == Catch::Approx(want));
        CHECK(curve.mean_corr[b] == Catch::Approx(0.01 * want));
        if (b > 0) CHECK(curve.mean_power[b] > curve.mean_power[b - 1]);
    }

    // 30 units over 9 bins: integer chunking gives the 3/3/4 pattern
    std::vector<double> p30, c30;
    for (int i = 0; i < 30; ++i) {
        p30.push_back(static_cast<double>(i));
        c30.push_back(0.0);
    }
    const auto c = xfreq::binned_power_correlation(p30, c30, 9);
    CHECK(c.counts == std::vector<std::size_t>{3, 3, 4, 3, 3, 4, 3, 3, 4});

    // undefined correlations fall out before binning
    std::vector<double> pn = p30, cn = c30;
    cn[0] = kNan;
    const auto cna = xfreq::binned_power_correlation(pn, cn, 9);
    std::size_t total = 0;
    for (auto v : cna.counts) total += v;
    CHECK(total == 29);

    CHECK_THROWS_AS(xfreq::binned_power_correlation({1.0}, {0.1, 0.2}, 1),
                    InvalidInputError);
    CHECK_THROWS_AS(xfreq::binned_power_correlation({1.0, 2.0}, {0.1, 0.2}, 3),
                    InvalidInputError);
}

TEST_CASE("planted coupling splits electrodes close to the ground truth") {
    synth::SynthConfig cfg;
    cfg.trials_per_class = 8;
    cfg.n_electrodes = 12;
    cfg.window_pre_s = -0.15;
    cfg.window_post_s = 0.25;
    cfg.snr = 3.0;
    cfg.coupling = 0.7;
    cfg.band_channels = {"high_gamma", "beta_aggregate"};
    cfg.seed = 21;
    const auto data = synth::synth_generate(cfg);

    const auto averaged =
        signal::trial_average(data.tensor, data.labels, data.truth.class_labels);
    REQUIRE(averaged.average.class_labels == data.truth.class_labels);

    const auto split = xfreq::activity_split(averaged.average);
    std::size_t agree = 0, total = 0;
    for (std::size_t c = 0; c < split.n_classes; ++c)
        for (std::size_t e = 0; e < split.n_electrodes; ++e) {
            agree += split.unit_active(c, e) == data.truth.active(c, e);
            ++total;
        }
    CHECK(static_cast<double>(agree) / static_cast<double>(total) >= 0.85);

    const auto [active, inactive] = xfreq::split_correlation_spectra(averaged.average, split);
    CHECK(active.mean[0] > 0.2);
    CHECK(active.mean[0] > inactive.mean[0]);
    CHECK(std::abs(inactive.mean[0]) < 0.15);
}

TEST_CASE("multiband feature sets share bookkeeping and stack widths") {
    synth::SynthConfig cfg;
    cfg.trials_per_class = 3;
    cfg.n_electrodes = 4;
    cfg.window_pre_s = -0.1;
    cfg.window_post_s = 0.2;
    cfg.band_channels = {"high_gamma", "beta_aggregate"};
    cfg.seed = 2;
    const auto data = synth::synth_generate(cfg);
    const std::size_t t_beta = data.tensor.band("beta_aggregate").n_time();
    const std::size_t t_hg = data.tensor.band("high_gamma").n_time();

    const auto sets =
        xfreq::multiband_feature_sets(data.tensor, data.labels, "beta_aggregate",
                                      xfreq::kHighGammaName, 1);
    CHECK(sets.band_only.n_features() == 4 * t_beta);
    CHECK(sets.combined.n_features() == 4 * (t_beta + t_hg));
    CHECK(sets.band_only.y == sets.combined.y);
    CHECK(sets.band_only.class_names == sets.combined.class_names);

    // asking for the reference band itself just stacks it twice
    const auto twice = xfreq::multiband_feature_sets(data.tensor, data.labels,
                                                     "high_gamma", "high_gamma", 1);
    CHECK(twice.combined.n_features() == 2 * twice.band_only.n_features());
}
