#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cvdecode/array.hpp"
#include "cvdecode/bands.hpp"
#include "cvdecode/dataset.hpp"
#include "cvdecode/error.hpp"
#include "cvdecode/labels.hpp"
#include "cvdecode/rng.hpp"
#include "cvdecode/signal.hpp"

namespace cvdecode::synth {

// ---------------------------------------------------------------------------
// Hierarchy specification
// ---------------------------------------------------------------------------

/// Three-level tree: top groups contain mid groups contain consonants;
/// classes are consonant x vowel syllables. Groups are named after the
/// articulatory categories so generated labels line up with the feature
/// table.
struct HierarchySpec {
    struct Mid {
        std::string name;
        std::vector<std::string> consonants;
    };
    struct Top {
        std::string name;
        std::vector<Mid> mids;
    };
    std::vector<Top> tops;

    std::vector<std::string> consonants() const {
        std::vector<std::string> out;
        for (const auto& t : tops)
            for (const auto& m : t.mids)
                out.insert(out.end(), m.consonants.begin(), m.consonants.end());
        return out;
    }

    void validate() const {
        if (tops.empty()) throw InvalidInputError("hierarchy: no top groups");
        std::set<std::string> seen;
        for (const auto& t : tops) {
            if (t.mids.empty())
                throw InvalidInputError("hierarchy: top group '" + t.name + "' is empty");
            for (const auto& m : t.mids) {
                if (m.consonants.empty())
                    throw InvalidInputError("hierarchy: mid group '" + m.name + "' is empty");
                for (const auto& c : m.consonants)
                    if (!seen.insert(c).second)
                        throw InvalidInputError("hierarchy: consonant '" + c +
                                                "' appears twice");
            }
        }
    }
};

/// Inventory whose tree matches the feature table's major and location
/// assignments exactly: 13 consonants whose location categories nest
/// cleanly inside their major articulator.
inline HierarchySpec default_hierarchy() {
    HierarchySpec h;
    h.tops.push_back({"lips",
                      {{"bilabial", {"b", "p", "m"}}, {"labiodental", {"f", "v"}}}});
    h.tops.push_back({"front_tongue", {{"alveolar", {"d", "t", "n", "s", "z", "l"}}}});
    h.tops.push_back({"back_tongue", {{"none", {"g", "k"}}}});
    return h;
}

// ---------------------------------------------------------------------------
// Generator configuration
// ---------------------------------------------------------------------------

struct SynthConfig {
    HierarchySpec hierarchy = default_hierarchy();
    std::vector<std::string> vowels = {"a", "i", "u"};
    std::size_t trials_per_class = 30;
    std::size_t n_electrodes = 24;
    double window_pre_s = -0.5;
    double window_post_s = 0.8;
    double snr = 3.0;            // Hgamma signal scale against unit noise
    double coupling = 0.6;       // beta-range channels at active electrodes
    double band_noise_sd = 1.0;  // noise scale of all non-Hgamma channels
    std::size_t electrodes_per_top = 6;
    std::size_t electrodes_per_mid = 4;
    std::size_t electrodes_per_leaf = 2;
    std::vector<std::string> band_channels = {"high_gamma"};
    bool include_filter_channels = false;  // 40 per-filter channels (coupling analysis)
    double bump_center_s = 0.05;
    double bump_width_s = 0.1;
    std::uint64_t seed = 0;

    std::size_t n_classes() const { return hierarchy.consonants().size() * vowels.size(); }

    void validate() const {
        hierarchy.validate();
        if (vowels.empty()) throw InvalidInputError("synth: no vowels");
        if (trials_per_class == 0 || n_electrodes == 0)
            throw InvalidInputError("synth: trials_per_class and n_electrodes must be >= 1");
        if (!(snr > 0.0)) throw InvalidInputError("synth: SNR must be > 0");
        if (!(window_pre_s < window_post_s))
            throw InvalidInputError("synth: window must satisfy pre < post");
        if (band_channels.empty() && !include_filter_channels)
            throw InvalidInputError("synth: nothing to generate");
    }
};

/// What the generator actually did, for oracle checks downstream.
struct SynthTruth {
    std::vector<std::string> class_labels;        // CV per class index
    std::vector<std::string> top_of_class;        // hierarchy group names
    std::vector<std::string> mid_of_class;
    std::vector<std::set<std::size_t>> active_electrodes;  // per class
    double snr = 0.0;
    double coupling = 0.0;
    double band_noise_sd = 1.0;

    bool active(std::size_t cls, std::size_t electrode) const {
        return active_electrodes[cls].count(electrode) > 0;
    }
};

struct SynthResult {
    signal::SpectralTensor tensor;
    std::vector<std::string> labels;  // CV label per trial
    SynthTruth truth;
};

namespace detail {

/// Linear interpolation of src (on a grid of src_rate starting at t0) onto
/// an equally-anchored grid of dst_rate with dst_n samples.
inline std::vector<double> resample_trace(const std::vector<double>& src, double src_rate,
                                          double dst_rate, std::size_t dst_n) {
    std::vector<double> out(dst_n);
    const std::size_t n = src.size();
    for (std::size_t j = 0; j < dst_n; ++j) {
        const double pos = static_cast<double>(j) * src_rate / dst_rate;
        std::size_t i0 = static_cast<std::size_t>(pos);
        if (i0 >= n - 1) {
            out[j] = src[n - 1];
            continue;
        }
        const double frac = pos - static_cast<double>(i0);
        out[j] = src[i0] * (1.0 - frac) + src[i0 + 1] * frac;
    }
    return out;
}

}  // namespace detail

/// Deterministic synthetic tensor with a planted hierarchy and planted
/// cross-band coupling.
///
/// Active electrodes accumulate down the tree (top extras + mid extras +
/// leaf extras), so sibling classes share more electrodes the deeper their
/// common ancestor. Hgamma at an electrode is snr * bump(t) when active
/// plus unit Gaussian noise; channels whose center lies in the beta range
/// copy coupling * Hgamma (resampled to their own grid) at active
/// electrodes; filter channels in the Hgamma range copy the Hgamma trace at
/// every electrode; everything else is pure noise.
inline SynthResult synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    auto rng = make_rng(derive_seed(cfg.seed, "synth"));

    // -- electrode sets inherited through the tree --------------------------
    std::vector<std::size_t> pool(cfg.n_electrodes);
    std::iota(pool.begin(), pool.end(), 0);
    auto draw_set = [&](std::size_t k) {
        std::vector<std::size_t> p = pool;
        std::shuffle(p.begin(), p.end(), rng);
        k = std::min(k, p.size());
        return std::set<std::size_t>(p.begin(), p.begin() + k);
    };

    SynthResult result;
    SynthTruth& truth = result.truth;
    truth.snr = cfg.snr;
    truth.coupling = cfg.coupling;
    truth.band_noise_sd = cfg.band_noise_sd;

    for (const auto& top : cfg.hierarchy.tops) {
        const std::set<std::size_t> top_set = draw_set(cfg.electrodes_per_top);
        for (const auto& mid : top.mids) {
            std::set<std::size_t> mid_set = top_set;
            for (auto e : draw_set(cfg.electrodes_per_mid)) mid_set.insert(e);
            for (const auto& consonant : mid.consonants) {
                for (const auto& vowel : cfg.vowels) {
                    std::set<std::size_t> leaf_set = mid_set;
                    for (auto e : draw_set(cfg.electrodes_per_leaf)) leaf_set.insert(e);
                    truth.class_labels.push_back(consonant + vowel);
                    truth.top_of_class.push_back(top.name);
                    truth.mid_of_class.push_back(mid.name);
                    truth.active_electrodes.push_back(std::move(leaf_set));
                }
            }
        }
    }
    const std::size_t n_classes = truth.class_labels.size();
    const std::size_t n_trials = n_classes * cfg.trials_per_class;

    // -- channel plan --------------------------------------------------------
    struct ChannelPlan {
        std::string name;
        double center_hz;
        bool is_hg;       // carries the Hgamma trace itself
        bool is_coupled;  // beta-range: coupling * Hgamma at active electrodes
        double rate_hz;
        std::ptrdiff_t n_pre, n_post;
        std::size_t n_time;
    };
    const signal::BandDefinition beta = signal::beta_aggregate_band();
    const signal::BandDefinition hg = signal::high_gamma_band();
    std::vector<ChannelPlan> plan;
    auto add_channel = [&](const std::string& name, double center, bool is_hg_channel) {
        ChannelPlan ch;
        ch.name = name;
        ch.center_hz = center;
        ch.is_hg = is_hg_channel;
        ch.is_coupled = !is_hg_channel && beta.contains(center);
        ch.rate_hz = center * 200.0 / 112.5;
        ch.n_pre = static_cast<std::ptrdiff_t>(std::llround(-cfg.window_pre_s * ch.rate_hz));
        ch.n_post = static_cast<std::ptrdiff_t>(std::llround(cfg.window_post_s * ch.rate_hz));
        ch.n_time = static_cast<std::size_t>(ch.n_pre + ch.n_post + 1);
        plan.push_back(ch);
    };
    for (const auto& name : cfg.band_channels) {
        const auto band = signal::band_by_name(name);
        add_channel(band.name, band.center_hz(), band.name == "high_gamma");
    }
    if (cfg.include_filter_channels) {
        const auto bank = signal::default_filter_bank();
        for (std::size_t i = 0; i < bank.size(); ++i) {
            const double c = bank.filters[i].center_hz;
            add_channel("filter_" + std::to_string(i), c, hg.contains(c));
        }
    }

    // The Hgamma base trace is generated on the finest Hgamma-ish grid in
    // the plan (or the standard 200 Hz grid when no such channel exists).
    double hg_rate = hg.center_hz() * 200.0 / 112.5;
    for (const auto& ch : plan)
        if (ch.is_hg) hg_rate = std::max(hg_rate, ch.rate_hz);
    const auto hg_pre = static_cast<std::ptrdiff_t>(std::llround(-cfg.window_pre_s * hg_rate));
    const auto hg_post = static_cast<std::ptrdiff_t>(std::llround(cfg.window_post_s * hg_rate));
    const std::size_t hg_n = static_cast<std::size_t>(hg_pre + hg_post + 1);

    std::vector<double> bump(hg_n);
    for (std::size_t k = 0; k < hg_n; ++k) {
        const double t = (static_cast<double>(k) - static_cast<double>(hg_pre)) / hg_rate;
        const double z = (t - cfg.bump_center_s) / cfg.bump_width_s;
        bump[k] = std::exp(-0.5 * z * z);
    }

    result.tensor.bands.reserve(plan.size());
    for (const auto& ch : plan) {
        signal::TensorBand band;
        band.name = ch.name;
        band.center_hz = ch.center_hz;
        band.rate_hz = ch.rate_hz;
        band.nominal_rate_hz = ch.rate_hz;
        band.t_start_s = -static_cast<double>(ch.n_pre) / ch.rate_hz;
        band.values = Array3(n_trials, cfg.n_electrodes, ch.n_time);
        result.tensor.bands.push_back(std::move(band));
    }

    // -- trial loop ----------------------------------------------------------
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> h(hg_n);
    std::size_t trial = 0;
    for (std::size_t cls = 0; cls < n_classes; ++cls) {
        for (std::size_t t = 0; t < cfg.trials_per_class; ++t, ++trial) {
            result.labels.push_back(truth.class_labels[cls]);
            for (std::size_t e = 0; e < cfg.n_electrodes; ++e) {
                const double a = truth.active(cls, e) ? 1.0 : 0.0;
                for (std::size_t k = 0; k < hg_n; ++k)
                    h[k] = cfg.snr * bump[k] * a + gauss(rng);

                for (std::size_t ci = 0; ci < plan.size(); ++ci) {
                    const auto& ch = plan[ci];
                    double* dst = result.tensor.bands[ci].values.slice(trial, e);
                    if (ch.is_hg) {
                        const auto trace =
                            detail::resample_trace(h, hg_rate, ch.rate_hz, ch.n_time);
                        std::copy(trace.begin(), trace.end(), dst);
                    } else if (ch.is_coupled && a > 0.0) {
                        const auto base =
                            detail::resample_trace(h, hg_rate, ch.rate_hz, ch.n_time);
                        for (std::size_t k = 0; k < ch.n_time; ++k)
                            dst[k] = cfg.coupling * base[k] + cfg.band_noise_sd * gauss(rng);
                    } else {
                        for (std::size_t k = 0; k < ch.n_time; ++k)
                            dst[k] = cfg.band_noise_sd * gauss(rng);
                    }
                }
            }
        }
    }
    result.tensor.labels = result.labels;
    return result;
}

// ---------------------------------------------------------------------------
// Small feature-space fixtures for classifier tests
// ---------------------------------------------------------------------------

/// Two-class XOR pattern in 2 dimensions: class 0 occupies quadrants where
/// x0*x1 > 0. Not linearly separable by construction.
inline dataset::LabeledDataset make_xor_dataset(std::size_t n_per_class, double noise_sd,
                                                std::uint64_t seed) {
    if (n_per_class < 2) throw InvalidInputError("xor dataset: need >= 2 per class");
    auto rng = make_rng(derive_seed(seed, "xor"));
    std::normal_distribution<double> gauss(0.0, noise_sd);
    dataset::LabeledDataset ds;
    ds.class_names = {"same_sign", "opposite_sign"};
    ds.layout.n_features = 2;
    ds.X = Array2(2 * n_per_class, 2);
    const double corners[4][2] = {{1, 1}, {-1, -1}, {1, -1}, {-1, 1}};
    for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
        const int cls = i < n_per_class ? 0 : 1;
        const auto& corner = corners[2 * cls + (i % 2)];
        ds.X(i, 0) = corner[0] + gauss(rng);
        ds.X(i, 1) = corner[1] + gauss(rng);
        ds.y.push_back(cls);
    }
    return ds;
}

/// Two well-separated Gaussian blobs; linearly separable when margin is
/// large against the noise.
inline dataset::LabeledDataset make_separable_dataset(std::size_t n_per_class,
                                                      std::size_t n_features, double margin,
                                                      double noise_sd, std::uint64_t seed) {
    if (n_per_class < 2 || n_features == 0)
        throw InvalidInputError("separable dataset: bad shape");
    auto rng = make_rng(derive_seed(seed, "separable"));
    std::normal_distribution<double> gauss(0.0, noise_sd);
    dataset::LabeledDataset ds;
    ds.class_names = {"neg", "pos"};
    ds.layout.n_features = n_features;
    ds.X = Array2(2 * n_per_class, n_features);
    for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
        const int cls = i < n_per_class ? 0 : 1;
        const double center = cls == 0 ? -margin : margin;
        for (std::size_t j = 0; j < n_features; ++j)
            ds.X(i, j) = (j == 0 ? center : 0.0) + gauss(rng);
        ds.y.push_back(cls);
    }
    return ds;
}

}  // namespace cvdecode::synth
