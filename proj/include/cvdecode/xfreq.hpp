#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cvdecode/dataset.hpp"
#include "cvdecode/error.hpp"
#include "cvdecode/metrics.hpp"
#include "cvdecode/signal.hpp"
#include "cvdecode/stats.hpp"

namespace cvdecode::xfreq {

constexpr double kPowerWindowLo = -0.070;
constexpr double kPowerWindowHi = 0.140;
constexpr const char* kHighGammaName = "high_gamma";
constexpr const char* kBetaName = "beta_aggregate";

namespace detail {

/// Linear interpolation of (src_t, src_v) onto dst_t; clamps outside the
/// source span so near-identical grids differ only at the edges.
inline std::vector<double> resample_to_axis(const double* src_v, std::size_t src_n,
                                            const std::vector<double>& src_t,
                                            const std::vector<double>& dst_t) {
    std::vector<double> out(dst_t.size());
    std::size_t j = 0;
    for (std::size_t k = 0; k < dst_t.size(); ++k) {
        const double t = dst_t[k];
        if (t <= src_t.front()) {
            out[k] = src_v[0];
            continue;
        }
        if (t >= src_t.back()) {
            out[k] = src_v[src_n - 1];
            continue;
        }
        while (j + 2 < src_n && src_t[j + 1] < t) ++j;
        const double w = (t - src_t[j]) / (src_t[j + 1] - src_t[j]);
        out[k] = (1.0 - w) * src_v[j] + w * src_v[j + 1];
    }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Per-filter correlation spectra
// ---------------------------------------------------------------------------

/// Mean +- sem over (class, electrode) units of the correlation between
/// each filter's amplitude trace and the reference high-gamma trace.
struct CorrelationSpectrum {
    std::string group = "all";
    std::vector<std::string> filter_names;
    std::vector<double> center_hz;
    std::vector<double> mean;
    std::vector<double> sem;
    std::vector<std::size_t> n_units;  // retained units per filter
    std::size_t excluded_pairs = 0;    // (unit, filter) pairs with a flat trace
};

namespace detail {

/// Spectrum over the units where include[class * n_electrodes + e] holds
/// (empty include = all units). Bands other than the reference contribute
/// one spectrum entry each, in tensor order.
inline CorrelationSpectrum spectrum_for_units(const signal::TrialAverageTensor& avg,
                                              const std::vector<bool>& include,
                                              const std::string& hg_name,
                                              std::string group) {
    const auto& hg = avg.band(hg_name);
    const std::size_t n_classes = avg.n_classes();
    const std::size_t n_electrodes = avg.n_electrodes();
    if (!include.empty() && include.size() != n_classes * n_electrodes)
        throw InvalidInputError("correlation spectrum: unit mask size mismatch");
    const auto hg_axis = hg.time_axis();

    CorrelationSpectrum out;
    out.group = std::move(group);
    for (const auto& band : avg.bands) {
        if (band.name == hg_name) continue;
        const auto band_axis = band.time_axis();
        std::vector<double> per_unit;
        per_unit.reserve(n_classes * n_electrodes);
        for (std::size_t c = 0; c < n_classes; ++c)
            for (std::size_t e = 0; e < n_electrodes; ++e) {
                if (!include.empty() && !include[c * n_electrodes + e]) continue;
                const auto trace = detail::resample_to_axis(
                    band.values.slice(c, e), band.n_time(), band_axis, hg_axis);
                const auto r = stats::pearson(trace.data(), hg.values.slice(c, e),
                                              hg.n_time());
                if (r)
                    per_unit.push_back(*r);
                else
                    ++out.excluded_pairs;
            }
        out.filter_names.push_back(band.name);
        out.center_hz.push_back(band.center_hz);
        out.n_units.push_back(per_unit.size());
        if (per_unit.empty()) {
            out.mean.push_back(std::numeric_limits<double>::quiet_NaN());
            out.sem.push_back(std::numeric_limits<double>::quiet_NaN());
        } else {
            out.mean.push_back(stats::mean(per_unit));
            out.sem.push_back(per_unit.size() > 1 ? stats::sem(per_unit) : 0.0);
        }
    }
    if (out.filter_names.empty())
        throw InvalidInputError("correlation spectrum: no bands besides the reference");
    return out;
}

}  // namespace detail

inline CorrelationSpectrum band_hg_correlation(const signal::TrialAverageTensor& avg,
                                               const std::string& hg_name = kHighGammaName) {
    return detail::spectrum_for_units(avg, {}, hg_name, "all");
}

// ---------------------------------------------------------------------------
// High-gamma power and the active/inactive split
// ---------------------------------------------------------------------------

/// Mean high-gamma amplitude per (class, electrode) inside the window.
inline Array2 hg_power(const signal::TrialAverageTensor& avg,
                       double window_lo_s = kPowerWindowLo,
                       double window_hi_s = kPowerWindowHi,
                       const std::string& hg_name = kHighGammaName) {
    const auto& hg = avg.band(hg_name);
    if (!(window_lo_s < window_hi_s))
        throw InvalidInputError("hg_power: window must satisfy lo < hi");
    const auto axis = hg.time_axis();
    if (window_lo_s < axis.front() || window_hi_s > axis.back())
        throw InvalidInputError("hg_power: window extends past the time axis");
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < axis.size(); ++k)
        if (axis[k] >= window_lo_s && axis[k] <= window_hi_s) idx.push_back(k);
    if (idx.empty()) throw InvalidInputError("hg_power: window contains no samples");

    Array2 power(avg.n_classes(), avg.n_electrodes());
    for (std::size_t c = 0; c < avg.n_classes(); ++c)
        for (std::size_t e = 0; e < avg.n_electrodes(); ++e) {
            const double* trace = hg.values.slice(c, e);
            double s = 0.0;
            for (std::size_t k : idx) s += trace[k];
            power(c, e) = s / static_cast<double>(idx.size());
        }
    return power;
}

/// Per-unit scatter of high-gamma power against the high-gamma/beta
/// correlation, with the regression-derived activity threshold.
struct ActivitySplit {
    std::vector<double> power;  // per (class, electrode), class-major
    std::vector<double> corr;   // NaN when a trace was flat
    std::vector<bool> active;   // power > threshold
    double slope = 0.0;
    double intercept = 0.0;
    double threshold = 0.0;
    std::size_t n_fit_points = 0;
    std::size_t n_classes = 0;
    std::size_t n_electrodes = 0;

    bool unit_active(std::size_t cls, std::size_t electrode) const {
        return active[cls * n_electrodes + electrode];
    }
};

/// Regress correlation on power over the positive-power units and place
/// the threshold where the fitted line crosses zero. NaN correlations are
/// left out of the fit but still receive an activity flag.
inline ActivitySplit fit_activity_threshold(const std::vector<double>& power,
                                            const std::vector<double>& corr) {
    if (power.size() != corr.size() || power.empty())
        throw InvalidInputError("fit_activity_threshold: size mismatch or empty");
    std::vector<double> x, y;
    for (std::size_t i = 0; i < power.size(); ++i) {
        if (!(power[i] > 0.0) || !std::isfinite(corr[i])) continue;
        x.push_back(power[i]);
        y.push_back(corr[i]);
    }
    if (x.size() < 2)
        throw SplitUndefinedError("fit_activity_threshold: need >= 2 positive-power points");
    const double mean_x = stats::mean(x);
    double sxx = 0.0;
    for (double v : x) sxx += (v - mean_x) * (v - mean_x);
    if (sxx == 0.0)
        throw SplitUndefinedError("fit_activity_threshold: positive-power values coincide");
    const auto line = stats::fit_ols(x, y);
    if (line.slope == 0.0)
        throw SplitUndefinedError("fit_activity_threshold: fitted slope is zero");

    ActivitySplit split;
    split.power = power;
    split.corr = corr;
    split.slope = line.slope;
    split.intercept = line.intercept;
    split.threshold = -line.intercept / line.slope;
    split.n_fit_points = x.size();
    split.active.resize(power.size());
    for (std::size_t i = 0; i < power.size(); ++i)
        split.active[i] = power[i] > split.threshold;
    return split;
}

/// Build the per-unit power/correlation scatter from a trial-average
/// tensor and fit the activity threshold.
inline ActivitySplit activity_split(const signal::TrialAverageTensor& avg,
                                    const std::string& hg_name = kHighGammaName,
                                    const std::string& beta_name = kBetaName,
                                    double window_lo_s = kPowerWindowLo,
                                    double window_hi_s = kPowerWindowHi) {
    const auto& hg = avg.band(hg_name);
    const auto& beta = avg.band(beta_name);
    const auto power = hg_power(avg, window_lo_s, window_hi_s, hg_name);
    const auto hg_axis = hg.time_axis();
    const auto beta_axis = beta.time_axis();

    std::vector<double> flat_power, flat_corr;
    for (std::size_t c = 0; c < avg.n_classes(); ++c)
        for (std::size_t e = 0; e < avg.n_electrodes(); ++e) {
            flat_power.push_back(power(c, e));
            const auto trace = detail::resample_to_axis(beta.values.slice(c, e),
                                                        beta.n_time(), beta_axis, hg_axis);
            const auto r = stats::pearson(trace.data(), hg.values.slice(c, e), hg.n_time());
            flat_corr.push_back(r ? *r : std::numeric_limits<double>::quiet_NaN());
        }

    auto split = fit_activity_threshold(flat_power, flat_corr);
    split.n_classes = avg.n_classes();
    split.n_electrodes = avg.n_electrodes();
    return split;
}

/// Correlation spectra recomputed inside the active and inactive unit
/// groups. Either group being empty is an error.
inline std::pair<CorrelationSpectrum, CorrelationSpectrum> split_correlation_spectra(
    const signal::TrialAverageTensor& avg, const ActivitySplit& split,
    const std::string& hg_name = kHighGammaName) {
    const std::size_t n_units = avg.n_classes() * avg.n_electrodes();
    if (split.active.size() != n_units)
        throw InvalidInputError("split_correlation_spectra: split does not match tensor");
    std::vector<bool> active_mask(split.active.begin(), split.active.end());
    std::vector<bool> inactive_mask(n_units);
    std::size_t n_active = 0;
    for (std::size_t i = 0; i < n_units; ++i) {
        inactive_mask[i] = !active_mask[i];
        if (active_mask[i]) ++n_active;
    }
    if (n_active == 0) throw GroupEmptyError("split_correlation_spectra: no active units");
    if (n_active == n_units)
        throw GroupEmptyError("split_correlation_spectra: no inactive units");
    return {detail::spectrum_for_units(avg, active_mask, hg_name, "active"),
            detail::spectrum_for_units(avg, inactive_mask, hg_name, "inactive")};
}

// ---------------------------------------------------------------------------
// Histograms and the binned power curve
// ---------------------------------------------------------------------------

struct CouplingHistograms {
    metrics::Histogram correlation;  // fixed range [-1, 1]
    metrics::Histogram power;        // data range
    std::size_t n_units = 0;         // units with a defined correlation
};

inline CouplingHistograms hg_beta_histogram(const ActivitySplit& split,
                                            std::size_t n_bins = 40) {
    std::vector<double> corr;
    for (double r : split.corr)
        if (std::isfinite(r)) corr.push_back(r);
    if (corr.empty()) throw InvalidInputError("hg_beta_histogram: no defined correlations");

    CouplingHistograms out;
    out.n_units = corr.size();
    out.correlation = metrics::histogram(corr, -1.0, 1.0, n_bins);
    auto [lo_it, hi_it] = std::minmax_element(split.power.begin(), split.power.end());
    double lo = *lo_it, hi = *hi_it;
    if (lo == hi) {  // degenerate spread still deserves one populated bin
        lo -= 0.5;
        hi += 0.5;
    }
    out.power = metrics::histogram(split.power, lo, hi, n_bins);
    return out;
}

/// Mean correlation against mean power across equal-count power bins.
struct BinnedCurve {
    std::vector<double> mean_power;
    std::vector<double> mean_corr;
    std::vector<double> sem_corr;
    std::vector<std::size_t> counts;
};

inline BinnedCurve binned_power_correlation(const std::vector<double>& power,
                                            const std::vector<double>& corr,
                                            std::size_t n_bins = 9) {
    if (power.size() != corr.size())
        throw InvalidInputError("binned_power_correlation: size mismatch");
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < power.size(); ++i)
        if (std::isfinite(corr[i])) order.push_back(i);
    if (order.size() < n_bins || n_bins == 0)
        throw InvalidInputError("binned_power_correlation: need at least one unit per bin");
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (power[a] != power[b]) return power[a] < power[b];
        return a < b;
    });

    BinnedCurve curve;
    const std::size_t n = order.size();
    for (std::size_t b = 0; b < n_bins; ++b) {
        const std::size_t lo = b * n / n_bins;
        const std::size_t hi = (b + 1) * n / n_bins;
        std::vector<double> p, r;
        for (std::size_t k = lo; k < hi; ++k) {
            p.push_back(power[order[k]]);
            r.push_back(corr[order[k]]);
        }
        curve.counts.push_back(p.size());
        curve.mean_power.push_back(stats::mean(p));
        curve.mean_corr.push_back(stats::mean(r));
        curve.sem_corr.push_back(r.size() > 1 ? stats::sem(r) : 0.0);
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Multiband feature sets
// ---------------------------------------------------------------------------

/// Band-only features next to the same band concatenated with high-gamma,
/// both rasterized with identical trial bookkeeping.
struct MultibandFeatures {
    dataset::LabeledDataset band_only;
    dataset::LabeledDataset combined;
};

inline MultibandFeatures multiband_feature_sets(const signal::SpectralTensor& tensor,
                                                const std::vector<std::string>& trial_labels,
                                                const std::string& band,
                                                const std::string& hg_name = kHighGammaName,
                                                std::size_t min_class_count = 10) {
    MultibandFeatures out;
    out.band_only = dataset::make_dataset(tensor, trial_labels, {band}, {}, {},
                                          min_class_count);
    out.combined = dataset::make_dataset(tensor, trial_labels, {band, hg_name}, {}, {},
                                         min_class_count);
    return out;
}

}  // namespace cvdecode::xfreq
