#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "cvdecode/array.hpp"
#include "cvdecode/bands.hpp"
#include "cvdecode/error.hpp"

namespace cvdecode::signal {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Multi-electrode voltage recording. Values are in arbitrary volt-like
/// units; baseline_window is a half-open [start, end) sample range of quiet
/// rest used later for z-scoring.
struct RawRecording {
    Array2 voltage;  // electrode x sample
    double sample_rate_hz = 0.0;
    std::set<std::size_t> bad_channels;
    std::pair<std::size_t, std::size_t> baseline_window{0, 0};
    std::vector<double> event_times_s;  // CV transition times, seconds from start

    std::size_t n_electrodes() const { return voltage.rows(); }
    std::size_t n_samples() const { return voltage.cols(); }

    void validate() const {
        if (!(sample_rate_hz > 0.0)) throw InvalidInputError("recording: sample_rate must be > 0");
        for (auto c : bad_channels)
            if (c >= n_electrodes())
                throw InvalidInputError("recording: bad channel " + std::to_string(c) +
                                        " out of range");
        if (baseline_window.second <= baseline_window.first ||
            baseline_window.second > n_samples())
            throw InvalidInputError("recording: baseline window empty or outside recording");
    }
};

/// One continuous amplitude channel (a single filter or an aggregated band)
/// across all electrodes, on a uniform time grid starting at t = 0.
/// rate_hz is the actual grid rate; nominal_rate_hz keeps the band's
/// center-to-rate convention when the two differ after resampling.
struct AmplitudeChannel {
    std::string name;
    double center_hz = 0.0;
    double rate_hz = 0.0;
    double nominal_rate_hz = 0.0;
    Array2 values;  // electrode x time

    std::size_t n_electrodes() const { return values.rows(); }
    std::size_t n_time() const { return values.cols(); }
    double duration_s() const {
        return n_time() < 2 ? 0.0 : static_cast<double>(n_time() - 1) / rate_hz;
    }
};

/// Extraction window around an event, seconds. Default covers 0.5 s before
/// and 0.8 s after the consonant-vowel transition.
struct TrialWindow {
    double pre_s = -0.5;
    double post_s = 0.8;
};

/// One band of a trial-aligned tensor: trial x electrode x time, plus the
/// grid needed to reconstruct the time axis (t_start + k / rate).
struct TensorBand {
    std::string name;
    double center_hz = 0.0;
    double rate_hz = 0.0;
    double nominal_rate_hz = 0.0;
    double t_start_s = 0.0;
    Array3 values;  // trial x electrode x time

    std::size_t n_time() const { return values.dim2(); }
    std::vector<double> time_axis() const {
        std::vector<double> t(n_time());
        for (std::size_t k = 0; k < t.size(); ++k)
            t[k] = t_start_s + static_cast<double>(k) / rate_hz;
        return t;
    }
};

/// Z-scored analytic amplitude per (trial, band, electrode, time). Bands may
/// have different rates and therefore different time lengths. Labels are
/// optional trial annotations (empty when unlabeled).
struct SpectralTensor {
    std::vector<TensorBand> bands;
    std::vector<std::string> labels;

    std::size_t n_trials() const { return bands.empty() ? 0 : bands.front().values.dim0(); }
    std::size_t n_electrodes() const { return bands.empty() ? 0 : bands.front().values.dim1(); }

    const TensorBand& band(const std::string& name) const {
        for (const auto& b : bands)
            if (b.name == name) return b;
        throw InvalidInputError("tensor has no band named '" + name + "'");
    }
    bool has_band(const std::string& name) const {
        return std::any_of(bands.begin(), bands.end(),
                           [&](const TensorBand& b) { return b.name == name; });
    }
};

/// Same layout as TensorBand with the trial axis collapsed to classes.
struct AverageBand {
    std::string name;
    double center_hz = 0.0;
    double rate_hz = 0.0;
    double nominal_rate_hz = 0.0;
    double t_start_s = 0.0;
    Array3 values;  // class x electrode x time

    std::size_t n_time() const { return values.dim2(); }
    std::vector<double> time_axis() const {
        std::vector<double> t(n_time());
        for (std::size_t k = 0; k < t.size(); ++k)
            t[k] = t_start_s + static_cast<double>(k) / rate_hz;
        return t;
    }
};

/// Per-class mean over trials, one band per channel.
struct TrialAverageTensor {
    std::vector<std::string> class_labels;
    std::vector<AverageBand> bands;

    std::size_t n_classes() const { return class_labels.size(); }
    std::size_t n_electrodes() const { return bands.empty() ? 0 : bands.front().values.dim1(); }

    const AverageBand& band(const std::string& name) const {
        for (const auto& b : bands)
            if (b.name == name) return b;
        throw InvalidInputError("average tensor has no band named '" + name + "'");
    }
};

struct TrialAverageResult {
    TrialAverageTensor average;
    std::vector<std::string> excluded_classes;  // requested classes with zero trials
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Subtract the per-sample mean of the good channels from every good
/// channel. Bad channels pass through untouched.
inline RawRecording common_average_reference(const RawRecording& raw) {
    raw.validate();
    std::vector<std::size_t> good;
    for (std::size_t e = 0; e < raw.n_electrodes(); ++e)
        if (!raw.bad_channels.count(e)) good.push_back(e);
    if (good.size() < 2)
        throw InvalidInputError("common_average_reference: need at least 2 good channels, have " +
                                std::to_string(good.size()));

    RawRecording out = raw;
    const std::size_t n = raw.n_samples();
    for (std::size_t s = 0; s < n; ++s) {
        double mean = 0.0;
        for (auto e : good) mean += raw.voltage(e, s);
        mean /= static_cast<double>(good.size());
        for (auto e : good) out.voltage(e, s) = raw.voltage(e, s) - mean;
    }
    return out;
}

/// Remove bad channels entirely. Returns the compacted recording and the
/// original index of each kept electrode so downstream indexing stays
/// traceable.
inline std::pair<RawRecording, std::vector<std::size_t>> drop_bad_channels(
    const RawRecording& raw) {
    raw.validate();
    std::vector<std::size_t> kept;
    for (std::size_t e = 0; e < raw.n_electrodes(); ++e)
        if (!raw.bad_channels.count(e)) kept.push_back(e);

    RawRecording out;
    out.sample_rate_hz = raw.sample_rate_hz;
    out.baseline_window = raw.baseline_window;
    out.event_times_s = raw.event_times_s;
    out.voltage = Array2(kept.size(), raw.n_samples());
    for (std::size_t i = 0; i < kept.size(); ++i)
        std::copy(raw.voltage.row(kept[i]), raw.voltage.row(kept[i]) + raw.n_samples(),
                  out.voltage.row(i));
    return {std::move(out), std::move(kept)};
}

namespace detail {

/// RAII FFTW buffers + plans for repeated transforms of one length.
class FftEngine {
public:
    explicit FftEngine(std::size_t n) : n_(n) {
        in_ = fftw_alloc_complex(n);
        out_ = fftw_alloc_complex(n);
        fwd_ = fftw_plan_dft_1d(static_cast<int>(n), in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
        inv_ = fftw_plan_dft_1d(static_cast<int>(n), in_, out_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~FftEngine() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
        fftw_free(in_);
        fftw_free(out_);
    }
    FftEngine(const FftEngine&) = delete;
    FftEngine& operator=(const FftEngine&) = delete;

    /// Forward transform of a real signal; result stored internally.
    void forward(const double* x) {
        for (std::size_t i = 0; i < n_; ++i) {
            in_[i][0] = x[i];
            in_[i][1] = 0.0;
        }
        fftw_execute(fwd_);
        spectrum_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            spectrum_[i][0] = out_[i][0];
            spectrum_[i][1] = out_[i][1];
        }
    }

    /// Multiply the stored spectrum by per-bin weights, inverse-transform,
    /// and write |analytic signal| into amp (length n).
    void weighted_envelope(const std::vector<double>& weights, double* amp) {
        for (std::size_t i = 0; i < n_; ++i) {
            in_[i][0] = spectrum_[i][0] * weights[i];
            in_[i][1] = spectrum_[i][1] * weights[i];
        }
        fftw_execute(inv_);
        const double scale = 1.0 / static_cast<double>(n_);
        for (std::size_t i = 0; i < n_; ++i)
            amp[i] = std::hypot(out_[i][0] * scale, out_[i][1] * scale);
    }

private:
    std::size_t n_;
    fftw_complex* in_;
    fftw_complex* out_;
    fftw_plan fwd_;
    fftw_plan inv_;
    std::vector<std::array<double, 2>> spectrum_{};
};

}  // namespace detail

/// Per-bin weights implementing "Gaussian bandpass + analytic signal" in one
/// pass: positive frequencies get 2 * g(f), negative frequencies 0, DC (and
/// the Nyquist bin for even lengths) the plain Gaussian weight. g is
/// normalized to unit gain at the filter center so tone amplitude is
/// preserved.
inline std::vector<double> analytic_filter_weights(std::size_t n, double rate_hz,
                                                   const GaussianFilter& filt) {
    std::vector<double> w(n, 0.0);
    const double df = rate_hz / static_cast<double>(n);
    auto gauss = [&](double f) {
        const double z = (f - filt.center_hz) / filt.sigma_hz;
        return std::exp(-0.5 * z * z);
    };
    w[0] = gauss(0.0);
    const std::size_t half = n / 2;
    for (std::size_t k = 1; k < (n + 1) / 2; ++k) w[k] = 2.0 * gauss(df * static_cast<double>(k));
    if (n % 2 == 0 && half > 0) w[half] = gauss(df * static_cast<double>(half));
    return w;
}

/// Time-varying analytic amplitude of every electrode under every filter in
/// the bank. Output channels keep the recording's rate and are nonnegative.
inline std::vector<AmplitudeChannel> analytic_amplitude(const RawRecording& raw,
                                                        const FilterBankSpec& bank) {
    raw.validate();
    const std::size_t n = raw.n_samples();
    if (n < 2) throw InvalidInputError("analytic_amplitude: recording shorter than 2 samples");
    const double nyquist = raw.sample_rate_hz / 2.0;
    for (const auto& f : bank.filters) {
        if (!(f.sigma_hz > 0.0)) throw InvalidInputError("analytic_amplitude: sigma must be > 0");
        if (f.center_hz >= nyquist)
            throw InvalidInputError("analytic_amplitude: filter center " +
                                    std::to_string(f.center_hz) + " Hz >= Nyquist " +
                                    std::to_string(nyquist) + " Hz");
    }

    std::vector<AmplitudeChannel> channels(bank.size());
    for (std::size_t fi = 0; fi < bank.size(); ++fi) {
        auto& ch = channels[fi];
        ch.name = "filter_" + std::to_string(fi);
        ch.center_hz = bank.filters[fi].center_hz;
        ch.rate_hz = raw.sample_rate_hz;
        ch.nominal_rate_hz = raw.sample_rate_hz;
        ch.values = Array2(raw.n_electrodes(), n);
    }

    detail::FftEngine fft(n);
    std::vector<std::vector<double>> weights(bank.size());
    for (std::size_t fi = 0; fi < bank.size(); ++fi)
        weights[fi] = analytic_filter_weights(n, raw.sample_rate_hz, bank.filters[fi]);

    std::vector<double> amp(n);
    for (std::size_t e = 0; e < raw.n_electrodes(); ++e) {
        fft.forward(raw.voltage.row(e));
        for (std::size_t fi = 0; fi < bank.size(); ++fi) {
            fft.weighted_envelope(weights[fi], amp.data());
            std::copy(amp.begin(), amp.end(), channels[fi].values.row(e));
        }
    }
    return channels;
}

/// Z-score each (electrode, channel) trace against its own baseline segment.
/// A zero-variance baseline is a hard error; silently dropping the trace
/// would corrupt electrode indexing downstream.
inline std::vector<AmplitudeChannel> zscore_to_baseline(
    std::vector<AmplitudeChannel> channels, std::pair<std::size_t, std::size_t> baseline) {
    const auto [b0, b1] = baseline;
    if (b1 < b0 + 2) throw InvalidInputError("zscore_to_baseline: baseline needs >= 2 samples");
    for (auto& ch : channels) {
        if (b1 > ch.n_time())
            throw InvalidInputError("zscore_to_baseline: baseline window outside channel '" +
                                    ch.name + "'");
        const double m = static_cast<double>(b1 - b0);
        for (std::size_t e = 0; e < ch.n_electrodes(); ++e) {
            double* row = ch.values.row(e);
            double mean = 0.0;
            double lo = row[b0], hi = row[b0];
            for (std::size_t s = b0; s < b1; ++s) {
                mean += row[s];
                lo = std::min(lo, row[s]);
                hi = std::max(hi, row[s]);
            }
            mean /= m;
            double var = 0.0;
            for (std::size_t s = b0; s < b1; ++s) var += (row[s] - mean) * (row[s] - mean);
            var /= m;
            // a population variance is zero exactly when every sample agrees;
            // testing that directly avoids rounding in the accumulated sum
            if (lo == hi || !(var > 0.0))
                throw DegenerateChannelError("zero baseline variance at electrode " +
                                             std::to_string(e) + ", channel '" + ch.name + "'");
            const double inv_sd = 1.0 / std::sqrt(var);
            for (std::size_t s = 0; s < ch.n_time(); ++s) row[s] = (row[s] - mean) * inv_sd;
        }
    }
    return channels;
}

/// Unweighted mean over the filters whose centers fall inside the band
/// (inclusive on both edges).
inline AmplitudeChannel aggregate_bands(const std::vector<AmplitudeChannel>& filter_amps,
                                        const FilterBankSpec& bank, const BandDefinition& band) {
    if (filter_amps.size() != bank.size())
        throw InvalidInputError("aggregate_bands: channel count does not match bank");
    std::vector<std::size_t> in_band;
    for (std::size_t i = 0; i < bank.size(); ++i)
        if (band.contains(bank.filters[i].center_hz)) in_band.push_back(i);
    if (in_band.empty())
        throw InvalidInputError("aggregate_bands: no filter centers inside band '" + band.name +
                                "' [" + std::to_string(band.low_hz) + ", " +
                                std::to_string(band.high_hz) + "]");

    const auto& first = filter_amps[in_band.front()];
    AmplitudeChannel out;
    out.name = band.name;
    out.center_hz = band.center_hz();
    out.rate_hz = first.rate_hz;
    out.nominal_rate_hz = first.nominal_rate_hz;
    out.values = Array2(first.n_electrodes(), first.n_time());
    const double inv = 1.0 / static_cast<double>(in_band.size());
    for (auto fi : in_band) {
        const auto& src = filter_amps[fi];
        if (src.n_time() != first.n_time() || src.n_electrodes() != first.n_electrodes())
            throw ShapeMismatchError("aggregate_bands: filter channels disagree in shape");
        for (std::size_t i = 0; i < out.values.size(); ++i)
            out.values.raw()[i] += src.values.raw()[i] * inv;
    }
    return out;
}

/// Linear interpolation onto a uniform grid spanning [0, duration] with
/// ceil(n * target/rate) points; first and last samples are preserved
/// exactly. The grid rate equals the target only when the ratio divides the
/// sample count; nominal_rate_hz records the convention either way.
inline AmplitudeChannel downsample_band(const AmplitudeChannel& band_amp, double band_center_hz) {
    const double target = band_center_hz * 200.0 / 112.5;
    if (target > band_amp.rate_hz * (1.0 + 1e-12))
        throw InvalidInputError("downsample_band: target rate " + std::to_string(target) +
                                " Hz exceeds channel rate " + std::to_string(band_amp.rate_hz));
    const std::size_t n = band_amp.n_time();
    if (n < 2) throw InvalidInputError("downsample_band: need at least 2 samples");

    std::size_t m = static_cast<std::size_t>(
        std::ceil(static_cast<double>(n) * target / band_amp.rate_hz - 1e-9));
    m = std::max<std::size_t>(m, 2);

    AmplitudeChannel out;
    out.name = band_amp.name;
    out.center_hz = band_amp.center_hz;
    out.nominal_rate_hz = target;
    if (m >= n) {  // ratio identity: grid unchanged
        out.rate_hz = band_amp.rate_hz;
        out.values = band_amp.values;
        return out;
    }
    out.rate_hz = band_amp.rate_hz * static_cast<double>(m - 1) / static_cast<double>(n - 1);
    out.values = Array2(band_amp.n_electrodes(), m);
    const double step = static_cast<double>(n - 1) / static_cast<double>(m - 1);
    for (std::size_t e = 0; e < band_amp.n_electrodes(); ++e) {
        const double* src = band_amp.values.row(e);
        double* dst = out.values.row(e);
        for (std::size_t j = 0; j < m; ++j) {
            const double pos = static_cast<double>(j) * step;
            std::size_t i0 = std::min(static_cast<std::size_t>(pos), n - 2);
            const double frac = pos - static_cast<double>(i0);
            dst[j] = src[i0] * (1.0 - frac) + src[i0 + 1] * frac;
        }
        dst[m - 1] = src[n - 1];
    }
    return out;
}

/// Cut one aligned slice per event from every channel. t = 0 maps to the
/// sample nearest the event time; all slices of a channel share one length.
inline SpectralTensor extract_trials(const std::vector<AmplitudeChannel>& channels,
                                     const std::vector<double>& event_times_s,
                                     TrialWindow window = {}) {
    if (channels.empty()) throw InvalidInputError("extract_trials: no channels");
    if (!(window.pre_s < window.post_s))
        throw InvalidInputError("extract_trials: window must satisfy pre < post");

    SpectralTensor tensor;
    tensor.bands.reserve(channels.size());
    for (const auto& ch : channels) {
        const std::ptrdiff_t n_pre =
            static_cast<std::ptrdiff_t>(std::llround(-window.pre_s * ch.rate_hz));
        const std::ptrdiff_t n_post =
            static_cast<std::ptrdiff_t>(std::llround(window.post_s * ch.rate_hz));
        const std::size_t T = static_cast<std::size_t>(n_pre + n_post + 1);

        TensorBand band;
        band.name = ch.name;
        band.center_hz = ch.center_hz;
        band.rate_hz = ch.rate_hz;
        band.nominal_rate_hz = ch.nominal_rate_hz;
        band.t_start_s = -static_cast<double>(n_pre) / ch.rate_hz;
        band.values = Array3(event_times_s.size(), ch.n_electrodes(), T);

        for (std::size_t tr = 0; tr < event_times_s.size(); ++tr) {
            const std::ptrdiff_t center =
                static_cast<std::ptrdiff_t>(std::llround(event_times_s[tr] * ch.rate_hz));
            const std::ptrdiff_t lo = center - n_pre;
            const std::ptrdiff_t hi = center + n_post;
            if (lo < 0 || hi >= static_cast<std::ptrdiff_t>(ch.n_time()))
                throw TrialRangeError("trial " + std::to_string(tr) + " at t=" +
                                      std::to_string(event_times_s[tr]) +
                                      " s: window outside recording (channel '" + ch.name + "')");
            for (std::size_t e = 0; e < ch.n_electrodes(); ++e) {
                const double* src = ch.values.row(e) + lo;
                std::copy(src, src + T, band.values.slice(tr, e));
            }
        }
        tensor.bands.push_back(std::move(band));
    }
    return tensor;
}

/// Subtract the mean of the first and last ceil(fraction * T) samples
/// (pooled into a single statistic) from each (trial, band, electrode)
/// trace. A cheap, very local amplitude normalization.
inline SpectralTensor edge_mean_subtract(SpectralTensor tensor, double fraction = 0.04) {
    if (!(fraction > 0.0 && fraction < 0.5))
        throw InvalidInputError("edge_mean_subtract: fraction must lie in (0, 0.5)");
    for (auto& band : tensor.bands) {
        const std::size_t T = band.n_time();
        const std::size_t m =
            static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(T)));
        if (m < 1) throw InvalidInputError("edge_mean_subtract: edge sample count is 0");
        for (std::size_t tr = 0; tr < band.values.dim0(); ++tr) {
            for (std::size_t e = 0; e < band.values.dim1(); ++e) {
                double* trace = band.values.slice(tr, e);
                double mean = 0.0;
                for (std::size_t k = 0; k < m; ++k) mean += trace[k] + trace[T - 1 - k];
                mean /= static_cast<double>(2 * m);
                for (std::size_t k = 0; k < T; ++k) trace[k] -= mean;
            }
        }
    }
    return tensor;
}

/// Per-class unweighted mean over trials. When class_order is given, classes
/// without trials are excluded and reported; otherwise classes are the
/// sorted distinct labels.
inline TrialAverageResult trial_average(const SpectralTensor& tensor,
                                        const std::vector<std::string>& labels,
                                        std::vector<std::string> class_order = {}) {
    if (labels.size() != tensor.n_trials())
        throw InvalidInputError("trial_average: every trial needs a label (" +
                                std::to_string(labels.size()) + " labels for " +
                                std::to_string(tensor.n_trials()) + " trials)");
    if (class_order.empty()) {
        std::set<std::string> distinct(labels.begin(), labels.end());
        class_order.assign(distinct.begin(), distinct.end());
    }

    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);

    TrialAverageResult result;
    for (const auto& cls : class_order) {
        auto it = members.find(cls);
        if (it == members.end() || it->second.empty())
            result.excluded_classes.push_back(cls);
        else
            result.average.class_labels.push_back(cls);
    }

    for (const auto& band : tensor.bands) {
        AverageBand avg;
        avg.name = band.name;
        avg.center_hz = band.center_hz;
        avg.rate_hz = band.rate_hz;
        avg.nominal_rate_hz = band.nominal_rate_hz;
        avg.t_start_s = band.t_start_s;
        avg.values =
            Array3(result.average.class_labels.size(), band.values.dim1(), band.n_time());
        for (std::size_t c = 0; c < result.average.class_labels.size(); ++c) {
            const auto& idx = members.at(result.average.class_labels[c]);
            const double inv = 1.0 / static_cast<double>(idx.size());
            for (auto tr : idx)
                for (std::size_t e = 0; e < band.values.dim1(); ++e) {
                    const double* src = band.values.slice(tr, e);
                    double* dst = avg.values.slice(c, e);
                    for (std::size_t k = 0; k < band.n_time(); ++k) dst[k] += src[k] * inv;
                }
        }
        result.average.bands.push_back(std::move(avg));
    }
    return result;
}

/// Convenience: run the band pipeline (aggregate + downsample) for a set of
/// band definitions over filter-resolution channels.
inline std::vector<AmplitudeChannel> aggregate_and_downsample(
    const std::vector<AmplitudeChannel>& filter_amps, const FilterBankSpec& bank,
    const std::vector<BandDefinition>& bands) {
    std::vector<AmplitudeChannel> out;
    out.reserve(bands.size());
    for (const auto& band : bands)
        out.push_back(downsample_band(aggregate_bands(filter_amps, bank, band), band.center_hz()));
    return out;
}

}  // namespace cvdecode::signal
