#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cvdecode/error.hpp"

namespace cvdecode::signal {

/// One Gaussian bandpass filter, specified in the frequency domain.
struct GaussianFilter {
    double center_hz = 0.0;
    double sigma_hz = 0.0;
};

/// Ordered bank of Gaussian filters with strictly increasing centers.
struct FilterBankSpec {
    std::vector<GaussianFilter> filters;

    std::size_t size() const { return filters.size(); }
};

/// Geometric center spacing from f_lo to f_hi with sigma = max(1, f/7) Hz.
/// The sigma rule approximates band-widths that grow sub-linearly with
/// center frequency; both knobs are plain data and can be overridden by
/// building a FilterBankSpec directly.
inline FilterBankSpec design_filter_bank(double f_lo, double f_hi, std::size_t n) {
    if (!(f_lo > 0.0) || !(f_hi > f_lo))
        throw InvalidInputError("design_filter_bank: need 0 < f_lo < f_hi, got [" +
                                std::to_string(f_lo) + ", " + std::to_string(f_hi) + "]");
    if (n < 2) throw InvalidInputError("design_filter_bank: need at least 2 filters");

    FilterBankSpec bank;
    bank.filters.reserve(n);
    const double ratio = f_hi / f_lo;
    for (std::size_t k = 0; k < n; ++k) {
        const double fc =
            f_lo * std::pow(ratio, static_cast<double>(k) / static_cast<double>(n - 1));
        bank.filters.push_back({fc, std::max(1.0, fc / 7.0)});
    }
    return bank;
}

/// Default 40-filter bank spanning 4-200 Hz.
inline FilterBankSpec default_filter_bank() { return design_filter_bank(4.0, 200.0, 40); }

/// A named frequency band, e.g. high_gamma [75, 150] Hz.
struct BandDefinition {
    std::string name;
    double low_hz = 0.0;
    double high_hz = 0.0;

    bool contains(double f_hz) const { return f_hz >= low_hz && f_hz <= high_hz; }
    /// Nominal band center; fixes the downsampling rate for the band.
    double center_hz() const { return 0.5 * (low_hz + high_hz); }
};

inline BandDefinition theta_band() { return {"theta", 4.0, 8.0}; }
inline BandDefinition alpha_band() { return {"alpha", 9.0, 14.0}; }
inline BandDefinition low_beta_band() { return {"low_beta", 15.0, 20.0}; }
inline BandDefinition high_beta_band() { return {"high_beta", 21.0, 29.0}; }
inline BandDefinition gamma_band() { return {"gamma", 30.0, 59.0}; }
inline BandDefinition high_gamma_band() { return {"high_gamma", 75.0, 150.0}; }
/// Aggregate beta range. The low end is taken from the low_beta/high_beta
/// split (15 Hz) rather than the looser 14 Hz sometimes quoted.
inline BandDefinition beta_aggregate_band() { return {"beta_aggregate", 15.0, 29.0}; }

inline std::vector<BandDefinition> canonical_bands() {
    return {theta_band(),     alpha_band(), low_beta_band(),
            high_beta_band(), gamma_band(), high_gamma_band()};
}

inline BandDefinition band_by_name(const std::string& name) {
    for (const auto& b : canonical_bands())
        if (b.name == name) return b;
    if (name == "beta_aggregate") return beta_aggregate_band();
    throw InvalidInputError("unknown band name: " + name);
}

}  // namespace cvdecode::signal
