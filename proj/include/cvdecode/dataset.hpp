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
#include "cvdecode/error.hpp"
#include "cvdecode/labels.hpp"
#include "cvdecode/rng.hpp"
#include "cvdecode/signal.hpp"

namespace cvdecode::dataset {

/// Where each flattened feature block came from: features are laid out
/// band-major, electrodes next, time fastest.
struct FeatureLayout {
    struct Block {
        std::string band;
        double rate_hz = 0.0;
        std::size_t n_electrodes = 0;
        std::size_t n_time = 0;
        std::size_t offset = 0;
    };
    std::vector<Block> blocks;
    std::size_t n_features = 0;
};

struct LabeledDataset {
    Array2 X;  // sample x feature
    std::vector<int> y;
    std::vector<std::string> class_names;
    FeatureLayout layout;
    std::vector<std::string> excluded_classes;  // dropped by the min-count rule
    std::vector<std::size_t> source_trials;     // tensor trial index per row

    std::size_t n_samples() const { return X.rows(); }
    std::size_t n_features() const { return X.cols(); }
    std::size_t n_classes() const { return class_names.size(); }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> c(n_classes(), 0);
        for (int v : y) ++c[static_cast<std::size_t>(v)];
        return c;
    }

    LabeledDataset subset(const std::vector<std::size_t>& rows) const {
        LabeledDataset out;
        out.class_names = class_names;
        out.layout = layout;
        out.X = Array2(rows.size(), n_features());
        out.y.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i] >= n_samples())
                throw InvalidInputError("dataset subset: row index out of range");
            std::copy(X.row(rows[i]), X.row(rows[i]) + n_features(), out.X.row(i));
            out.y.push_back(y[rows[i]]);
        }
        return out;
    }
};

/// Flatten a trial tensor into a feature matrix. band_subset empty means
/// all bands; electrodes empty means all electrodes; class_order empty
/// means the sorted distinct labels. Trials tagged with the excluded-label
/// marker are dropped silently; classes with fewer than min_class_count
/// trials are dropped and recorded in excluded_classes.
inline LabeledDataset make_dataset(const signal::SpectralTensor& tensor,
                                   const std::vector<std::string>& trial_labels,
                                   std::vector<std::string> band_subset = {},
                                   std::vector<std::size_t> electrodes = {},
                                   std::vector<std::string> class_order = {},
                                   std::size_t min_class_count = 10) {
    if (trial_labels.size() != tensor.n_trials())
        throw InvalidInputError("make_dataset: need one label per trial");
    if (tensor.bands.empty()) throw InvalidInputError("make_dataset: tensor has no bands");

    if (band_subset.empty())
        for (const auto& b : tensor.bands) band_subset.push_back(b.name);
    if (electrodes.empty()) {
        electrodes.resize(tensor.n_electrodes());
        std::iota(electrodes.begin(), electrodes.end(), 0);
    }
    for (auto e : electrodes)
        if (e >= tensor.n_electrodes())
            throw InvalidInputError("make_dataset: electrode index out of range");

    std::map<std::string, std::size_t> counts;
    for (const auto& lab : trial_labels)
        if (lab != labels::kExcludedLabel) ++counts[lab];

    LabeledDataset ds;
    if (class_order.empty()) {
        for (const auto& [lab, n] : counts)
            (n >= min_class_count ? class_order : ds.excluded_classes).push_back(lab);
    } else {
        std::vector<std::string> kept;
        for (const auto& lab : class_order) {
            auto it = counts.find(lab);
            ((it != counts.end() && it->second >= min_class_count) ? kept
                                                                   : ds.excluded_classes)
                .push_back(lab);
        }
        class_order = std::move(kept);
    }
    if (class_order.empty())
        throw InvalidInputError("make_dataset: no class meets the minimum trial count");
    std::map<std::string, int> class_index;
    for (std::size_t i = 0; i < class_order.size(); ++i)
        class_index[class_order[i]] = static_cast<int>(i);

    for (std::size_t tr = 0; tr < trial_labels.size(); ++tr) {
        auto it = class_index.find(trial_labels[tr]);
        if (it != class_index.end()) {
            ds.source_trials.push_back(tr);
            ds.y.push_back(it->second);
        } else if (trial_labels[tr] != labels::kExcludedLabel &&
                   !counts.count(trial_labels[tr])) {
            throw UnknownLabelError("trial label '" + trial_labels[tr] + "' not in class set");
        }
    }

    ds.class_names = class_order;
    std::size_t offset = 0;
    for (const auto& name : band_subset) {
        const auto& band = tensor.band(name);
        ds.layout.blocks.push_back(
            {band.name, band.rate_hz, electrodes.size(), band.n_time(), offset});
        offset += electrodes.size() * band.n_time();
    }
    ds.layout.n_features = offset;

    ds.X = Array2(ds.source_trials.size(), offset);
    for (std::size_t bi = 0; bi < band_subset.size(); ++bi) {
        const auto& band = tensor.band(band_subset[bi]);
        const std::size_t T = band.n_time();
        const std::size_t base = ds.layout.blocks[bi].offset;
        for (std::size_t r = 0; r < ds.source_trials.size(); ++r) {
            const std::size_t tr = ds.source_trials[r];
            double* dst = ds.X.row(r) + base;
            for (std::size_t ei = 0; ei < electrodes.size(); ++ei)
                std::copy(band.values.slice(tr, electrodes[ei]),
                          band.values.slice(tr, electrodes[ei]) + T, dst + ei * T);
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Cross-validation folds
// ---------------------------------------------------------------------------

struct FoldSplit {
    std::vector<std::size_t> train, val, test;
};

/// Stratified n-fold assignment with a held-out validation block. Each
/// class's trials are shuffled once, cut into n contiguous blocks; fold k
/// tests on block k and validates on block (k+1) mod n, training on the
/// rest. With n = 10 this gives the 80/10/10 pattern.
inline std::vector<FoldSplit> stratified_folds(const std::vector<int>& y, std::size_t n_folds,
                                               std::uint64_t seed) {
    if (n_folds < 3)
        throw InvalidInputError("stratified_folds: need >= 3 folds so train/val/test disjoint");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);

    auto rng = make_rng(derive_seed(seed, "folds"));
    // class -> per-fold block of trial indices
    std::map<int, std::vector<std::vector<std::size_t>>> blocks;
    for (auto& [cls, idx] : by_class) {
        if (idx.size() < n_folds)
            throw ClassTooSmallError("class " + std::to_string(cls) + " has " +
                                     std::to_string(idx.size()) + " trials, need >= " +
                                     std::to_string(n_folds));
        std::shuffle(idx.begin(), idx.end(), rng);
        auto& b = blocks[cls];
        b.resize(n_folds);
        const std::size_t n = idx.size();
        for (std::size_t f = 0; f < n_folds; ++f) {
            const std::size_t lo = f * n / n_folds;
            const std::size_t hi = (f + 1) * n / n_folds;
            b[f].assign(idx.begin() + lo, idx.begin() + hi);
        }
    }

    std::vector<FoldSplit> folds(n_folds);
    for (std::size_t f = 0; f < n_folds; ++f) {
        const std::size_t vf = (f + 1) % n_folds;
        for (auto& [cls, b] : blocks) {
            for (std::size_t g = 0; g < n_folds; ++g) {
                auto& dst = g == f ? folds[f].test : (g == vf ? folds[f].val : folds[f].train);
                dst.insert(dst.end(), b[g].begin(), b[g].end());
            }
        }
        std::sort(folds[f].train.begin(), folds[f].train.end());
        std::sort(folds[f].val.begin(), folds[f].val.end());
        std::sort(folds[f].test.begin(), folds[f].test.end());
    }
    return folds;
}

/// Stratified reduction of the training set for data-scaling sweeps; keeps
/// max(1, round(fraction * n)) trials of each class so every class stays
/// represented. Validation and test are untouched.
inline FoldSplit subsample_training(const FoldSplit& split, const std::vector<int>& y,
                                    double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw InvalidInputError("subsample_training: fraction must lie in (0, 1]");
    FoldSplit out;
    out.val = split.val;
    out.test = split.test;
    if (fraction == 1.0) {
        out.train = split.train;
        return out;
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (auto i : split.train) by_class[y[i]].push_back(i);
    auto rng = make_rng(derive_seed(seed, "subsample"));
    for (auto& [cls, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t keep = std::max<std::size_t>(
            1, static_cast<std::size_t>(
                   std::floor(fraction * static_cast<double>(idx.size()) + 0.5)));
        out.train.insert(out.train.end(), idx.begin(), idx.begin() + keep);
    }
    std::sort(out.train.begin(), out.train.end());
    return out;
}

/// Inverse of the rasterization for one sample: per layout block, an
/// electrode x time matrix.
inline std::vector<Array2> unrasterize_trial(const LabeledDataset& ds, std::size_t row) {
    if (row >= ds.n_samples()) throw InvalidInputError("unrasterize: row out of range");
    std::vector<Array2> out;
    for (const auto& blk : ds.layout.blocks) {
        Array2 m(blk.n_electrodes, blk.n_time);
        const double* src = ds.X.row(row) + blk.offset;
        std::copy(src, src + blk.n_electrodes * blk.n_time, m.data());
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace cvdecode::dataset
