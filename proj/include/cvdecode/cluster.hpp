#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "cvdecode/array.hpp"
#include "cvdecode/error.hpp"
#include "cvdecode/labels.hpp"
#include "cvdecode/stats.hpp"

namespace cvdecode::cluster {

/// One agglomeration step. Node ids: leaves are 0..n-1, merge k creates
/// node n+k. Height is the Ward objective (within-cluster variance
/// increase) of the merge.
struct Merge {
    std::size_t left = 0;
    std::size_t right = 0;
    double height = 0.0;
    std::size_t new_id = 0;
};

struct Dendrogram {
    std::vector<std::string> leaf_labels;
    std::vector<Merge> merges;  // n_leaves - 1 entries

    std::size_t n_leaves() const { return leaf_labels.size(); }
};

enum class Metric { euclidean, sqeuclidean };

/// Dense symmetric pairwise distances, zero diagonal.
inline Array2 pairwise_distances(const Array2& vectors, Metric metric = Metric::euclidean) {
    const std::size_t n = vectors.rows();
    Array2 d(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < vectors.cols(); ++k) {
                const double diff = vectors(i, k) - vectors(j, k);
                s += diff * diff;
            }
            if (metric == Metric::euclidean) s = std::sqrt(s);
            d(i, j) = d(j, i) = s;
        }
    return d;
}

/// Ward's method by Lance-Williams updates on the merge-cost matrix
/// D(A,B) = |A||B|/(|A|+|B|) * ||c_A - c_B||^2 (singleton pairs start at
/// half the squared distance). Ties break toward the lowest (i, j) pair in
/// node-id order, so the result is deterministic.
inline Dendrogram ward_cluster(const Array2& features,
                               std::vector<std::string> leaf_labels = {}) {
    const std::size_t n = features.rows();
    if (n < 2) throw InvalidInputError("ward_cluster: need >= 2 items");
    if (leaf_labels.empty())
        for (std::size_t i = 0; i < n; ++i) leaf_labels.push_back("item_" + std::to_string(i));
    if (leaf_labels.size() != n)
        throw InvalidInputError("ward_cluster: label count != item count");

    // Active clusters indexed by slot; cost(i, j) kept for active slots.
    std::vector<std::size_t> node_id(n);
    std::iota(node_id.begin(), node_id.end(), 0);
    std::vector<std::size_t> size(n, 1);
    std::vector<bool> active(n, true);
    Array2 cost(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < features.cols(); ++k) {
                const double diff = features(i, k) - features(j, k);
                s += diff * diff;
            }
            cost(i, j) = cost(j, i) = 0.5 * s;
        }

    Dendrogram dendro;
    dendro.leaf_labels = std::move(leaf_labels);
    for (std::size_t m = 0; m + 1 < n; ++m) {
        std::size_t bi = 0, bj = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (!active[j]) continue;
                if (cost(i, j) < best) {
                    best = cost(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }

        Merge merge;
        merge.left = std::min(node_id[bi], node_id[bj]);
        merge.right = std::max(node_id[bi], node_id[bj]);
        merge.height = best;
        merge.new_id = n + m;
        dendro.merges.push_back(merge);

        // Lance-Williams Ward update into slot bi.
        const double sa = static_cast<double>(size[bi]);
        const double sb = static_cast<double>(size[bj]);
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == bi || k == bj) continue;
            const double sk = static_cast<double>(size[k]);
            const double v = ((sa + sk) * cost(bi, k) + (sb + sk) * cost(bj, k) -
                              sk * cost(bi, bj)) /
                             (sa + sb + sk);
            cost(bi, k) = cost(k, bi) = v;
        }
        size[bi] += size[bj];
        node_id[bi] = merge.new_id;
        active[bj] = false;
    }
    return dendro;
}

/// Leaf cluster assignment after applying every merge with height <= d.
/// Cluster indices are canonicalized by first appearance in leaf order.
inline std::vector<int> clusters_at_cutoff(const Dendrogram& dendro, double d) {
    if (d < 0.0) throw InvalidInputError("clusters_at_cutoff: cutoff must be >= 0");
    const std::size_t n = dendro.n_leaves();
    std::vector<std::size_t> parent(n + dendro.merges.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&parent](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& m : dendro.merges) {
        if (m.height > d) continue;
        const std::size_t root = find(m.left);
        parent[find(m.right)] = root;
        parent[m.new_id] = root;
    }
    std::map<std::size_t, int> renumber;
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t root = find(i);
        auto it = renumber.find(root);
        if (it == renumber.end())
            it = renumber.emplace(root, static_cast<int>(renumber.size())).first;
        out[i] = it->second;
    }
    return out;
}

/// Step function (cutoff, cluster count) sampled at 0 and at each distinct
/// merge height; non-increasing from n to 1.
inline std::vector<std::pair<double, std::size_t>> cluster_count_curve(
    const Dendrogram& dendro) {
    std::vector<std::pair<double, std::size_t>> curve;
    const std::size_t n = dendro.n_leaves();
    std::vector<double> heights;
    for (const auto& m : dendro.merges) heights.push_back(m.height);
    std::sort(heights.begin(), heights.end());

    curve.emplace_back(0.0, n - static_cast<std::size_t>(std::count_if(
                                    heights.begin(), heights.end(),
                                    [](double h) { return h <= 0.0; })));
    for (std::size_t i = 0; i < heights.size(); ++i) {
        if (i + 1 < heights.size() && heights[i + 1] == heights[i]) continue;
        if (curve.back().first == heights[i])
            curve.back().second = n - (i + 1);
        else
            curve.emplace_back(heights[i], n - (i + 1));
    }
    return curve;
}

/// Cutoff halfway across the largest gap between consecutive merge heights
/// (the last such gap when tied). A stand-in for choosing the threshold by
/// eye; callers can override with an explicit cutoff.
inline double knee_cutoff(const Dendrogram& dendro) {
    std::vector<double> h;
    for (const auto& m : dendro.merges) h.push_back(m.height);
    std::sort(h.begin(), h.end());
    if (h.size() == 1) return h[0] / 2.0;
    double best_gap = -1.0;
    double cutoff = h.back() / 2.0;
    for (std::size_t i = 0; i + 1 < h.size(); ++i) {
        const double gap = h[i + 1] - h[i];
        if (gap >= best_gap) {
            best_gap = gap;
            cutoff = 0.5 * (h[i] + h[i + 1]);
        }
    }
    return cutoff;
}

/// Adjusted Rand index between two flat assignments over the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size() || a.empty())
        throw InvalidInputError("adjusted_rand_index: length mismatch or empty");
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ca, cb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++joint[{a[i], b[i]}];
        ++ca[a[i]];
        ++cb[b[i]];
    }
    auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
    double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [k, v] : joint) sum_joint += choose2(v);
    for (const auto& [k, v] : ca) sum_a += choose2(v);
    for (const auto& [k, v] : cb) sum_b += choose2(v);
    const double total = choose2(static_cast<double>(a.size()));
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;  // both partitions trivial
    return (sum_joint - expected) / (max_index - expected);
}

/// Per-CV correlation between network-space distances and block-restricted
/// articulatory distances (same/different category), self excluded.
struct DistanceCorrelation {
    std::vector<double> per_cv;         // correlation for each retained CV
    std::vector<std::string> retained;  // CV labels in per_cv order
    std::vector<std::string> excluded;  // zero-variance rows
};

inline DistanceCorrelation articulatory_distance_correlation(
    const Array2& net_dist, const std::vector<std::string>& cv_labels,
    const std::string& block,
    const labels::ArticulatoryFeatureTable& table = labels::default_feature_table()) {
    const std::size_t n = cv_labels.size();
    if (net_dist.rows() != n || net_dist.cols() != n)
        throw ShapeMismatchError("distance correlation: matrix does not match label count");

    std::vector<std::vector<double>> blocks;
    blocks.reserve(n);
    for (const auto& lab : cv_labels)
        blocks.push_back(table.block_vector(block, labels::parse_cv(lab)));

    DistanceCorrelation out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x, y;
        x.reserve(n - 1);
        y.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            x.push_back(net_dist(i, j));
            y.push_back(blocks[i] == blocks[j] ? 0.0 : 1.0);
        }
        const auto r = stats::pearson(x, y);
        if (r) {
            out.per_cv.push_back(*r);
            out.retained.push_back(cv_labels[i]);
        } else {
            out.excluded.push_back(cv_labels[i]);
        }
    }
    return out;
}

}  // namespace cvdecode::cluster
