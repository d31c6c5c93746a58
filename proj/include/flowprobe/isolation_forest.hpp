#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "flowprobe/common.hpp"
#include "flowprobe/detection.hpp"

namespace flowprobe {

struct IsolationForestParams {
    std::size_t n_trees = 100;
    std::size_t subsample = 256;
    std::uint64_t seed = 0;
};

struct IsolationTree {
    struct Node {
        Eigen::Index feature = -1;  // -1 marks a leaf
        double threshold = 0.0;     // x[feature] < threshold goes left
        std::int32_t left = -1;
        std::int32_t right = -1;
        std::size_t size = 0;       // training points that reached this node
        std::size_t depth = 0;

        bool is_leaf() const { return feature < 0; }
    };
    std::vector<Node> nodes;  // nodes[0] is the root

    std::size_t depth() const {
        std::size_t d = 0;
        for (const auto& n : nodes) d = std::max(d, n.depth);
        return d;
    }
};

/// Average unsuccessful-search path length in a BST of m points:
/// c(m) = 2 H(m-1) - 2 (m-1) / m, c(1) = 0, c(2) = 1.
inline double average_path_length(std::size_t m) {
    if (m <= 1) return 0.0;
    double harmonic = 0.0;
    for (std::size_t i = 1; i < m; ++i) harmonic += 1.0 / static_cast<double>(i);
    return 2.0 * harmonic - 2.0 * static_cast<double>(m - 1) / static_cast<double>(m);
}

struct IsolationForestModel {
    std::vector<IsolationTree> trees;
    std::size_t subsample_size = 0;  // effective psi = min(psi, n)
    std::size_t n_trees = 0;
    std::size_t height_limit = 0;    // ceil(log2 psi)
    Eigen::Index features = 0;
    std::vector<double> path_adjustment;  // c(m) for m = 0..psi
};

namespace detail {

inline std::size_t ceil_log2(std::size_t v) {
    std::size_t h = 0;
    while ((std::size_t{1} << h) < v) ++h;
    return h;
}

class IsolationTreeBuilder {
public:
    IsolationTreeBuilder(const Matrix& x, std::size_t height_limit, std::mt19937_64& rng)
        : x_(x), limit_(height_limit), rng_(rng) {}

    IsolationTree build(std::vector<Eigen::Index> rows) {
        tree_.nodes.clear();
        grow(rows, 0, rows.size(), 0);
        return std::move(tree_);
    }

private:
    std::int32_t grow(std::vector<Eigen::Index>& rows, std::size_t begin, std::size_t end,
                      std::size_t depth) {
        const auto id = static_cast<std::int32_t>(tree_.nodes.size());
        tree_.nodes.push_back({});
        tree_.nodes[id].size = end - begin;
        tree_.nodes[id].depth = depth;
        if (depth >= limit_ || end - begin <= 1) return id;

        // Candidate split features: those not constant within this node.
        std::vector<Eigen::Index> candidates;
        std::vector<std::pair<double, double>> ranges;
        for (Eigen::Index f = 0; f < x_.cols(); ++f) {
            double lo = x_(rows[begin], f), hi = lo;
            for (std::size_t k = begin + 1; k < end; ++k) {
                const double v = x_(rows[k], f);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (lo < hi) {
                candidates.push_back(f);
                ranges.emplace_back(lo, hi);
            }
        }
        if (candidates.empty()) return id;  // identical points

        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        const std::size_t c = pick(rng_);
        const auto [lo, hi] = ranges[c];
        std::uniform_real_distribution<double> split(lo, hi);
        double threshold = split(rng_);
        while (!(threshold > lo)) threshold = split(rng_);

        const Eigen::Index feature = candidates[c];
        auto mid = std::stable_partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                         rows.begin() + static_cast<std::ptrdiff_t>(end),
                                         [&](Eigen::Index r) { return x_(r, feature) < threshold; });
        const auto split_at = static_cast<std::size_t>(mid - rows.begin());

        tree_.nodes[id].feature = feature;
        tree_.nodes[id].threshold = threshold;
        const auto left = grow(rows, begin, split_at, depth + 1);
        const auto right = grow(rows, split_at, end, depth + 1);
        tree_.nodes[id].left = left;
        tree_.nodes[id].right = right;
        return id;
    }

    const Matrix& x_;
    std::size_t limit_;
    std::mt19937_64& rng_;
    IsolationTree tree_;
};

}  // namespace detail

/// Each tree is grown on a uniform subsample (without replacement) of
/// min(psi, n) rows, splitting on a uniformly drawn non-constant feature at a
/// uniform threshold in (min, max) until the height limit, a single point, or
/// identical points. Tree t uses a seed derived from (seed, t).
inline IsolationForestModel if_fit(const Matrix& features, const IsolationForestParams& params = {}) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (n == 0) throw Error("isolation forest needs at least one sample");
    if (params.n_trees == 0 || params.subsample == 0)
        throw Error("isolation forest needs n_trees > 0 and subsample > 0");

    IsolationForestModel model;
    model.subsample_size = std::min(params.subsample, n);
    model.n_trees = params.n_trees;
    model.height_limit = detail::ceil_log2(model.subsample_size);
    model.features = features.cols();
    model.path_adjustment.resize(model.subsample_size + 1);
    for (std::size_t m = 0; m <= model.subsample_size; ++m)
        model.path_adjustment[m] = average_path_length(m);

    std::vector<Eigen::Index> all(n);
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    model.trees.reserve(params.n_trees);
    for (std::size_t t = 0; t < params.n_trees; ++t) {
        std::mt19937_64 rng(detail::mix_seed(params.seed, t));
        // partial Fisher-Yates for the subsample
        std::vector<Eigen::Index> pool = all;
        for (std::size_t k = 0; k < model.subsample_size; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, n - 1);
            std::swap(pool[k], pool[pick(rng)]);
        }
        pool.resize(model.subsample_size);
        detail::IsolationTreeBuilder builder(features, model.height_limit, rng);
        model.trees.push_back(builder.build(std::move(pool)));
    }
    return model;
}

/// h(x): edges from the root to x's leaf plus c(leaf size) for the
/// unexpanded part of the leaf.
inline double path_length(const IsolationForestModel& model, const IsolationTree& tree,
                          const Matrix& features, Eigen::Index row) {
    const IsolationTree::Node* node = &tree.nodes[0];
    while (!node->is_leaf()) {
        node = &tree.nodes[static_cast<std::size_t>(
            features(row, node->feature) < node->threshold ? node->left : node->right)];
    }
    return static_cast<double>(node->depth) + model.path_adjustment[node->size];
}

/// s(x) = 2^(-E[h(x)] / c(psi)), in (0, 1). A forest built on a single
/// sample cannot rank anything and scores every point 0.5.
inline std::vector<double> if_score(const IsolationForestModel& model, const Matrix& features) {
    if (features.cols() != model.features) {
        throw Error("isolation forest expects " + std::to_string(model.features) +
                    " features, got " + std::to_string(features.cols()));
    }
    const double norm = model.path_adjustment[model.subsample_size];
    std::vector<double> scores(static_cast<std::size_t>(features.rows()), 0.5);
    if (norm <= 0.0) return scores;
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        double total = 0.0;
        for (const auto& tree : model.trees) total += path_length(model, tree, features, i);
        const double mean_path = total / static_cast<double>(model.trees.size());
        scores[static_cast<std::size_t>(i)] = std::exp2(-mean_path / norm);
    }
    return scores;
}

inline std::vector<int> if_predict(std::span<const double> scores, double contamination) {
    return flag_top_scores(scores, contamination);
}

}  // namespace flowprobe
