#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowprobe/common.hpp"
#include "flowprobe/kmeans.hpp"

namespace flowprobe {

struct EvalMetrics {
    std::string method;
    Paradigm paradigm = Paradigm::Structural;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::optional<double> silhouette;
    double fit_time = 0.0;
    double predict_time = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

    double total_time() const { return fit_time + predict_time; }
};

/// Attack (1) is the positive class. Empty denominators give 0 rather than
/// NaN so every report row is defined.
inline EvalMetrics confusion_metrics(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw Error("prediction count " + std::to_string(predictions.size()) +
                    " does not match label count " + std::to_string(labels.size()));
    }
    EvalMetrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] == 1;
        const bool y = labels[i] == 1;
        if (p && y) ++m.tp;
        else if (p) ++m.fp;
        else if (y) ++m.fn;
        else ++m.tn;
    }
    m.precision = m.tp + m.fp ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    m.recall = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

inline constexpr std::size_t kSilhouetteSampleCap = 5000;

/// Mean silhouette (b - a) / max(a, b) with Euclidean distances. Above
/// sample_cap points a seeded uniform sample is drawn and every distance is
/// taken within that sample. Points alone in their cluster contribute 0.
inline double silhouette(const Matrix& features, std::span<const int> assignments,
                         std::size_t sample_cap = kSilhouetteSampleCap, std::uint64_t seed = 0) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (assignments.size() != n) throw Error("assignment count does not match sample count");
    if (n == 0) throw Error("silhouette of an empty matrix");

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (sample_cap > 0 && n > sample_cap) {
        std::mt19937_64 rng(seed);
        for (std::size_t k = 0; k < sample_cap; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, n - 1);
            std::swap(idx[k], idx[pick(rng)]);
        }
        idx.resize(sample_cap);
        std::sort(idx.begin(), idx.end());
    }

    std::map<int, std::size_t> compact;
    for (auto i : idx) compact.emplace(assignments[i], 0);
    if (compact.size() < 2) throw Error("silhouette needs at least two clusters");
    std::size_t next = 0;
    for (auto& [label, id] : compact) id = next++;

    const std::size_t s = idx.size();
    const std::size_t c = compact.size();
    std::vector<std::size_t> cid(s), sizes(c, 0);
    for (std::size_t a = 0; a < s; ++a) {
        cid[a] = compact[assignments[idx[a]]];
        ++sizes[cid[a]];
    }

    const detail::RowMajor x = features;
    double total = 0.0;
    std::vector<double> sums(c);
    for (std::size_t a = 0; a < s; ++a) {
        std::fill(sums.begin(), sums.end(), 0.0);
        const double* xa = x.row(static_cast<Eigen::Index>(idx[a])).data();
        for (std::size_t b = 0; b < s; ++b) {
            if (a == b) continue;
            const double* xb = x.row(static_cast<Eigen::Index>(idx[b])).data();
            double d = 0.0;
            for (Eigen::Index j = 0; j < x.cols(); ++j) d += (xa[j] - xb[j]) * (xa[j] - xb[j]);
            sums[cid[b]] += std::sqrt(d);
        }
        const std::size_t own = cid[a];
        if (sizes[own] <= 1) continue;  // contributes 0
        const double intra = sums[own] / static_cast<double>(sizes[own] - 1);
        double inter = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < c; ++k)
            if (k != own) inter = std::min(inter, sums[k] / static_cast<double>(sizes[k]));
        const double denom = std::max(intra, inter);
        if (denom > 0.0) total += (inter - intra) / denom;
    }
    return total / static_cast<double>(s);
}

struct SilhouettePoint {
    std::size_t k = 0;
    double score = 0.0;
};

/// Fits k-means for every K in [k_min, k_max] and scores each partition.
inline std::vector<SilhouettePoint> silhouette_sweep(const Matrix& features, std::size_t k_min,
                                                     std::size_t k_max, KMeansParams kmeans = {},
                                                     std::size_t sample_cap = kSilhouetteSampleCap) {
    if (k_min < 2 || k_max < k_min) throw Error("silhouette sweep needs 2 <= k_min <= k_max");
    if (static_cast<std::size_t>(features.rows()) < k_max)
        throw Error("silhouette sweep needs at least k_max samples");
    std::vector<SilhouettePoint> curve;
    for (std::size_t k = k_min; k <= k_max; ++k) {
        kmeans.k = k;
        const auto model = kmeans_fit(features, kmeans);
        const auto a = kmeans_assign(model, features);
        curve.push_back({k, silhouette(features, a.cluster, sample_cap, kmeans.seed)});
    }
    return curve;
}

struct MetricGap {
    double delta = 0.0;  // best temporal - best structural; negative favours structural
    std::string best_temporal;
    double best_temporal_value = 0.0;
    std::string best_structural;
    double best_structural_value = 0.0;
};

struct ParadigmGap {
    MetricGap precision, recall, f1;

    double delta_precision() const { return precision.delta; }
    double delta_recall() const { return recall.delta; }
    double delta_f1() const { return f1.delta; }
};

/// Per metric: max over the temporal set minus max over the structural set.
/// The first method attaining a maximum is recorded.
inline ParadigmGap paradigm_gap(std::span<const EvalMetrics> temporal,
                                std::span<const EvalMetrics> structural) {
    if (temporal.empty() || structural.empty())
        throw Error("paradigm gap needs at least one method on each side");
    auto best = [](std::span<const EvalMetrics> set, double EvalMetrics::*field) {
        const EvalMetrics* arg = &set.front();
        for (const auto& m : set)
            if (m.*field > arg->*field) arg = &m;
        return std::pair{arg->method, arg->*field};
    };
    auto gap = [&](double EvalMetrics::*field) {
        MetricGap g;
        std::tie(g.best_temporal, g.best_temporal_value) = best(temporal, field);
        std::tie(g.best_structural, g.best_structural_value) = best(structural, field);
        g.delta = g.best_temporal_value - g.best_structural_value;
        return g;
    };
    return {gap(&EvalMetrics::precision), gap(&EvalMetrics::recall), gap(&EvalMetrics::f1)};
}

}  // namespace flowprobe
