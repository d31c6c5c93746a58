#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "flowprobe/common.hpp"
#include "flowprobe/detection.hpp"

namespace flowprobe {

struct KMeansParams {
    std::size_t k = 2;
    std::size_t n_init = 10;
    std::size_t max_iter = 300;
    double tol = 1e-4;  // stop once no centroid moves further than this
    std::uint64_t seed = 0;
};

struct KMeansModel {
    Matrix centroids;  // k x m
    std::size_t k = 0;
    double inertia = 0.0;
    std::vector<double> inertia_history;  // after every assignment step of the winning restart
    std::size_t iterations = 0;
    bool converged = false;
};

struct Assignment {
    std::vector<int> cluster;
    std::vector<double> distance;  // Euclidean distance to the assigned centroid
};

namespace detail {

inline double squared_distance(const Matrix& x, Eigen::Index row, const Matrix& c, Eigen::Index k) {
    double d = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double diff = x(row, j) - c(k, j);
        d += diff * diff;
    }
    return d;
}

// Nearest centroid, lowest index on ties. Returns squared distances.
inline std::vector<int> assign_nearest(const Matrix& x, const Matrix& centroids,
                                       std::vector<double>& sq_dist) {
    const auto n = static_cast<std::size_t>(x.rows());
    std::vector<int> cluster(n);
    sq_dist.assign(n, 0.0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (Eigen::Index k = 0; k < centroids.rows(); ++k) {
            const double d = squared_distance(x, i, centroids, k);
            if (d < best) {
                best = d;
                arg = static_cast<int>(k);
            }
        }
        cluster[static_cast<std::size_t>(i)] = arg;
        sq_dist[static_cast<std::size_t>(i)] = best;
    }
    return cluster;
}

// k-means++ seeding: first centre uniform, the rest drawn with probability
// proportional to squared distance from the nearest chosen centre.
inline Matrix kmeans_plus_plus(const Matrix& x, std::size_t k, std::mt19937_64& rng) {
    const auto n = static_cast<std::size_t>(x.rows());
    Matrix centers(static_cast<Eigen::Index>(k), x.cols());
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    centers.row(0) = x.row(static_cast<Eigen::Index>(first(rng)));

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(x, static_cast<Eigen::Index>(i), centers, 0);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        if (!(total > 0.0))
            throw Error("k-means needs at least " + std::to_string(k) + " distinct points");
        std::uniform_real_distribution<double> draw(0.0, total);
        const double target = draw(rng);
        std::size_t pick = n - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc > target && d2[i] > 0.0) {
                pick = i;
                break;
            }
        }
        while (d2[pick] <= 0.0) --pick;  // rounding at the tail of the cumulative sum
        centers.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(pick));
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(x, static_cast<Eigen::Index>(i), centers,
                                                     static_cast<Eigen::Index>(c)));
        }
    }
    return centers;
}

inline KMeansModel lloyd(const Matrix& x, Matrix centroids, const KMeansParams& params) {
    const auto k = static_cast<Eigen::Index>(params.k);
    const auto n = static_cast<std::size_t>(x.rows());
    KMeansModel model;
    model.k = params.k;
    std::vector<double> sq;
    std::vector<int> cluster;

    for (std::size_t iter = 0; iter < params.max_iter; ++iter) {
        cluster = assign_nearest(x, centroids, sq);
        double inertia = 0.0;
        for (double v : sq) inertia += v;
        model.inertia_history.push_back(inertia);

        Matrix next = Matrix::Zero(k, x.cols());
        std::vector<std::size_t> counts(params.k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            next.row(cluster[i]) += x.row(static_cast<Eigen::Index>(i));
            ++counts[static_cast<std::size_t>(cluster[i])];
        }
        for (Eigen::Index c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
                continue;
            }
            // Empty cluster: reseed at the point farthest from its centroid.
            const auto far = static_cast<std::size_t>(std::max_element(sq.begin(), sq.end()) - sq.begin());
            next.row(c) = x.row(static_cast<Eigen::Index>(far));
            sq[far] = 0.0;
        }

        double shift = 0.0;
        for (Eigen::Index c = 0; c < k; ++c) shift = std::max(shift, (next.row(c) - centroids.row(c)).norm());
        centroids = std::move(next);
        model.iterations = iter + 1;
        if (shift < params.tol) {
            model.converged = true;
            break;
        }
    }

    cluster = assign_nearest(x, centroids, sq);
    model.inertia = 0.0;
    for (double v : sq) model.inertia += v;
    model.inertia_history.push_back(model.inertia);
    model.centroids = std::move(centroids);
    return model;
}

}  // namespace detail

/// Lloyd's algorithm from k-means++ seeds; the restart with the lowest
/// inertia wins (earliest restart on ties). Restart r draws from a seed
/// derived from (seed, r).
inline KMeansModel kmeans_fit(const Matrix& features, const KMeansParams& params = {}) {
    if (params.k < 1) throw Error("k-means needs k >= 1");
    if (static_cast<std::size_t>(features.rows()) < params.k) {
        throw Error("k-means needs n >= k (n = " + std::to_string(features.rows()) +
                    ", k = " + std::to_string(params.k) + ")");
    }
    if (params.n_init == 0 || params.max_iter == 0) throw Error("k-means needs n_init, max_iter > 0");

    std::optional<KMeansModel> best;
    for (std::size_t r = 0; r < params.n_init; ++r) {
        std::mt19937_64 rng(detail::mix_seed(params.seed, r));
        auto model = detail::lloyd(features, detail::kmeans_plus_plus(features, params.k, rng), params);
        if (!best || model.inertia < best->inertia) best = std::move(model);
    }
    return std::move(*best);
}

inline Assignment kmeans_assign(const KMeansModel& model, const Matrix& features) {
    if (features.cols() != model.centroids.cols()) {
        throw Error("k-means model expects " + std::to_string(model.centroids.cols()) +
                    " features, got " + std::to_string(features.cols()));
    }
    Assignment a;
    a.cluster = detail::assign_nearest(features, model.centroids, a.distance);
    for (double& d : a.distance) d = std::sqrt(d);
    return a;
}

struct KMeansDetection : DetectionResult {
    std::vector<int> assignments;
    std::vector<int> cluster_to_label;  // empty when labels were not supplied
};

/// Maps each cluster to the majority ground-truth label of its members
/// (ties and empty clusters map to benign). This uses labels and is meant
/// for offline evaluation only; without labels the raw cluster ids are the
/// predictions. Scores are distances to the assigned centroid.
inline KMeansDetection kmeans_detect(const KMeansModel& model, const Matrix& features,
                                     std::optional<std::span<const int>> labels) {
    Stopwatch timer;
    KMeansDetection out;
    Assignment a = kmeans_assign(model, features);
    out.assignments = a.cluster;
    out.scores = std::move(a.distance);
    if (!labels) {
        out.predictions = out.assignments;
    } else {
        if (labels->size() != out.assignments.size())
            throw Error("label count does not match sample count");
        std::vector<std::size_t> attacks(model.k, 0), members(model.k, 0);
        for (std::size_t i = 0; i < out.assignments.size(); ++i) {
            const auto c = static_cast<std::size_t>(out.assignments[i]);
            ++members[c];
            if ((*labels)[i] == 1) ++attacks[c];
        }
        out.cluster_to_label.resize(model.k);
        for (std::size_t c = 0; c < model.k; ++c)
            out.cluster_to_label[c] = 2 * attacks[c] > members[c] ? 1 : 0;
        out.predictions.resize(out.assignments.size());
        for (std::size_t i = 0; i < out.assignments.size(); ++i)
            out.predictions[i] = out.cluster_to_label[static_cast<std::size_t>(out.assignments[i])];
    }
    out.predict_time = timer.seconds();
    return out;
}

}  // namespace flowprobe
