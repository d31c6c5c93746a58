#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "flowprobe/detect.hpp"
#include "flowprobe/synth.hpp"
#include "test_util.hpp"

using namespace flowprobe;

namespace {

Labels labels_with_ratio(std::size_t n, std::size_t attacks) {
    Labels l(n, 0);
    std::fill(l.begin(), l.begin() + static_cast<std::ptrdiff_t>(attacks), 1);
    return l;
}

double inertia_of(const Matrix& x, const std::vector<int>& assign, int k) {
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
        Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(x.cols());
        int count = 0;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            if (assign[static_cast<std::size_t>(i)] == c) {
                sum += x.row(i);
                ++count;
            }
        if (count == 0) continue;
        const Eigen::RowVectorXd mean = sum / count;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            if (assign[static_cast<std::size_t>(i)] == c) total += (x.row(i) - mean).squaredNorm();
    }
    return total;
}

}  // namespace

// ---------------------------------------------------------------- contamination

TEST(Contamination, ClampExamples) {
    EXPECT_EQ(compute_contamination(labels_with_ratio(1000, 996)).clamped, 0.35);
    EXPECT_EQ(compute_contamination(labels_with_ratio(1000, 4)).clamped, 0.01);
    EXPECT_EQ(compute_contamination(labels_with_ratio(1000, 200)).clamped, 0.2);
    EXPECT_EQ(compute_contamination(labels_with_ratio(1000, 200)).raw_ratio, 0.2);
    EXPECT_THROW(compute_contamination(Labels{}), Error);
}

TEST(FlaggedCount, CeilOfProduct) {
    EXPECT_EQ(flagged_count(0.01, 1000), 10u);
    EXPECT_EQ(flagged_count(0.35, 1000), 350u);
    EXPECT_EQ(flagged_count(0.35, 7), 3u);
    EXPECT_EQ(flagged_count(0.01, 1), 1u);
    for (std::size_t n = 1; n < 500; n += 7)
        for (double c : {0.01, 0.1, 0.2, 0.3, 0.35})
            EXPECT_EQ(flagged_count(c, n),
                      static_cast<std::size_t>(std::ceil(c * static_cast<double>(n) - 1e-9)));
}

// ---------------------------------------------------------------- isolation forest

TEST(IsolationForest, AveragePathLength) {
    EXPECT_EQ(average_path_length(0), 0.0);
    EXPECT_EQ(average_path_length(1), 0.0);
    EXPECT_EQ(average_path_length(2), 1.0);
    // c(256) = 2 H(255) - 2 * 255 / 256
    double h = 0.0;
    for (int i = 1; i <= 255; ++i) h += 1.0 / i;
    EXPECT_NEAR(average_path_length(256), 2.0 * h - 2.0 * 255.0 / 256.0, 1e-12);
}

TEST(IsolationForest, SingleSampleScoresHalf) {
    const Matrix x = Matrix::Constant(1, 3, 2.0);
    const auto model = if_fit(x, {10, 256, 1});
    for (const auto& t : model.trees) EXPECT_EQ(t.nodes.size(), 1u);
    EXPECT_EQ(if_score(model, x), std::vector<double>{0.5});
    const auto more = if_score(model, testutil::gaussian(5, 3, 1));
    for (double s : more) EXPECT_EQ(s, 0.5);
}

TEST(IsolationForest, IdenticalPointsGiveDepthZeroTrees) {
    const Matrix x = Matrix::Constant(50, 4, -1.5);
    const auto model = if_fit(x, {20, 32, 3});
    for (const auto& t : model.trees) EXPECT_EQ(t.depth(), 0u);
    const auto s = if_score(model, x);
    // E[h] = c(psi) exactly, so every score is 0.5
    for (double v : s) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(IsolationForest, DeterministicUnderSeed) {
    const Matrix x = testutil::gaussian(600, 5, 2);
    const auto a = if_score(if_fit(x, {50, 128, 99}), x);
    const auto b = if_score(if_fit(x, {50, 128, 99}), x);
    EXPECT_EQ(a, b);
    const auto c = if_score(if_fit(x, {50, 128, 100}), x);
    EXPECT_NE(a, c);
}

TEST(IsolationForest, ScoresInOpenUnitIntervalAndHeightLimit) {
    const Matrix x = testutil::gaussian(1000, 3, 4);
    const auto model = if_fit(x);
    EXPECT_EQ(model.height_limit, 8u);
    for (const auto& t : model.trees) EXPECT_LE(t.depth(), 8u);
    for (double s : if_score(model, x)) {
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
    }
}

TEST(IsolationForest, PlantedOutlierRanksNearTop) {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Matrix x = testutil::gaussian(500, 2, 1000 + seed);
        x(137, 0) = 10.0;
        x(137, 1) = 0.0;
        const auto s = if_score(if_fit(x, {100, 256, seed}), x);
        // cloud points extreme on both axes can edge it out; top 3 is robust
        std::vector<std::size_t> order(s.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::partial_sort(order.begin(), order.begin() + 3, order.end(),
                          [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
        if (std::find(order.begin(), order.begin() + 3, std::size_t{137}) != order.begin() + 3) ++hits;
        std::vector<double> sorted = s;
        std::nth_element(sorted.begin(), sorted.begin() + 250, sorted.end());
        EXPECT_GT(s[137], sorted[250]);
    }
    EXPECT_GE(hits, 95);
}

TEST(IsolationForest, ShallowerPathMeansHigherScore) {
    const Matrix x = testutil::gaussian(300, 2, 8);
    const auto model = if_fit(x, {64, 128, 8});
    const auto s = if_score(model, x);
    auto mean_path = [&](Eigen::Index row) {
        double total = 0.0;
        for (const auto& t : model.trees) total += path_length(model, t, x, row);
        return total / static_cast<double>(model.trees.size());
    };
    for (Eigen::Index a = 0; a < 30; ++a) {
        for (Eigen::Index b = a + 1; b < 30; ++b) {
            const double ha = mean_path(a), hb = mean_path(b);
            if (ha < hb) { EXPECT_GT(s[static_cast<std::size_t>(a)], s[static_cast<std::size_t>(b)]); }
            if (ha > hb) { EXPECT_LT(s[static_cast<std::size_t>(a)], s[static_cast<std::size_t>(b)]); }
        }
        // below-average depth scores above one half
        const double c = average_path_length(model.subsample_size);
        if (mean_path(a) > c) { EXPECT_LT(s[static_cast<std::size_t>(a)], 0.5); }
    }
}

TEST(IsolationForest, PredictCountsAndTies) {
    const Matrix x = testutil::gaussian(1000, 4, 6);
    const auto s = if_score(if_fit(x, {100, 256, 6}), x);
    const auto p = if_predict(s, 0.01);
    EXPECT_EQ(std::accumulate(p.begin(), p.end(), 0), 10);
    const auto q = if_predict(s, 0.35);
    EXPECT_EQ(std::accumulate(q.begin(), q.end(), 0), 350);

    const std::vector<double> flat(20, 0.5);
    const auto t = if_predict(flat, 0.2);
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(t[i], i < 4 ? 1 : 0);
}

TEST(IsolationForest, DimensionMismatch) {
    const auto model = if_fit(testutil::gaussian(50, 3, 1), {5, 16, 0});
    EXPECT_THROW(if_score(model, testutil::gaussian(5, 4, 1)), Error);
    EXPECT_THROW(if_fit(Matrix(0, 3)), Error);
}

// ---------------------------------------------------------------- one-class SVM

TEST(Ocsvm, DualFeasibilityAndNuProperty) {
    const Matrix x = testutil::gaussian(2000, 5, 31);
    OcsvmParams p;
    p.train_size = 2000;
    p.nu = 0.1;
    const auto model = ocsvm_fit(x, p);
    ASSERT_TRUE(model.converged);
    const double sum = std::accumulate(model.alpha.begin(), model.alpha.end(), 0.0);
    EXPECT_NEAR(sum, 1.0, 1e-6);
    for (double a : model.alpha) {
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, model.upper_bound + 1e-12);
    }
    EXPECT_NEAR(model.upper_bound, 1.0 / (0.1 * 2000), 1e-15);
    const auto f = ocsvm_decision(model, x);
    const auto outliers = std::count_if(f.begin(), f.end(), [](double v) { return v < 0.0; });
    const double frac = static_cast<double>(outliers) / 2000.0;
    EXPECT_NEAR(frac, 0.1, 0.05);
    // at least nu * n support vectors
    EXPECT_GE(model.alpha.size(), 200u);
    EXPECT_GT(model.rho, 0.0);
}

TEST(Ocsvm, ChunkingIsTransparent) {
    const Matrix train = testutil::gaussian(300, 4, 5);
    OcsvmParams p;
    p.nu = 0.2;
    const auto model = ocsvm_fit(train, p);
    const Matrix probe = testutil::gaussian(100, 4, 6, 2.0);
    const auto one = ocsvm_predict(model, probe, 1);
    const auto big = ocsvm_predict(model, probe, 20000);
    const auto odd = ocsvm_predict(model, probe, 7);
    EXPECT_EQ(one.predictions, big.predictions);
    EXPECT_EQ(odd.predictions, big.predictions);
    for (std::size_t i = 0; i < 100; ++i) {
        EXPECT_NEAR(one.scores[i], big.scores[i], 1e-12);
        EXPECT_NEAR(odd.scores[i], big.scores[i], 1e-12);
    }
}

TEST(Ocsvm, IdenticalTrainingPoints) {
    const Matrix x = Matrix::Constant(20, 3, 0.75);
    OcsvmParams p;
    p.nu = 0.5;
    const auto model = ocsvm_fit(x, p);
    for (double f : ocsvm_decision(model, x)) EXPECT_GE(f, 0.0);
    Matrix away = Matrix::Constant(1, 3, 0.75);
    away(0, 0) += 5.0;
    EXPECT_LT(ocsvm_decision(model, away)[0], 0.0);
}

TEST(Ocsvm, FarPointFlaggedBulkKept) {
    Matrix x = testutil::gaussian(1000, 3, 12);
    OcsvmParams p;
    p.nu = 0.1;
    const auto model = ocsvm_fit(x, p);
    Matrix probe(2, 3);
    // the exact centre sits near the boundary for an RBF one-class SVM; one sigma out is well inside
    probe << 1, 0, 0, 10, 0, 0;
    const auto r = ocsvm_predict(model, probe);
    EXPECT_EQ(r.predictions[0], 0);
    EXPECT_EQ(r.predictions[1], 1);
    EXPECT_GT(r.scores[1], r.scores[0]);
}

TEST(Ocsvm, ColdStartUsesLeadingRows) {
    Matrix x = testutil::gaussian(400, 2, 3);
    x.bottomRows(100).array() += 50.0;  // never seen in training
    OcsvmParams p;
    p.train_size = 300;
    p.nu = 0.1;
    const auto model = ocsvm_fit(x, p);
    EXPECT_EQ(model.n_train, 300u);
    for (auto idx : model.support_indices) EXPECT_LT(idx, 300);
    const auto r = ocsvm_predict(model, x.bottomRows(100));
    for (int v : r.predictions) EXPECT_EQ(v, 1);
}

TEST(Ocsvm, ScaleGamma) {
    Matrix x(4, 2);
    x << 0, 0, 2, 0, 0, 4, 2, 4;  // population variances 1 and 4
    EXPECT_DOUBLE_EQ(scale_gamma(x), 1.0 / (2 * 2.5));
    EXPECT_EQ(scale_gamma(Matrix::Ones(5, 3)), 1.0);
}

TEST(Ocsvm, Errors) {
    OcsvmParams p;
    p.nu = 0.1;
    p.train_size = 5;
    EXPECT_THROW(ocsvm_fit(testutil::gaussian(5, 2, 1), p), Error);  // nu * n < 1
    p.nu = 0.0;
    EXPECT_THROW(ocsvm_fit(testutil::gaussian(50, 2, 1), p), Error);
    p.nu = 0.5;
    const auto model = ocsvm_fit(testutil::gaussian(50, 2, 1), p);
    EXPECT_THROW(ocsvm_decision(model, testutil::gaussian(3, 3, 1)), Error);
    EXPECT_THROW(ocsvm_decision(model, testutil::gaussian(3, 2, 1), 0), Error);
}

TEST(Ocsvm, Deterministic) {
    const Matrix x = testutil::gaussian(500, 3, 44);
    OcsvmParams p;
    const auto a = ocsvm_fit(x, p);
    const auto b = ocsvm_fit(x, p);
    EXPECT_EQ(a.alpha, b.alpha);
    EXPECT_EQ(a.rho, b.rho);
    EXPECT_EQ(ocsvm_decision(a, x), ocsvm_decision(b, x));
}

// ---------------------------------------------------------------- k-means

TEST(KMeans, TwoPointsTwoClusters) {
    Matrix x(2, 2);
    x << 0, 0, 3, 4;
    const auto model = kmeans_fit(x, {2, 10, 300, 1e-4, 0});
    EXPECT_EQ(model.inertia, 0.0);
    const auto a = kmeans_assign(model, x);
    EXPECT_NE(a.cluster[0], a.cluster[1]);
    EXPECT_EQ(a.distance[0], 0.0);
}

TEST(KMeans, DeterministicUnderSeed) {
    const Matrix x = testutil::gaussian(400, 3, 9);
    const KMeansParams p{3, 5, 300, 1e-4, 17};
    EXPECT_EQ(kmeans_fit(x, p).centroids, kmeans_fit(x, p).centroids);
}

TEST(KMeans, SeparatedClustersRecoverMeans) {
    const auto data = gen_two_clusters(2000, 5, 10.0, 0.35, 21);
    const auto model = kmeans_fit(data.dataset.matrix, {2, 10, 300, 1e-4, 21});
    // match each true centre to its nearest centroid
    const Vector origin = Vector::Zero(5);
    for (const Vector& truth : {origin, data.attack_center}) {
        double best = 1e300;
        for (Eigen::Index c = 0; c < 2; ++c)
            best = std::min(best, (model.centroids.row(c).transpose() - truth).norm());
        EXPECT_LT(best, 0.2);
    }
}

TEST(KMeans, InertiaNonIncreasing) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix x = testutil::gaussian(500, 4, seed);
        const auto model = kmeans_fit(x, {4, 3, 300, 1e-6, seed});
        const auto& h = model.inertia_history;
        ASSERT_GE(h.size(), 2u);
        for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LE(h[i], h[i - 1] * (1 + 1e-12));
        EXPECT_EQ(h.back(), model.inertia);
    }
}

TEST(KMeans, BeatsRandomAssignments) {
    const Matrix x = testutil::gaussian(200, 3, 77);
    const auto model = kmeans_fit(x, {2, 10, 300, 1e-4, 77});
    std::mt19937_64 rng(5);
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<int> assign(200);
        for (auto& a : assign) a = coin(rng) ? 1 : 0;
        EXPECT_LE(model.inertia, inertia_of(x, assign, 2) + 1e-9);
    }
}

TEST(KMeans, Errors) {
    EXPECT_THROW(kmeans_fit(testutil::gaussian(1, 2, 1), {2, 1, 10, 1e-4, 0}), Error);
    EXPECT_THROW(kmeans_fit(Matrix::Ones(10, 2), {2, 1, 10, 1e-4, 0}), Error);
    const auto model = kmeans_fit(testutil::gaussian(10, 2, 1), {2, 1, 10, 1e-4, 0});
    EXPECT_THROW(kmeans_assign(model, testutil::gaussian(3, 3, 1)), Error);
}

TEST(KMeansDetect, MajorityMappingAndTie) {
    KMeansModel model;
    model.k = 2;
    model.centroids.resize(2, 1);
    model.centroids << 0.0, 10.0;
    // cluster 0: 10 members, 9 attacks; cluster 1: 4 members, 2 attacks
    Matrix x(14, 1);
    Labels y(14);
    for (int i = 0; i < 10; ++i) {
        x(i, 0) = 0.1 * i;
        y[static_cast<std::size_t>(i)] = i == 0 ? 0 : 1;
    }
    for (int i = 10; i < 14; ++i) {
        x(i, 0) = 10.0 + 0.1 * i;
        y[static_cast<std::size_t>(i)] = i < 12 ? 1 : 0;
    }
    const auto det = kmeans_detect(model, x, std::span<const int>(y));
    EXPECT_EQ(det.cluster_to_label, (std::vector<int>{1, 0}));
    for (int i = 0; i < 10; ++i) EXPECT_EQ(det.predictions[static_cast<std::size_t>(i)], 1);
    for (int i = 10; i < 14; ++i) EXPECT_EQ(det.predictions[static_cast<std::size_t>(i)], 0);

    const auto raw = kmeans_detect(model, x, std::nullopt);
    EXPECT_EQ(raw.predictions, raw.assignments);
    EXPECT_TRUE(raw.cluster_to_label.empty());
    EXPECT_THROW(kmeans_detect(model, x, std::span<const int>(y.data(), 3)), Error);
}

TEST(KMeansDetect, PurePlantedClustersGivePerfectPredictions) {
    const auto data = gen_two_clusters(600, 4, 12.0, 0.3, 5);
    const auto model = kmeans_fit(data.dataset.matrix, {2, 10, 300, 1e-4, 5});
    const auto det = kmeans_detect(model, data.dataset.matrix, std::span<const int>(data.dataset.labels));
    EXPECT_EQ(det.predictions, data.dataset.labels);
}
