#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "flowprobe/features.hpp"
#include "flowprobe/synth.hpp"
#include "test_util.hpp"

using namespace flowprobe;

namespace {

// Independent slice-based recomputation of one rolling statistic at i.
struct SliceStats {
    double mean, std, max, min, cv;
};

SliceStats slice_stats(const std::vector<double>& x, std::size_t i, std::size_t w) {
    // window: w/2 samples to the right, the rest (including i) to the left
    const long long right = static_cast<long long>(w / 2);
    const long long left = static_cast<long long>(w) - right - 1;
    const long long lo = std::max(0LL, static_cast<long long>(i) - left);
    const long long hi = std::min(static_cast<long long>(x.size()) - 1, static_cast<long long>(i) + right);
    std::vector<double> s(x.begin() + lo, x.begin() + hi + 1);
    double sum = 0.0;
    for (double v : s) sum += v;
    const double mean = sum / static_cast<double>(s.size());
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(s.size()));
    return {mean, sd, *std::max_element(s.begin(), s.end()), *std::min_element(s.begin(), s.end()),
            std::abs(mean) > 1e-8 ? sd / std::abs(mean) : 0.0};
}

std::vector<double> random_series(std::size_t n, std::uint64_t seed, double offset = 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(offset, 1.0);
    std::vector<double> x(n);
    for (auto& v : x) v = g(rng);
    return x;
}

// Zero mean, identity basis: PC scores equal the first five input columns.
PcaModel identity_pca(Eigen::Index p) {
    PcaModel m;
    m.mean = Vector::Zero(p);
    m.basis = Matrix::Identity(p, p);
    m.explained_variance.assign(static_cast<std::size_t>(p), 1.0);
    m.explained_variance_ratio.assign(static_cast<std::size_t>(p), 1.0 / static_cast<double>(p));
    return m;
}

}  // namespace

TEST(CenteredWindow, TruncationAtEdges) {
    EXPECT_EQ(centered_window(0, 200, 10), (std::pair<std::size_t, std::size_t>{0, 5}));
    EXPECT_EQ(centered_window(2, 5, 3), (std::pair<std::size_t, std::size_t>{1, 3}));
    EXPECT_EQ(centered_window(50, 200, 10), (std::pair<std::size_t, std::size_t>{46, 55}));
    EXPECT_EQ(centered_window(199, 200, 30), (std::pair<std::size_t, std::size_t>{185, 199}));
    EXPECT_EQ(centered_window(100, 300, 100), (std::pair<std::size_t, std::size_t>{51, 150}));
}

TEST(RollingStats, HandArithmetic) {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const auto s = rolling_stats(x, 3);
    EXPECT_EQ(s.mean[2], 3.0);
    EXPECT_EQ(s.max[2], 4.0);
    EXPECT_EQ(s.min[2], 2.0);
    EXPECT_NEAR(s.std[2], std::sqrt(2.0 / 3.0), 1e-15);
    EXPECT_EQ(s.diff[0], 0.0);
    EXPECT_EQ(s.diff[2], s.mean[2] - s.mean[1]);
}

TEST(RollingStats, ConstantAndZeroSeries) {
    const auto c = rolling_stats(std::vector<double>{5, 5, 5, 5}, 3);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(c.mean[i], 5.0);
        EXPECT_EQ(c.std[i], 0.0);
        EXPECT_EQ(c.max[i], 5.0);
        EXPECT_EQ(c.min[i], 5.0);
        EXPECT_EQ(c.diff[i], 0.0);
        EXPECT_EQ(c.cv[i], 0.0);
    }
    const auto z = rolling_stats(std::vector<double>{0, 0, 0}, 2);
    for (double v : z.cv) EXPECT_EQ(v, 0.0);
}

TEST(RollingStats, CvEpsilonBranch) {
    // Mean exactly at the epsilon stays on the zero branch.
    const auto s = rolling_stats(std::vector<double>{0.0, 2e-8, 0.0, 2e-8}, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        if (std::abs(s.mean[i]) <= kCvEpsilon) { EXPECT_EQ(s.cv[i], 0.0); }
    }
    const auto t = rolling_stats(std::vector<double>{1.0, 3.0, 1.0, 3.0}, 2);
    EXPECT_DOUBLE_EQ(t.cv[0], 0.5);
}

TEST(RollingStats, MatchesSliceRecomputationExactly) {
    const auto x = random_series(200, 17, 0.3);
    for (std::size_t w : {10, 30, 100, 7, 2}) {
        const auto s = rolling_stats(x, w);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto o = slice_stats(x, i, w);
            ASSERT_EQ(s.mean[i], o.mean) << "w=" << w << " i=" << i;
            ASSERT_EQ(s.std[i], o.std);
            ASSERT_EQ(s.max[i], o.max);
            ASSERT_EQ(s.min[i], o.min);
            ASSERT_EQ(s.cv[i], o.cv);
            ASSERT_EQ(s.diff[i], i == 0 ? 0.0 : o.mean - slice_stats(x, i - 1, w).mean);
        }
    }
}

TEST(RollingStats, OrderingAndSignInvariants) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto x = random_series(300, seed, seed % 2 == 0 ? 0.0 : 5.0);
        for (std::size_t w : {10, 30, 100}) {
            const auto s = rolling_stats(x, w);
            for (std::size_t i = 0; i < x.size(); ++i) {
                ASSERT_LE(s.min[i], s.mean[i]);
                ASSERT_LE(s.mean[i], s.max[i]);
                ASSERT_GE(s.std[i], 0.0);
                ASSERT_GE(s.cv[i], 0.0);
                if (s.std[i] == 0.0 || std::abs(s.mean[i]) <= kCvEpsilon) { ASSERT_EQ(s.cv[i], 0.0); }
            }
        }
    }
}

TEST(RollingStats, RejectsTinyWindow) {
    EXPECT_THROW(rolling_stats(std::vector<double>{1, 2, 3}, 1), Error);
}

TEST(TemporalFeatures, DefaultShapeAndNames) {
    const Matrix x = testutil::gaussian(400, 12, 3);
    const auto pca = fit_pca(x, 10);
    const auto f = temporal_features(x, pca);
    ASSERT_EQ(f.matrix.cols(), 108);
    ASSERT_EQ(f.matrix.rows(), 400);
    EXPECT_EQ(f.paradigm, Paradigm::Temporal);
    EXPECT_TRUE(f.matrix.allFinite());
    EXPECT_EQ(f.feature_names.front(), "w10_l2_mean");
    EXPECT_EQ(f.feature_names[6], "w10_pc1_mean");
    EXPECT_EQ(f.feature_names.back(), "w100_pc5_cv");
    EXPECT_EQ(std::set<std::string>(f.feature_names.begin(), f.feature_names.end()).size(), 108u);
    EXPECT_LT(f.matrix.cwiseAbs().maxCoeff(), 1e9);
}

TEST(TemporalFeatures, NonDefaultWindowCount) {
    const Matrix x = testutil::gaussian(100, 6, 4);
    const auto pca = fit_pca(x, 5);
    const std::vector<std::size_t> w{4, 8};
    EXPECT_EQ(temporal_features(x, pca, w).matrix.cols(), 2 * 6 * 6);
    const std::vector<std::size_t> one{5};
    EXPECT_EQ(temporal_features(x, pca, one).matrix.cols(), 36);
}

TEST(TemporalFeatures, ColumnsAreRollingStatsOfSignals) {
    const Matrix x = testutil::gaussian(150, 7, 5);
    const auto f = temporal_features(x, identity_pca(7));
    std::vector<double> l2(150);
    for (int i = 0; i < 150; ++i) l2[static_cast<std::size_t>(i)] = x.row(i).norm();
    const auto s = rolling_stats(l2, 30);
    const auto pc3 = rolling_stats(testutil::col(x, 2), 100);
    const auto it = std::find(f.feature_names.begin(), f.feature_names.end(), "w30_l2_std");
    const auto jt = std::find(f.feature_names.begin(), f.feature_names.end(), "w100_pc3_max");
    const auto c30 = it - f.feature_names.begin();
    const auto c100 = jt - f.feature_names.begin();
    for (int i = 0; i < 150; ++i) {
        EXPECT_EQ(f.matrix(i, c30), s.std[static_cast<std::size_t>(i)]);
        EXPECT_EQ(f.matrix(i, c100), pc3.max[static_cast<std::size_t>(i)]);
    }
}

TEST(TemporalFeatures, AllZeroInputGivesAllZeroFeatures) {
    const Matrix z = Matrix::Zero(150, 8);
    const auto f = temporal_features(z, identity_pca(8));
    EXPECT_EQ(f.matrix.cols(), 108);
    EXPECT_TRUE(f.matrix.isZero(0.0));
}

TEST(TemporalFeatures, SmoothingKeepsTemporalDependence) {
    // One AR(1) latent drives every column; rolling means stay strongly autocorrelated.
    const auto latent = gen_ar1(3000, 1, 0.9, 12);
    Matrix x = testutil::gaussian(3000, 10, 13, 0.1);
    for (Eigen::Index j = 0; j < 10; ++j) x.col(j) += latent.matrix.col(0) * (1.0 + 0.1 * j);
    const auto f = temporal_features(x, fit_pca(x, 10));
    const auto it = std::find(f.feature_names.begin(), f.feature_names.end(), "w10_pc1_mean");
    const auto col = testutil::col(f.matrix, it - f.feature_names.begin());
    EXPECT_GT(acf(col, 1)[1], 0.8);
}

TEST(TemporalFeatures, Errors) {
    const Matrix x = testutil::gaussian(100, 6, 4);
    EXPECT_THROW(temporal_features(x, fit_pca(x, 5)), Error);  // n <= 100
    const Matrix y = testutil::gaussian(200, 6, 4);
    EXPECT_THROW(temporal_features(y, fit_pca(y, 4)), Error);  // fewer than 5 PCs
}

TEST(StructuralFeatures, DefaultDimsAndDecorrelation) {
    Matrix x = testutil::gaussian(500, 20, 6);
    x.col(1) += x.col(0);
    const auto fitted = fit_structural_pca(x);
    const auto f = structural_features(x, fitted);
    ASSERT_EQ(f.matrix.cols(), 10);
    EXPECT_EQ(f.paradigm, Paradigm::Structural);
    EXPECT_FALSE(f.provenance.clamped);
    const Matrix c = f.matrix.rowwise() - f.matrix.colwise().mean();
    const Matrix cov = c.transpose() * c / 499.0;
    EXPECT_LT((cov - Matrix(cov.diagonal().asDiagonal())).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(StructuralFeatures, RankOneConcentratesInFirstColumn) {
    const auto ds = gen_lowrank(400, 12, 1, 0.0, 8);
    const auto f = structural_features(ds.matrix, fit_structural_pca(ds.matrix, 10));
    const Eigen::RowVectorXd var = (f.matrix.rowwise() - f.matrix.colwise().mean()).colwise().squaredNorm();
    EXPECT_GE(var[0] / var.sum(), 0.99);
}

TEST(StructuralFeatures, NarrowInputClampsDims) {
    const Matrix x = testutil::gaussian(100, 6, 9);
    const auto fitted = fit_structural_pca(x, 10);
    const auto f = structural_features(x, fitted);
    EXPECT_EQ(f.matrix.cols(), 6);
    EXPECT_TRUE(f.provenance.clamped);
    EXPECT_EQ(f.provenance.requested_components, 10);
    EXPECT_EQ(f.provenance.components, 6);
}
