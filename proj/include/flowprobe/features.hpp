#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "flowprobe/common.hpp"
#include "flowprobe/probes.hpp"

namespace flowprobe {

inline constexpr double kCvEpsilon = 1e-8;
inline constexpr std::array<std::size_t, 3> kDefaultWindows{10, 30, 100};
inline constexpr Eigen::Index kDefaultStructuralDims = 10;
inline constexpr Eigen::Index kTemporalComponents = 5;
inline constexpr std::array<const char*, 6> kStatNames{"mean", "std", "max", "min", "diff", "cv"};

struct RollingStats {
    std::vector<double> mean, std, max, min, diff, cv;
};

/// Centred window of w samples around i: [i - (ceil(w/2) - 1), i + floor(w/2)],
/// truncated at both array ends. Returns [first, last] inclusive.
inline std::pair<std::size_t, std::size_t> centered_window(std::size_t i, std::size_t n,
                                                           std::size_t w) {
    const std::size_t left = (w + 1) / 2 - 1;
    const std::size_t right = w / 2;
    const std::size_t first = i >= left ? i - left : 0;
    const std::size_t last = std::min(n - 1, i + right);
    return {first, last};
}

/// Rolling mean, population std, max, min, first difference of the rolling
/// mean (0 at i = 0) and coefficient of variation std/|mean| (0 when
/// |mean| <= 1e-8).
///
/// Each window is summed directly rather than with running sums, so values
/// do not drift along long series.
inline RollingStats rolling_stats(std::span<const double> series, std::size_t w) {
    if (w < 2) throw Error("rolling window must be >= 2, got " + std::to_string(w));
    const std::size_t n = series.size();
    RollingStats s;
    for (auto* v : {&s.mean, &s.std, &s.max, &s.min, &s.diff, &s.cv}) v->resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto [first, last] = centered_window(i, n, w);
        const auto len = static_cast<double>(last - first + 1);
        double sum = 0.0;
        double hi = series[first];
        double lo = series[first];
        for (std::size_t j = first; j <= last; ++j) {
            sum += series[j];
            hi = std::max(hi, series[j]);
            lo = std::min(lo, series[j]);
        }
        const double mean = sum / len;
        double ss = 0.0;
        for (std::size_t j = first; j <= last; ++j) ss += (series[j] - mean) * (series[j] - mean);
        const double sd = std::sqrt(ss / len);
        s.mean[i] = mean;
        s.std[i] = sd;
        s.max[i] = hi;
        s.min[i] = lo;
        s.diff[i] = i == 0 ? 0.0 : mean - s.mean[i - 1];
        s.cv[i] = std::abs(mean) > kCvEpsilon ? sd / std::abs(mean) : 0.0;
    }
    return s;
}

struct FeatureProvenance {
    std::vector<std::size_t> windows;      // temporal only
    Eigen::Index components = 0;           // PCA columns used
    Eigen::Index requested_components = 0;
    bool clamped = false;                  // structural d clamped to what the data allows
};

struct FeatureMatrix {
    Matrix matrix;
    std::vector<std::string> feature_names;
    Paradigm paradigm = Paradigm::Structural;
    FeatureProvenance provenance;
};

/// Rolling statistics over the l2-norm signal and the first five principal
/// component scores. Columns are ordered (window, signal, statistic) and
/// named "w<window>_<signal>_<stat>", giving |windows| x 6 x 6 features.
inline FeatureMatrix temporal_features(const Matrix& std_matrix, const PcaModel& pca,
                                       std::span<const std::size_t> windows = kDefaultWindows) {
    if (windows.empty()) throw Error("temporal features need at least one window");
    const auto n = static_cast<std::size_t>(std_matrix.rows());
    const std::size_t max_w = *std::max_element(windows.begin(), windows.end());
    if (n <= max_w)
        throw Error("temporal features need more than " + std::to_string(max_w) +
                    " samples (largest window), got " + std::to_string(n));
    if (pca.components() < kTemporalComponents)
        throw Error("temporal features need 5 principal components, model has " +
                    std::to_string(pca.components()));

    std::vector<std::vector<double>> signals;
    std::vector<std::string> signal_names{"l2"};
    signals.push_back(aggregate_signal(std_matrix, Aggregation::L2Norm));
    const Matrix scores = project(pca, std_matrix, kTemporalComponents);
    for (Eigen::Index c = 0; c < kTemporalComponents; ++c) {
        const auto col = detail::column_span(scores, c);
        signals.emplace_back(col.begin(), col.end());
        signal_names.push_back("pc" + std::to_string(c + 1));
    }

    FeatureMatrix out;
    out.paradigm = Paradigm::Temporal;
    out.provenance.windows.assign(windows.begin(), windows.end());
    out.provenance.components = kTemporalComponents;
    out.provenance.requested_components = kTemporalComponents;
    const auto width = static_cast<Eigen::Index>(windows.size() * signals.size() * kStatNames.size());
    out.matrix.resize(static_cast<Eigen::Index>(n), width);

    Eigen::Index col = 0;
    for (std::size_t w : windows) {
        for (std::size_t s = 0; s < signals.size(); ++s) {
            const RollingStats rs = rolling_stats(signals[s], w);
            const std::array<const std::vector<double>*, 6> stats{&rs.mean, &rs.std, &rs.max,
                                                                  &rs.min,  &rs.diff, &rs.cv};
            for (std::size_t k = 0; k < stats.size(); ++k, ++col) {
                std::copy(stats[k]->begin(), stats[k]->end(), out.matrix.col(col).data());
                out.feature_names.push_back("w" + std::to_string(w) + "_" + signal_names[s] + "_" +
                                            kStatNames[k]);
            }
        }
    }
    return out;
}

struct StructuralPca {
    PcaModel model;
    Eigen::Index requested = 0;
    bool clamped = false;
};

/// Fits the structural PCA, clamping d to min(n - 1, p) when the data is too
/// narrow instead of failing.
inline StructuralPca fit_structural_pca(const Matrix& std_matrix,
                                        Eigen::Index d = kDefaultStructuralDims) {
    const Eigen::Index available = std::min(std_matrix.rows() - 1, std_matrix.cols());
    StructuralPca r;
    r.requested = d;
    r.clamped = d > available;
    r.model = fit_pca(std_matrix, std::min(d, available));
    return r;
}

inline FeatureMatrix structural_features(const Matrix& std_matrix, const PcaModel& pca) {
    FeatureMatrix out;
    out.paradigm = Paradigm::Structural;
    out.matrix = project(pca, std_matrix);
    for (Eigen::Index c = 0; c < pca.components(); ++c)
        out.feature_names.push_back("pc" + std::to_string(c + 1));
    out.provenance.components = pca.components();
    out.provenance.requested_components = pca.components();
    return out;
}

inline FeatureMatrix structural_features(const Matrix& std_matrix, const StructuralPca& fitted) {
    FeatureMatrix out = structural_features(std_matrix, fitted.model);
    out.provenance.requested_components = fitted.requested;
    out.provenance.clamped = fitted.clamped;
    return out;
}

}  // namespace flowprobe
