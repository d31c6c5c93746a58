#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowprobe/common.hpp"

namespace flowprobe {

// ---------------------------------------------------------------------------
// Aggregated flow signal and autocorrelation
// ---------------------------------------------------------------------------

enum class Aggregation { L2Norm, Sum };

/// One scalar per sample summarising its (standardized) feature vector.
inline std::vector<double> aggregate_signal(const Matrix& matrix,
                                            Aggregation how = Aggregation::L2Norm) {
    if (matrix.rows() == 0 || matrix.cols() == 0) throw Error("cannot aggregate an empty matrix");
    std::vector<double> out(static_cast<std::size_t>(matrix.rows()));
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
        out[static_cast<std::size_t>(i)] =
            how == Aggregation::L2Norm ? matrix.row(i).norm() : matrix.row(i).sum();
    }
    return out;
}

/// Biased sample autocorrelation for lags 0..max_lag:
///   rho(k) = sum_{i<n-k} (x_i - m)(x_{i+k} - m) / sum_i (x_i - m)^2
inline std::vector<double> acf(std::span<const double> series, std::size_t max_lag) {
    const std::size_t n = series.size();
    if (n <= max_lag)
        throw Error("ACF needs more than max_lag = " + std::to_string(max_lag) + " samples, got " +
                    std::to_string(n));
    const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
    if (*lo == *hi) throw Error("ACF is undefined for a constant series");

    double mean = 0.0;
    for (double v : series) mean += v;
    mean /= static_cast<double>(n);

    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n; ++i) centered[i] = series[i] - mean;
    double denom = 0.0;
    for (double c : centered) denom += c * c;

    std::vector<double> rho(max_lag + 1);
    rho[0] = 1.0;
    for (std::size_t k = 1; k <= max_lag; ++k) {
        double num = 0.0;
        for (std::size_t i = 0; i + k < n; ++i) num += centered[i] * centered[i + k];
        rho[k] = num / denom;
    }
    return rho;
}

struct AcfProbeResult {
    std::vector<double> acf;
    double lag1 = 0.0;
    double threshold = 0.0;
    bool verdict = false;  // lag1 >= threshold
};

inline constexpr double kDefaultAcfThreshold = 0.3;
inline constexpr std::size_t kDefaultMaxLag = 50;

inline AcfProbeResult acf_probe(std::span<const double> series,
                                double threshold = kDefaultAcfThreshold,
                                std::size_t max_lag = kDefaultMaxLag) {
    if (max_lag < 1) throw Error("ACF probe needs max_lag >= 1");
    AcfProbeResult r;
    r.acf = acf(series, max_lag);
    r.lag1 = r.acf[1];
    r.threshold = threshold;
    r.verdict = r.lag1 >= threshold;
    return r;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

/// Projection z = W^T (x - mean). Components are the top-d eigenvectors of the
/// sample covariance, each signed so its largest-magnitude coordinate is
/// positive.
struct PcaModel {
    Vector mean;
    Matrix basis;                                  // p x d, orthonormal columns
    std::vector<double> explained_variance;        // d eigenvalues
    std::vector<double> explained_variance_ratio;  // d fractions, non-increasing
    // Ratios for every available component (min(n-1, p) of them), used for
    // the cumulative variance curve and the variance probe.
    std::vector<double> spectrum_ratio;
    Eigen::Index total_components_available = 0;

    Eigen::Index features() const { return basis.rows(); }
    Eigen::Index components() const { return basis.cols(); }
};

inline PcaModel fit_pca(const Matrix& matrix, Eigen::Index d) {
    const auto n = matrix.rows();
    const auto p = matrix.cols();
    if (n < 2) throw Error("PCA needs at least 2 samples");
    const auto available = std::min(n - 1, p);
    if (d < 1 || d > available) {
        throw Error("PCA component count " + std::to_string(d) + " outside [1, " +
                    std::to_string(available) + "]");
    }

    PcaModel model;
    model.mean = matrix.colwise().mean().transpose();
    const Matrix centered = matrix.rowwise() - model.mean.transpose();
    const Matrix cov = (centered.adjoint() * centered) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
    if (solver.info() != Eigen::Success) throw Error("covariance eigendecomposition failed");

    // Eigen returns ascending eigenvalues.
    const Vector& evals = solver.eigenvalues();
    double total = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) total += std::max(evals[j], 0.0);
    if (!(total > 0.0)) throw Error("PCA input has zero total variance (all-constant matrix)");

    model.total_components_available = available;
    model.basis.resize(p, d);
    for (Eigen::Index j = 0; j < available; ++j) {
        const Eigen::Index src = p - 1 - j;
        const double lambda = std::max(evals[src], 0.0);
        model.spectrum_ratio.push_back(lambda / total);
        if (j < d) {
            Vector v = solver.eigenvectors().col(src);
            Eigen::Index arg = 0;
            v.cwiseAbs().maxCoeff(&arg);
            if (v[arg] < 0) v = -v;
            model.basis.col(j) = v;
            model.explained_variance.push_back(lambda);
            model.explained_variance_ratio.push_back(lambda / total);
        }
    }
    return model;
}

/// Projects rows onto the first k components. Each row is handled
/// independently of its neighbours.
inline Matrix project(const PcaModel& model, const Matrix& matrix, Eigen::Index k) {
    if (matrix.cols() != model.features()) {
        throw Error("PCA model expects " + std::to_string(model.features()) + " features, got " +
                    std::to_string(matrix.cols()));
    }
    if (k < 1 || k > model.components())
        throw Error("projection width " + std::to_string(k) + " outside model range");
    return (matrix.rowwise() - model.mean.transpose()) * model.basis.leftCols(k);
}

inline Matrix project(const PcaModel& model, const Matrix& matrix) {
    return project(model, matrix, model.components());
}

inline Matrix reconstruct(const PcaModel& model, const Matrix& scores) {
    if (scores.cols() > model.components()) throw Error("too many score columns for model");
    Matrix out = scores * model.basis.leftCols(scores.cols()).transpose();
    out.rowwise() += model.mean.transpose();
    return out;
}

inline std::vector<double> cumulative_variance_curve(const PcaModel& model) {
    const auto& ratios =
        model.spectrum_ratio.empty() ? model.explained_variance_ratio : model.spectrum_ratio;
    std::vector<double> out;
    double acc = 0.0;
    for (double r : ratios) out.push_back(acc += r);
    return out;
}

struct VarianceProbeResult {
    std::size_t k = 5;
    double target = 0.95;
    double cumulative_at_k = 0.0;
    bool verdict = false;  // cumulative_at_k >= target
};

inline constexpr std::size_t kDefaultComponentBudget = 5;
inline constexpr double kDefaultVarianceTarget = 0.95;

/// Missing components (p < k) count as zero variance.
inline VarianceProbeResult variance_probe(const PcaModel& model,
                                          std::size_t k = kDefaultComponentBudget,
                                          double target = kDefaultVarianceTarget) {
    const auto& ratios =
        model.spectrum_ratio.empty() ? model.explained_variance_ratio : model.spectrum_ratio;
    VarianceProbeResult r;
    r.k = k;
    r.target = target;
    for (std::size_t j = 0; j < std::min(k, ratios.size()); ++j) r.cumulative_at_k += ratios[j];
    r.verdict = r.cumulative_at_k >= target;
    return r;
}

// ---------------------------------------------------------------------------
// Decision
// ---------------------------------------------------------------------------

struct ParadigmDecision {
    Paradigm branch = Paradigm::Hybrid;
    AcfProbeResult acf_evidence;
    std::optional<VarianceProbeResult> variance_evidence;
    bool hybrid_flag = false;  // the hybrid branch is an unvalidated fallback
};

/// Temporal if the ACF probe fires (the variance probe is then never
/// evaluated), else Structural if the variance probe fires, else Hybrid.
inline ParadigmDecision decide_paradigm(const AcfProbeResult& acf_result,
                                        const std::function<VarianceProbeResult()>& variance_supplier) {
    ParadigmDecision d;
    d.acf_evidence = acf_result;
    if (acf_result.verdict) {
        d.branch = Paradigm::Temporal;
        return d;
    }
    d.variance_evidence = variance_supplier();
    if (d.variance_evidence->verdict) {
        d.branch = Paradigm::Structural;
    } else {
        d.branch = Paradigm::Hybrid;
        d.hybrid_flag = true;
    }
    return d;
}

}  // namespace flowprobe
