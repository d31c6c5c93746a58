#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowprobe/common.hpp"
#include "flowprobe/detection.hpp"

namespace flowprobe {

struct OcsvmParams {
    std::size_t train_size = 5000;  // cold start: the first train_size rows
    double nu = 0.1;
    std::optional<double> gamma;    // unset = "scale": 1 / (m * mean per-feature variance)
    double tol = 1e-3;              // KKT violation at termination
    std::size_t max_iter = 10'000'000;
    std::size_t cache_bytes = std::size_t{512} << 20;
};

/// Decision function f(x) = sum_i alpha_i K(sv_i, x) - rho with an RBF kernel
/// K(x, y) = exp(-gamma |x - y|^2). alpha lives on the simplex
/// {0 <= alpha_i <= 1 / (nu n_train), sum alpha = 1}.
struct OcsvmModel {
    Matrix support_vectors;               // rows of the training slice with alpha > 0
    std::vector<Eigen::Index> support_indices;
    std::vector<double> alpha;
    double rho = 0.0;
    double gamma = 1.0;
    double nu = 0.1;
    double upper_bound = 1.0;             // 1 / (nu n_train)
    std::size_t n_train = 0;
    std::size_t iterations = 0;
    bool converged = false;
};

namespace detail {

inline double rbf(const double* a, const double* b, Eigen::Index m, double gamma) {
    double d = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
        const double diff = a[j] - b[j];
        d += diff * diff;
    }
    return std::exp(-gamma * d);
}

// LRU cache of kernel matrix columns stored in single precision.
class KernelColumns {
public:
    KernelColumns(const RowMajor& x, double gamma, std::size_t budget_bytes)
        : x_(x), gamma_(gamma), columns_(static_cast<std::size_t>(x.rows())),
          where_(static_cast<std::size_t>(x.rows())) {
        const std::size_t per_column = static_cast<std::size_t>(x.rows()) * sizeof(float);
        capacity_ = std::max<std::size_t>(2, budget_bytes / std::max<std::size_t>(per_column, 1));
    }

    const std::vector<float>& column(std::size_t i) {
        if (!columns_[i].empty()) {
            lru_.splice(lru_.begin(), lru_, where_[i]);
            return columns_[i];
        }
        if (lru_.size() >= capacity_) {
            const std::size_t victim = lru_.back();
            lru_.pop_back();
            columns_[victim].clear();
            columns_[victim].shrink_to_fit();
        }
        auto& col = columns_[i];
        col.resize(static_cast<std::size_t>(x_.rows()));
        const double* xi = x_.row(static_cast<Eigen::Index>(i)).data();
        for (Eigen::Index j = 0; j < x_.rows(); ++j)
            col[static_cast<std::size_t>(j)] = static_cast<float>(rbf(xi, x_.row(j).data(), x_.cols(), gamma_));
        lru_.push_front(i);
        where_[i] = lru_.begin();
        return col;
    }

private:
    const RowMajor& x_;
    double gamma_;
    std::size_t capacity_ = 2;
    std::vector<std::vector<float>> columns_;
    std::list<std::size_t> lru_;
    std::vector<std::list<std::size_t>::iterator> where_;
};

// Mean that is exact when all inputs are equal.
inline double stable_mean(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x - v.front();
    return v.front() + acc / static_cast<double>(v.size());
}

}  // namespace detail

/// gamma = 1 / (m * v) with v the mean population variance of the columns;
/// falls back to 1 when the slice has no variance at all.
inline double scale_gamma(const Matrix& train) {
    const auto m = train.cols();
    if (m == 0 || train.rows() == 0) throw Error("cannot derive gamma from an empty matrix");
    double total = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
        const double mean = train.col(j).mean();
        total += (train.col(j).array() - mean).square().mean();
    }
    const double v = total / static_cast<double>(m);
    return v > 0.0 ? 1.0 / (static_cast<double>(m) * v) : 1.0;
}

/// Solves the one-class dual
///   min 1/2 sum_ij a_i a_j K_ij  s.t. 0 <= a_i <= 1/(nu n), sum a_i = 1
/// on the first train_size rows by two-coordinate (SMO) updates with
/// second-order working-set selection. Internally the problem is scaled by
/// nu n so the box is [0, 1] and tol is measured on that scale. Hitting
/// max_iter leaves converged = false; the model is still usable.
inline OcsvmModel ocsvm_fit(const Matrix& features, const OcsvmParams& params = {}) {
    if (!(params.nu > 0.0 && params.nu <= 1.0)) throw Error("OCSVM needs 0 < nu <= 1");
    const auto n_total = static_cast<std::size_t>(features.rows());
    if (n_total == 0) throw Error("OCSVM needs at least one training sample");
    const std::size_t n = std::min(params.train_size, n_total);
    const double scaled_sum = params.nu * static_cast<double>(n);
    if (scaled_sum < 1.0) {
        throw Error("OCSVM needs nu * n_train >= 1 (nu = " + std::to_string(params.nu) +
                    ", n_train = " + std::to_string(n) + ")");
    }

    const Matrix train = features.topRows(static_cast<Eigen::Index>(n));
    const detail::RowMajor x = train;
    const Eigen::Index m = x.cols();

    OcsvmModel model;
    model.nu = params.nu;
    model.n_train = n;
    model.gamma = params.gamma.value_or(scale_gamma(train));
    model.upper_bound = 1.0 / scaled_sum;

    // beta = nu n alpha, box [0, 1], sum beta = nu n
    std::vector<double> beta(n, 0.0);
    const auto full = static_cast<std::size_t>(scaled_sum);
    for (std::size_t i = 0; i < std::min(full, n); ++i) beta[i] = 1.0;
    if (full < n) beta[full] = scaled_sum - static_cast<double>(full);

    detail::KernelColumns kernel(x, model.gamma, params.cache_bytes);
    std::vector<double> grad(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (beta[i] == 0.0) continue;
        const auto& qi = kernel.column(i);
        for (std::size_t t = 0; t < n; ++t) grad[t] += beta[i] * qi[t];
    }

    constexpr double kTau = 1e-12;
    const double qd = 1.0;  // RBF diagonal
    bool converged = false;
    std::size_t iter = 0;
    for (; iter < params.max_iter; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t i_sel = -1;
        for (std::size_t t = 0; t < n; ++t) {
            if (beta[t] < 1.0 && -grad[t] >= gmax) {
                gmax = -grad[t];
                i_sel = static_cast<std::ptrdiff_t>(t);
            }
        }
        if (i_sel < 0) {
            converged = true;
            break;
        }
        const auto i = static_cast<std::size_t>(i_sel);
        const auto& qi = kernel.column(i);

        double gmax2 = -std::numeric_limits<double>::infinity();
        double obj_min = std::numeric_limits<double>::infinity();
        std::ptrdiff_t j_sel = -1;
        for (std::size_t t = 0; t < n; ++t) {
            if (!(beta[t] > 0.0)) continue;
            gmax2 = std::max(gmax2, grad[t]);
            const double grad_diff = gmax + grad[t];
            if (grad_diff > 0.0) {
                double quad = qd + qd - 2.0 * static_cast<double>(qi[t]);
                if (quad <= 0.0) quad = kTau;
                const double obj = -(grad_diff * grad_diff) / quad;
                if (obj <= obj_min) {
                    obj_min = obj;
                    j_sel = static_cast<std::ptrdiff_t>(t);
                }
            }
        }
        if (gmax + gmax2 < params.tol || j_sel < 0) {
            converged = true;
            break;
        }
        const auto j = static_cast<std::size_t>(j_sel);
        const auto& qj = kernel.column(j);
        const auto& qi_again = kernel.column(i);  // keep i resident after fetching j

        const double old_i = beta[i];
        const double old_j = beta[j];
        double quad = qd + qd - 2.0 * static_cast<double>(qi_again[j]);
        if (quad <= 0.0) quad = kTau;
        const double delta = (grad[i] - grad[j]) / quad;
        const double sum = beta[i] + beta[j];
        beta[i] -= delta;
        beta[j] += delta;
        if (sum > 1.0) {
            if (beta[i] > 1.0) { beta[i] = 1.0; beta[j] = sum - 1.0; }
        } else {
            if (beta[j] < 0.0) { beta[j] = 0.0; beta[i] = sum; }
        }
        if (sum > 1.0) {
            if (beta[j] > 1.0) { beta[j] = 1.0; beta[i] = sum - 1.0; }
        } else {
            if (beta[i] < 0.0) { beta[i] = 0.0; beta[j] = sum; }
        }

        const double di = beta[i] - old_i;
        const double dj = beta[j] - old_j;
        for (std::size_t t = 0; t < n; ++t)
            grad[t] += static_cast<double>(qi_again[t]) * di + static_cast<double>(qj[t]) * dj;
    }
    model.iterations = iter;
    model.converged = converged;

    for (std::size_t i = 0; i < n; ++i) {
        if (beta[i] > 0.0) {
            model.support_indices.push_back(static_cast<Eigen::Index>(i));
            model.alpha.push_back(beta[i] / scaled_sum);
        }
    }
    model.support_vectors.resize(static_cast<Eigen::Index>(model.support_indices.size()), m);
    for (std::size_t s = 0; s < model.support_indices.size(); ++s)
        model.support_vectors.row(static_cast<Eigen::Index>(s)) = train.row(model.support_indices[s]);

    // rho from a fresh double-precision gradient, summed in the same order the
    // decision function uses.
    std::vector<double> free_grad;
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
        double g = 0.0;
        for (std::size_t s = 0; s < model.support_indices.size(); ++s) {
            g += model.alpha[s] * detail::rbf(x.row(model.support_indices[s]).data(),
                                              x.row(static_cast<Eigen::Index>(t)).data(), m, model.gamma);
        }
        if (beta[t] >= 1.0) lb = std::max(lb, g);
        else if (beta[t] <= 0.0) ub = std::min(ub, g);
        else free_grad.push_back(g);
    }
    model.rho = free_grad.empty() ? (ub + lb) / 2.0 : detail::stable_mean(free_grad);
    if (!std::isfinite(model.rho)) model.rho = std::isfinite(lb) ? lb : ub;
    return model;
}

/// f(x) for every row. Rows are processed in chunks of at most chunk rows;
/// each value depends only on its own row, so the chunk size never changes
/// the result.
inline std::vector<double> ocsvm_decision(const OcsvmModel& model, const Matrix& features,
                                          std::size_t chunk = 20000) {
    if (features.cols() != model.support_vectors.cols()) {
        throw Error("OCSVM model expects " + std::to_string(model.support_vectors.cols()) +
                    " features, got " + std::to_string(features.cols()));
    }
    if (chunk == 0) throw Error("chunk size must be positive");
    const detail::RowMajor sv = model.support_vectors;
    const auto n = static_cast<std::size_t>(features.rows());
    std::vector<double> out(n);
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t stop = std::min(n, start + chunk);
        const detail::RowMajor block =
            features.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(stop - start));
        for (Eigen::Index r = 0; r < block.rows(); ++r) {
            double f = 0.0;
            for (Eigen::Index s = 0; s < sv.rows(); ++s)
                f += model.alpha[static_cast<std::size_t>(s)] *
                     detail::rbf(sv.row(s).data(), block.row(r).data(), sv.cols(), model.gamma);
            out[start + static_cast<std::size_t>(r)] = f - model.rho;
        }
    }
    return out;
}

/// Anomaly iff f(x) < 0; the score is -f(x) so that larger means more anomalous.
inline DetectionResult ocsvm_predict(const OcsvmModel& model, const Matrix& features,
                                     std::size_t chunk = 20000) {
    Stopwatch timer;
    DetectionResult out;
    const auto f = ocsvm_decision(model, features, chunk);
    out.scores.resize(f.size());
    out.predictions.resize(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        out.scores[i] = -f[i];
        out.predictions[i] = f[i] < 0.0 ? 1 : 0;
    }
    out.predict_time = timer.seconds();
    return out;
}

}  // namespace flowprobe
