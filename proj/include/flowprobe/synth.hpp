#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "flowprobe/common.hpp"
#include "flowprobe/ingest.hpp"

namespace flowprobe {

enum class SynthKind { AR1, LowRank, TwoClusters, WhiteNoise };

inline const char* to_string(SynthKind k) {
    switch (k) {
    case SynthKind::AR1: return "ar1";
    case SynthKind::LowRank: return "lowrank";
    case SynthKind::TwoClusters: return "two_clusters";
    case SynthKind::WhiteNoise: return "white_noise";
    }
    return "unknown";
}

inline SynthKind parse_synth_kind(const std::string& s) {
    if (s == "ar1") return SynthKind::AR1;
    if (s == "lowrank") return SynthKind::LowRank;
    if (s == "two_clusters") return SynthKind::TwoClusters;
    if (s == "white_noise") return SynthKind::WhiteNoise;
    throw Error("unknown synthetic kind '" + s + "' (ar1, lowrank, two_clusters, white_noise)");
}

enum class Strengths { Descending, Equal };

struct SynthSpec {
    SynthKind kind = SynthKind::TwoClusters;
    std::size_t n = 2000;
    std::size_t p = 10;
    double phi = 0.9;              // AR1
    std::size_t rank = 2;          // LowRank
    double noise_std = 0.01;       // LowRank
    Strengths strengths = Strengths::Descending;
    double separation = 10.0;      // TwoClusters, in units of the per-axis std
    double attack_ratio = 0.35;    // TwoClusters
    std::uint64_t seed = 0;
};

namespace detail {

inline LabeledDataset blank_dataset(std::size_t n, std::size_t p, const std::string& name) {
    if (n == 0 || p == 0) throw Error("synthetic datasets need n > 0 and p > 0");
    LabeledDataset ds;
    ds.name = name;
    ds.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    ds.labels.assign(n, 0);
    for (std::size_t j = 0; j < p; ++j) ds.column_names.push_back("x" + std::to_string(j));
    return ds;
}

}  // namespace detail

/// Independent stationary AR(1) columns x_t = phi x_{t-1} + e_t with unit
/// Gaussian innovations and x_0 ~ N(0, 1 / (1 - phi^2)). All labels benign.
inline LabeledDataset gen_ar1(std::size_t n, std::size_t p, double phi, std::uint64_t seed) {
    if (!(std::abs(phi) < 1.0)) throw Error("AR(1) needs |phi| < 1");
    auto ds = detail::blank_dataset(n, p, "ar1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double init_sd = 1.0 / std::sqrt(1.0 - phi * phi);
    for (Eigen::Index j = 0; j < ds.cols(); ++j) {
        double x = init_sd * gauss(rng);
        ds.matrix(0, j) = x;
        for (Eigen::Index t = 1; t < ds.rows(); ++t) {
            x = phi * x + gauss(rng);
            ds.matrix(t, j) = x;
        }
    }
    return ds;
}

inline LabeledDataset gen_white_noise(std::size_t n, std::size_t p, std::uint64_t seed) {
    auto ds = gen_ar1(n, p, 0.0, seed);
    ds.name = "white_noise";
    return ds;
}

/// X = F S L^T + noise: F holds n x r i.i.d. standard normal factors, L is a
/// p x r matrix with orthonormal columns, S = diag(strengths). Descending
/// strengths are sqrt(p / (j + 1)); equal strengths are sqrt(p). Rows are
/// independent, so the data has no temporal structure.
inline LabeledDataset gen_lowrank(std::size_t n, std::size_t p, std::size_t r, double noise_std,
                                  std::uint64_t seed, Strengths strengths = Strengths::Descending) {
    if (r == 0 || r > std::min(n, p)) throw Error("low-rank generator needs 1 <= r <= min(n, p)");
    if (!(noise_std >= 0.0)) throw Error("noise_std must be non-negative");
    auto ds = detail::blank_dataset(n, p, "lowrank");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Matrix raw(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(r));
    for (Eigen::Index j = 0; j < raw.cols(); ++j)
        for (Eigen::Index i = 0; i < raw.rows(); ++i) raw(i, j) = gauss(rng);
    Eigen::HouseholderQR<Matrix> qr(raw);
    Matrix loadings = qr.householderQ() * Matrix::Identity(raw.rows(), raw.cols());
    for (Eigen::Index j = 0; j < loadings.cols(); ++j) {
        const double s = strengths == Strengths::Equal
                             ? std::sqrt(static_cast<double>(p))
                             : std::sqrt(static_cast<double>(p) / static_cast<double>(j + 1));
        loadings.col(j) *= s;
    }

    Matrix factors(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r));
    for (Eigen::Index i = 0; i < factors.rows(); ++i)
        for (Eigen::Index j = 0; j < factors.cols(); ++j) factors(i, j) = gauss(rng);
    ds.matrix = factors * loadings.transpose();
    if (noise_std > 0.0) {
        for (Eigen::Index i = 0; i < ds.rows(); ++i)
            for (Eigen::Index j = 0; j < ds.cols(); ++j) ds.matrix(i, j) += noise_std * gauss(rng);
    }
    return ds;
}

struct ClusterData {
    LabeledDataset dataset;
    // permutation[i] is the pre-shuffle index of row i; pre-shuffle rows hold
    // the benign block first, then the attack block.
    std::vector<std::size_t> permutation;
    std::size_t benign_count = 0;
    Vector attack_center;
};

/// Benign cloud at the origin, attack cloud at distance `separation` along a
/// random unit direction, both isotropic with unit variance per axis. Rows
/// are shuffled with labels kept aligned.
inline ClusterData gen_two_clusters(std::size_t n, std::size_t p, double separation,
                                    double attack_ratio, std::uint64_t seed) {
    if (!(separation >= 0.0)) throw Error("separation must be non-negative");
    if (!(attack_ratio > 0.0 && attack_ratio < 1.0)) throw Error("attack_ratio must lie in (0, 1)");
    ClusterData out;
    out.dataset = detail::blank_dataset(n, p, "two_clusters");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Vector direction(static_cast<Eigen::Index>(p));
    for (Eigen::Index j = 0; j < direction.size(); ++j) direction[j] = gauss(rng);
    direction.normalize();
    out.attack_center = separation * direction;

    const auto attacks = static_cast<std::size_t>(std::llround(attack_ratio * static_cast<double>(n)));
    out.benign_count = n - attacks;

    Matrix ordered(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (Eigen::Index i = 0; i < ordered.rows(); ++i) {
        for (Eigen::Index j = 0; j < ordered.cols(); ++j) ordered(i, j) = gauss(rng);
        if (static_cast<std::size_t>(i) >= out.benign_count) ordered.row(i) += out.attack_center.transpose();
    }

    out.permutation.resize(n);
    std::iota(out.permutation.begin(), out.permutation.end(), std::size_t{0});
    for (std::size_t k = n; k > 1; --k) {
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        std::swap(out.permutation[k - 1], out.permutation[pick(rng)]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = out.permutation[i];
        out.dataset.matrix.row(static_cast<Eigen::Index>(i)) = ordered.row(static_cast<Eigen::Index>(src));
        out.dataset.labels[i] = src >= out.benign_count ? 1 : 0;
    }
    return out;
}

inline LabeledDataset generate(const SynthSpec& spec) {
    switch (spec.kind) {
    case SynthKind::AR1: return gen_ar1(spec.n, spec.p, spec.phi, spec.seed);
    case SynthKind::LowRank:
        return gen_lowrank(spec.n, spec.p, spec.rank, spec.noise_std, spec.seed, spec.strengths);
    case SynthKind::TwoClusters:
        return gen_two_clusters(spec.n, spec.p, spec.separation, spec.attack_ratio, spec.seed).dataset;
    case SynthKind::WhiteNoise: return gen_white_noise(spec.n, spec.p, spec.seed);
    }
    throw Error("unhandled synthetic kind");
}

}  // namespace flowprobe
