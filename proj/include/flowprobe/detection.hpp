#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "flowprobe/common.hpp"

namespace flowprobe {

struct ContaminationEstimate {
    double raw_ratio = 0.0;
    double clamped = 0.0;
};

inline constexpr double kContaminationFloor = 0.01;
inline constexpr double kContaminationCeiling = 0.35;

/// c = min(max(r, 0.01), 0.35) where r is the attack fraction. Uses labels,
/// so this is an offline-benchmark calibration only.
inline ContaminationEstimate compute_contamination(std::span<const int> labels) {
    if (labels.empty()) throw Error("contamination needs at least one label");
    const auto attacks = std::count(labels.begin(), labels.end(), 1);
    ContaminationEstimate c;
    c.raw_ratio = static_cast<double>(attacks) / static_cast<double>(labels.size());
    c.clamped = std::min(std::max(c.raw_ratio, kContaminationFloor), kContaminationCeiling);
    return c;
}

struct DetectionResult {
    std::vector<int> predictions;  // 1 = anomaly / attack
    std::vector<double> scores;    // higher = more anomalous
    double fit_time = 0.0;         // seconds
    double predict_time = 0.0;     // seconds
};

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

/// Number of samples flagged at contamination c: ceil(c * n), with a small
/// guard so products like 0.01 * 1000 do not round up to 11.
inline std::size_t flagged_count(double contamination, std::size_t n) {
    const double raw = std::ceil(contamination * static_cast<double>(n) - 1e-9);
    return static_cast<std::size_t>(std::clamp(raw, 0.0, static_cast<double>(n)));
}

/// Flags the ceil(c * n) highest scores; equal scores are taken in index order.
inline std::vector<int> flag_top_scores(std::span<const double> scores, double contamination) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<int> out(scores.size(), 0);
    const std::size_t count = flagged_count(contamination, scores.size());
    for (std::size_t k = 0; k < count; ++k) out[order[k]] = 1;
    return out;
}

}  // namespace flowprobe
