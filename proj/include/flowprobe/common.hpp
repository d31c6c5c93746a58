#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace flowprobe {

// Samples are rows, features are columns. Row order is capture order.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Paradigm { Temporal, Structural, Hybrid };

inline const char* to_string(Paradigm p) {
    switch (p) {
    case Paradigm::Temporal: return "temporal";
    case Paradigm::Structural: return "structural";
    case Paradigm::Hybrid: return "hybrid";
    }
    return "unknown";
}

inline Paradigm parse_paradigm(const std::string& s) {
    if (s == "temporal") return Paradigm::Temporal;
    if (s == "structural") return Paradigm::Structural;
    if (s == "hybrid") return Paradigm::Hybrid;
    throw Error("unknown paradigm '" + s + "' (expected temporal, structural or hybrid)");
}

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// splitmix64 finalizer; used to derive independent per-tree / per-restart seeds
// so results do not depend on execution order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::span<const double> column_span(const Matrix& m, Eigen::Index col) {
    // column-major storage: each column is contiguous
    return {m.data() + col * m.rows(), static_cast<std::size_t>(m.rows())};
}

inline std::vector<double> to_std(const Vector& v) {
    return {v.data(), v.data() + v.size()};
}

}  // namespace detail
}  // namespace flowprobe
