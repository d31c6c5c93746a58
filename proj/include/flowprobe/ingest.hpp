#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "flowprobe/common.hpp"

namespace flowprobe {

struct LabeledDataset {
    Matrix matrix;
    Labels labels;  // 1 = attack, 0 = benign
    std::vector<std::string> column_names;
    std::string name;

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index cols() const { return matrix.cols(); }
};

struct StandardizationParams {
    Vector means;
    Vector stds;
    std::vector<Eigen::Index> constant_columns;

    bool is_constant(Eigen::Index col) const {
        return std::binary_search(constant_columns.begin(), constant_columns.end(), col);
    }
};

inline constexpr double kConstantColumnTolerance = 1e-12;

/// How label strings map to the attack class. When `positive` is non-empty a
/// label is an attack iff it is listed there; otherwise every label that is
/// not listed in `benign` is an attack (handy for multi-attack captures where
/// only the benign marker is fixed).
struct LabelRule {
    std::set<std::string> positive;
    std::set<std::string> benign;

    bool is_attack(const std::string& value) const {
        if (!positive.empty()) return positive.contains(value);
        return !benign.contains(value);
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// Parses a non-empty CSV cell. Accepts plain reals plus the special tokens
/// nan, inf, infinity (optionally signed, any case).
inline std::optional<double> parse_real(std::string_view cell) {
    if (cell.empty()) return std::nullopt;
    std::string_view body = cell;
    bool negative = false;
    if (body.front() == '+' || body.front() == '-') {
        negative = body.front() == '-';
        body.remove_prefix(1);
    }
    const std::string token = lower(body);
    if (token == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (token == "inf" || token == "infinity") {
        return negative ? -std::numeric_limits<double>::infinity()
                        : std::numeric_limits<double>::infinity();
    }
    // from_chars rejects a leading '+', so parse the unsigned body
    if (body.empty() || body.front() == '+' || body.front() == '-') return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
    if (ec != std::errc() || ptr != body.data() + body.size()) return std::nullopt;
    if (!std::isfinite(value)) return std::nullopt;  // "1e999" style overflow
    return negative ? -value : value;
}

inline std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

inline LabeledDataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                               const LabelRule& rule) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open CSV file: " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw Error("CSV file has no header row: " + path.string());
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

    std::vector<std::string> header;
    for (auto f : detail::split_fields(line)) header.emplace_back(f);
    const auto label_it = std::find(header.begin(), header.end(), label_column);
    if (label_it == header.end())
        throw Error("label column '" + label_column + "' not found in " + path.string());
    const std::size_t label_idx = static_cast<std::size_t>(label_it - header.begin());
    const std::size_t width = header.size();

    std::vector<std::vector<double>> columns(width);
    std::vector<bool> numeric(width, true);
    numeric[label_idx] = false;
    Labels labels;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_fields(line);
        if (fields.size() != width) {
            throw Error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(width) + " fields, found " + std::to_string(fields.size()));
        }
        for (std::size_t c = 0; c < width; ++c) {
            if (!numeric[c]) continue;
            if (fields[c].empty()) {
                columns[c].push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            if (auto v = detail::parse_real(fields[c])) {
                columns[c].push_back(*v);
            } else {
                numeric[c] = false;
                columns[c].clear();
                columns[c].shrink_to_fit();
            }
        }
        labels.push_back(rule.is_attack(std::string(fields[label_idx])) ? 1 : 0);
    }

    if (labels.empty()) throw Error("CSV file has no data rows: " + path.string());

    LabeledDataset ds;
    ds.name = path.stem().string();
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < width; ++c) {
        if (numeric[c]) {
            kept.push_back(c);
            ds.column_names.push_back(header[c]);
        }
    }
    if (kept.empty()) throw Error("no numeric feature columns in " + path.string());

    const auto n = static_cast<Eigen::Index>(labels.size());
    ds.matrix.resize(n, static_cast<Eigen::Index>(kept.size()));
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const auto& col = columns[kept[k]];
        std::copy(col.begin(), col.end(), ds.matrix.col(static_cast<Eigen::Index>(k)).data());
    }
    ds.labels = std::move(labels);
    return ds;
}

inline LabeledDataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                               const std::set<std::string>& positive_values) {
    return load_csv(path, label_column, LabelRule{positive_values, {}});
}

/// Reads a row-major little-endian float32 matrix described by a key-value
/// sidecar:
///
///     dtype = float32
///     shape = [n, p]
///     labels = labels.txt        # path relative to the sidecar, or
///     labels = [0, 1, 1, ...]    # inline array
inline LabeledDataset load_binary(const std::filesystem::path& path,
                                  const std::filesystem::path& sidecar) {
    std::ifstream side(sidecar);
    if (!side) throw Error("cannot open sidecar: " + sidecar.string());

    std::string dtype, shape, labels_spec, name;
    std::string line;
    while (std::getline(side, line)) {
        auto body = detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        auto pos = body.find_first_of("=:");
        if (pos == std::string_view::npos) throw Error("malformed sidecar line: " + line);
        std::string key(detail::trim(body.substr(0, pos)));
        std::string value(detail::trim(body.substr(pos + 1)));
        if (key == "dtype") dtype = detail::lower(value);
        else if (key == "shape") shape = value;
        else if (key == "labels") labels_spec = value;
        else if (key == "name") name = value;
    }

    if (dtype != "float32" && dtype != "<f4" && dtype != "f32" && dtype != "float32le")
        throw Error("unsupported dtype '" + dtype + "' (only little-endian float32 is supported)");

    auto parse_list = [](std::string s) {
        std::replace_if(s.begin(), s.end(), [](char c) { return c == '[' || c == ']' || c == ','; }, ' ');
        std::istringstream is(s);
        std::vector<long long> out;
        long long v;
        while (is >> v) out.push_back(v);
        if (!is.eof()) throw Error("malformed integer list: " + s);
        return out;
    };

    const auto dims = parse_list(shape);
    if (dims.size() != 2 || dims[0] <= 0 || dims[1] <= 0)
        throw Error("sidecar shape must be [n, p] with positive entries, got '" + shape + "'");
    const auto n = static_cast<Eigen::Index>(dims[0]);
    const auto p = static_cast<Eigen::Index>(dims[1]);

    std::ifstream bin(path, std::ios::binary);
    if (!bin) throw Error("cannot open binary matrix: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    const auto expected = static_cast<std::uintmax_t>(n) * static_cast<std::uintmax_t>(p) * 4u;
    if (bytes.size() != expected) {
        throw Error("shape mismatch: [" + std::to_string(n) + ", " + std::to_string(p) + "] needs " +
                    std::to_string(expected) + " bytes, file has " + std::to_string(bytes.size()));
    }

    LabeledDataset ds;
    ds.name = name.empty() ? path.stem().string() : name;
    ds.matrix.resize(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) {
            std::uint32_t raw;
            std::memcpy(&raw, bytes.data() + 4 * (i * p + j), 4);
            if constexpr (std::endian::native == std::endian::big) raw = __builtin_bswap32(raw);
            ds.matrix(i, j) = static_cast<double>(std::bit_cast<float>(raw));
        }
    }
    for (Eigen::Index j = 0; j < p; ++j) ds.column_names.push_back("f" + std::to_string(j));

    std::vector<long long> raw_labels;
    if (labels_spec.empty()) {
        throw Error("sidecar does not declare labels");
    } else if (labels_spec.front() == '[') {
        raw_labels = parse_list(labels_spec);
    } else {
        auto label_path = std::filesystem::path(labels_spec);
        if (label_path.is_relative()) label_path = sidecar.parent_path() / label_path;
        std::ifstream lf(label_path);
        if (!lf) throw Error("cannot open label file: " + label_path.string());
        std::stringstream buf;
        buf << lf.rdbuf();
        raw_labels = parse_list(buf.str());
    }
    if (static_cast<Eigen::Index>(raw_labels.size()) != n) {
        throw Error("label count " + std::to_string(raw_labels.size()) + " does not match n = " +
                    std::to_string(n));
    }
    for (auto v : raw_labels) {
        if (v != 0 && v != 1) throw Error("labels must be 0 or 1, got " + std::to_string(v));
        ds.labels.push_back(static_cast<int>(v));
    }
    return ds;
}

/// Replaces NaN and +/-inf with 0; every finite entry is left untouched.
inline LabeledDataset clean(LabeledDataset dataset) {
    dataset.matrix = dataset.matrix.unaryExpr([](double v) { return std::isfinite(v) ? v : 0.0; });
    return dataset;
}

inline StandardizationParams fit_standardizer(const Matrix& matrix) {
    const auto n = matrix.rows();
    if (n < 2) throw Error("standardization needs at least 2 rows, got " + std::to_string(n));
    StandardizationParams params;
    params.means.resize(matrix.cols());
    params.stds.resize(matrix.cols());
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
        const auto col = detail::column_span(matrix, j);
        double sum = 0.0;
        for (double v : col) sum += v;
        double mean = sum / static_cast<double>(n);
        // second pass removes the rounding left in the naive sum (large offset, small spread)
        double resid = 0.0;
        for (double v : col) resid += v - mean;
        mean += resid / static_cast<double>(n);
        double ss = 0.0;
        for (double v : col) ss += (v - mean) * (v - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n));  // population
        params.means[j] = mean;
        params.stds[j] = sd;
        if (!(sd >= kConstantColumnTolerance)) params.constant_columns.push_back(j);
    }
    return params;
}

inline Matrix apply_standardizer(const Matrix& matrix, const StandardizationParams& params) {
    if (matrix.cols() != params.means.size()) {
        throw Error("standardizer expects " + std::to_string(params.means.size()) + " columns, got " +
                    std::to_string(matrix.cols()));
    }
    Matrix out(matrix.rows(), matrix.cols());
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
        if (params.is_constant(j)) {
            out.col(j).setZero();
        } else {
            out.col(j) = (matrix.col(j).array() - params.means[j]) / params.stds[j];
        }
    }
    return out;
}

/// Maps standardized values back to the original scale; constant columns
/// come back as their mean.
inline Matrix invert_standardizer(const Matrix& standardized, const StandardizationParams& params) {
    if (standardized.cols() != params.means.size())
        throw Error("standardizer dimension mismatch on inverse transform");
    Matrix out(standardized.rows(), standardized.cols());
    for (Eigen::Index j = 0; j < standardized.cols(); ++j) {
        if (params.is_constant(j)) {
            out.col(j).setConstant(params.means[j]);
        } else {
            out.col(j) = standardized.col(j).array() * params.stds[j] + params.means[j];
        }
    }
    return out;
}

/// Writes a matrix plus an integer label column as a headered CSV that
/// load_csv reads back (shortest round-trip number formatting).
inline void write_csv(const std::filesystem::path& path, const Matrix& matrix,
                      const std::vector<std::string>& column_names, const Labels* labels,
                      const std::string& label_column = "label") {
    if (static_cast<Eigen::Index>(column_names.size()) != matrix.cols())
        throw Error("column name count does not match matrix width");
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    std::string row;
    for (std::size_t j = 0; j < column_names.size(); ++j) {
        if (j) row += ',';
        row += column_names[j];
    }
    if (labels) row += (column_names.empty() ? "" : ",") + label_column;
    out << row << '\n';
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
        row.clear();
        for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
            if (j) row += ',';
            row += detail::format_real(matrix(i, j));
        }
        if (labels) {
            if (matrix.cols()) row += ',';
            row += std::to_string((*labels)[static_cast<std::size_t>(i)]);
        }
        out << row << '\n';
    }
    if (!out) throw Error("write failed: " + path.string());
}

}  // namespace flowprobe
