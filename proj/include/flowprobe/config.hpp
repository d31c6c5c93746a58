#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flowprobe/common.hpp"
#include "flowprobe/features.hpp"
#include "flowprobe/ingest.hpp"
#include "flowprobe/probes.hpp"

namespace flowprobe {

enum class InputFormat { Csv, Binary };

struct RunConfig {
    std::filesystem::path input;
    InputFormat format = InputFormat::Csv;
    std::filesystem::path sidecar;  // binary input only
    std::string label_column = "label";
    std::set<std::string> positive_values{"1", "attack"};
    std::set<std::string> benign_values;  // used when positive_values is empty

    // probes
    double acf_threshold = kDefaultAcfThreshold;
    double variance_target = kDefaultVarianceTarget;
    std::size_t component_budget = kDefaultComponentBudget;
    std::size_t max_lag = kDefaultMaxLag;
    Aggregation aggregation = Aggregation::L2Norm;
    bool force_both_probes = false;
    std::optional<Paradigm> force_paradigm;

    // feature spaces
    std::vector<std::size_t> windows{kDefaultWindows.begin(), kDefaultWindows.end()};
    Eigen::Index structural_dims = kDefaultStructuralDims;

    // detectors
    std::size_t if_trees = 100;
    std::size_t if_subsample = 256;
    std::size_t train_size = 5000;
    std::size_t chunk_size = 20000;
    double ocsvm_tol = 1e-3;
    std::size_t k = 2;
    std::size_t kmeans_n_init = 10;
    std::size_t kmeans_max_iter = 300;
    double kmeans_tol = 1e-4;

    // evaluation
    std::size_t silhouette_k_max = 10;
    std::size_t silhouette_cap = 5000;

    std::uint64_t seed = 42;
    std::filesystem::path output_dir;
    bool timing = true;  // false writes "NA" for wall-clock columns
};

inline constexpr const char* kOutputDirEnv = "FLOWPROBE_OUTPUT_DIR";

inline std::filesystem::path default_output_dir() {
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
    return "flowprobe-out";
}

namespace detail {

inline std::string normalize_key(std::string key) {
    std::replace(key.begin(), key.end(), '-', '_');
    while (!key.empty() && key.front() == '_') key.erase(key.begin());
    return key;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const std::string_view v = trim(value);
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw Error("invalid value for " + key + ": '" + value + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    const std::string v = lower(trim(value));
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw Error("invalid boolean for " + key + ": '" + value + "'");
}

inline std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    for (auto f : split_fields(value)) {
        if (!f.empty()) out.emplace_back(f);
    }
    return out;
}

}  // namespace detail

/// Applies one key = value setting. Keys match the long CLI flag names with
/// '-' or '_' as separator.
inline void apply_setting(RunConfig& cfg, const std::string& raw_key, const std::string& value) {
    using detail::parse_number;
    const std::string key = detail::normalize_key(raw_key);
    if (key == "input") cfg.input = value;
    else if (key == "format") {
        if (value == "csv") cfg.format = InputFormat::Csv;
        else if (value == "binary") cfg.format = InputFormat::Binary;
        else throw Error("format must be csv or binary, got '" + value + "'");
    }
    else if (key == "sidecar") cfg.sidecar = value;
    else if (key == "label_column") cfg.label_column = value;
    else if (key == "positive_values") {
        auto items = detail::split_list(value);
        cfg.positive_values = {items.begin(), items.end()};
    }
    else if (key == "benign_values") {
        auto items = detail::split_list(value);
        cfg.benign_values = {items.begin(), items.end()};
        cfg.positive_values.clear();
    }
    else if (key == "acf_threshold") cfg.acf_threshold = parse_number<double>(key, value);
    else if (key == "variance_target") cfg.variance_target = parse_number<double>(key, value);
    else if (key == "component_budget") cfg.component_budget = parse_number<std::size_t>(key, value);
    else if (key == "max_lag") cfg.max_lag = parse_number<std::size_t>(key, value);
    else if (key == "aggregation") {
        if (value == "l2") cfg.aggregation = Aggregation::L2Norm;
        else if (value == "sum") cfg.aggregation = Aggregation::Sum;
        else throw Error("aggregation must be l2 or sum, got '" + value + "'");
    }
    else if (key == "force_both_probes") cfg.force_both_probes = detail::parse_bool(key, value);
    else if (key == "force_paradigm") {
        if (value.empty() || value == "none") cfg.force_paradigm.reset();
        else cfg.force_paradigm = parse_paradigm(value);
    }
    else if (key == "windows") {
        cfg.windows.clear();
        for (const auto& w : detail::split_list(value)) cfg.windows.push_back(parse_number<std::size_t>(key, w));
    }
    else if (key == "structural_dims") cfg.structural_dims = parse_number<Eigen::Index>(key, value);
    else if (key == "if_trees") cfg.if_trees = parse_number<std::size_t>(key, value);
    else if (key == "if_subsample") cfg.if_subsample = parse_number<std::size_t>(key, value);
    else if (key == "train_size") cfg.train_size = parse_number<std::size_t>(key, value);
    else if (key == "chunk_size") cfg.chunk_size = parse_number<std::size_t>(key, value);
    else if (key == "ocsvm_tol") cfg.ocsvm_tol = parse_number<double>(key, value);
    else if (key == "k") cfg.k = parse_number<std::size_t>(key, value);
    else if (key == "kmeans_n_init") cfg.kmeans_n_init = parse_number<std::size_t>(key, value);
    else if (key == "kmeans_max_iter") cfg.kmeans_max_iter = parse_number<std::size_t>(key, value);
    else if (key == "kmeans_tol") cfg.kmeans_tol = parse_number<double>(key, value);
    else if (key == "silhouette_k_max") cfg.silhouette_k_max = parse_number<std::size_t>(key, value);
    else if (key == "silhouette_cap") cfg.silhouette_cap = parse_number<std::size_t>(key, value);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "output_dir") cfg.output_dir = value;
    else if (key == "timing") cfg.timing = detail::parse_bool(key, value);
    else throw Error("unknown configuration key '" + raw_key + "'");
}

/// Flat key = value file; '#' starts a comment line.
inline std::map<std::string, std::string> read_settings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file: " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw Error(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        out[detail::normalize_key(std::string(detail::trim(body.substr(0, eq))))] =
            std::string(detail::trim(body.substr(eq + 1)));
    }
    return out;
}

/// Checks ranges the downstream modules would otherwise reject mid-run.
inline void validate(const RunConfig& cfg) {
    if (cfg.input.empty()) throw Error("no input file given");
    if (cfg.format == InputFormat::Binary && cfg.sidecar.empty())
        throw Error("binary input needs a sidecar file");
    if (cfg.positive_values.empty() && cfg.benign_values.empty())
        throw Error("label mapping needs positive or benign values");
    if (cfg.windows.empty()) throw Error("at least one rolling window is required");
    for (auto w : cfg.windows)
        if (w < 2) throw Error("rolling windows must be >= 2");
    if (cfg.structural_dims < 1) throw Error("structural dims must be >= 1");
    if (!(cfg.variance_target > 0.0 && cfg.variance_target <= 1.0))
        throw Error("variance target must lie in (0, 1]");
    if (cfg.component_budget < 1) throw Error("component budget must be >= 1");
    if (cfg.max_lag < 1) throw Error("max lag must be >= 1");
    if (cfg.k < 1) throw Error("k must be >= 1");
    if (cfg.silhouette_k_max < 2) throw Error("silhouette k max must be >= 2");
    if (cfg.train_size < 1 || cfg.chunk_size < 1) throw Error("train and chunk sizes must be >= 1");
}

}  // namespace flowprobe
