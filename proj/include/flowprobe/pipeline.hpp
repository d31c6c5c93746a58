#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flowprobe/common.hpp"
#include "flowprobe/config.hpp"
#include "flowprobe/detect.hpp"
#include "flowprobe/eval.hpp"
#include "flowprobe/features.hpp"
#include "flowprobe/ingest.hpp"
#include "flowprobe/probes.hpp"

namespace flowprobe {

class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// Relative path -> file contents. Everything is rendered in memory first so
/// a failing stage never leaves a partial bundle behind.
using Bundle = std::map<std::string, std::string>;

inline constexpr const char* kHybridNote = "hybrid (unvalidated fallback)";

namespace detail {

template <typename F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

inline std::string fixed(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

inline std::string general(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline std::string join_curve(const std::vector<double>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += general(v[i]);
    }
    return out + "]";
}

}  // namespace detail

inline LabeledDataset load_input(const RunConfig& cfg) {
    if (cfg.format == InputFormat::Binary) return load_binary(cfg.input, cfg.sidecar);
    return load_csv(cfg.input, cfg.label_column, LabelRule{cfg.positive_values, cfg.benign_values});
}

struct Prepared {
    LabeledDataset dataset;  // cleaned
    StandardizationParams params;
    Matrix standardized;
};

inline Prepared prepare(LabeledDataset raw) {
    Prepared p;
    p.dataset = clean(std::move(raw));
    p.params = fit_standardizer(p.dataset.matrix);
    p.standardized = apply_standardizer(p.dataset.matrix, p.params);
    return p;
}

struct ProbeOutcome {
    ParadigmDecision decision;        // what the probes say
    Paradigm chosen = Paradigm::Hybrid;  // after any override
    bool forced = false;
    std::optional<VarianceProbeResult> variance;  // reported evidence, also when forced
    std::optional<PcaModel> spectrum_model;       // the PCA behind the variance probe
};

/// Runs the two probes. The variance probe (and its PCA) is skipped on the
/// temporal path unless force_both_probes is set.
inline ProbeOutcome run_probes(const Matrix& standardized, const RunConfig& cfg) {
    ProbeOutcome out;
    const auto signal = aggregate_signal(standardized, cfg.aggregation);
    const std::size_t max_lag = std::min(cfg.max_lag, signal.size() - 1);
    const auto acf_result = acf_probe(signal, cfg.acf_threshold, max_lag);

    auto variance = [&]() {
        if (!out.variance) {
            out.spectrum_model = fit_structural_pca(standardized, cfg.structural_dims).model;
            out.variance = variance_probe(*out.spectrum_model, cfg.component_budget, cfg.variance_target);
        }
        return *out.variance;
    };
    out.decision = decide_paradigm(acf_result, variance);
    if (cfg.force_both_probes) variance();
    out.chosen = cfg.force_paradigm.value_or(out.decision.branch);
    out.forced = cfg.force_paradigm.has_value();
    return out;
}

inline std::string render_decision(const LabeledDataset& ds, const ProbeOutcome& probe,
                                   const RunConfig& cfg) {
    using detail::general;
    const auto& acf = probe.decision.acf_evidence;
    std::ostringstream os;
    os << "dataset = " << ds.name << '\n'
       << "samples = " << ds.rows() << '\n'
       << "features = " << ds.cols() << '\n'
       << "aggregation = " << (cfg.aggregation == Aggregation::L2Norm ? "l2" : "sum") << '\n'
       << "lag1_acf = " << general(acf.lag1) << '\n'
       << "acf_threshold = " << general(acf.threshold) << '\n'
       << "acf_verdict = " << (acf.verdict ? "true" : "false") << '\n'
       << "acf_max_lag = " << acf.acf.size() - 1 << '\n'
       << "acf_curve = " << detail::join_curve(acf.acf) << '\n'
       << "component_budget = " << cfg.component_budget << '\n'
       << "variance_target = " << general(cfg.variance_target) << '\n';
    if (probe.variance) {
        os << "variance_evaluated = true\n"
           << "cumulative_at_k = " << general(probe.variance->cumulative_at_k) << '\n'
           << "variance_verdict = " << (probe.variance->verdict ? "true" : "false") << '\n'
           << "cumulative_variance_curve = "
           << detail::join_curve(cumulative_variance_curve(*probe.spectrum_model)) << '\n';
    } else {
        os << "variance_evaluated = false\n";
    }
    os << "probe_decision = " << to_string(probe.decision.branch) << '\n'
       << "decision = " << to_string(probe.chosen) << '\n'
       << "decision_source = " << (probe.forced ? "forced" : "probes") << '\n'
       << "hybrid_unvalidated = " << (probe.chosen == Paradigm::Hybrid ? "true" : "false") << '\n';
    if (probe.chosen == Paradigm::Hybrid) {
        os << "warning = " << kHybridNote
           << (probe.forced ? ": selected by override" : ": neither probe fired")
           << "; running both feature spaces\n";
    }
    return os.str();
}

inline void add_probe_plots(Bundle& bundle, const ProbeOutcome& probe) {
    std::string acf = "lag,acf\n";
    const auto& curve = probe.decision.acf_evidence.acf;
    for (std::size_t k = 0; k < curve.size(); ++k) acf += std::to_string(k) + "," + detail::general(curve[k]) + "\n";
    bundle["plots/acf.csv"] = acf;
    if (probe.spectrum_model) {
        std::string cv = "component,ratio,cumulative\n";
        const auto cumulative = cumulative_variance_curve(*probe.spectrum_model);
        const auto& ratios = probe.spectrum_model->spectrum_ratio;
        for (std::size_t j = 0; j < ratios.size(); ++j)
            cv += std::to_string(j + 1) + "," + detail::general(ratios[j]) + "," + detail::general(cumulative[j]) + "\n";
        bundle["plots/cumulative_variance.csv"] = cv;
    }
}

/// Probe-only run: decision document plus the probe curves.
inline Bundle cmd_probe(const RunConfig& cfg) {
    validate(cfg);
    auto prepared = detail::stage("preprocess", [&] { return prepare(load_input(cfg)); });
    auto probe = detail::stage("probe", [&] { return run_probes(prepared.standardized, cfg); });
    Bundle bundle;
    bundle["decision.txt"] = render_decision(prepared.dataset, probe, cfg);
    add_probe_plots(bundle, probe);
    return bundle;
}

struct MethodRun {
    EvalMetrics metrics;
    DetectionResult detection;
};

struct RunResult {
    LabeledDataset dataset;
    ProbeOutcome probe;
    FeatureMatrix temporal;
    FeatureMatrix structural;
    ContaminationEstimate contamination;
    std::vector<MethodRun> methods;  // grid order: KMeans-Str, OCSVM-Temp, IF-Temp, IF-Str
    std::vector<SilhouettePoint> silhouette_curve;
    ParadigmGap gap;
    Bundle bundle;
};

inline bool recommended(Paradigm method, Paradigm chosen) {
    return chosen == Paradigm::Hybrid || method == chosen;
}

inline std::string render_report(const RunResult& r, const RunConfig& cfg) {
    std::vector<const MethodRun*> rows;
    for (const auto& m : r.methods) rows.push_back(&m);
    std::stable_sort(rows.begin(), rows.end(),
                     [](const MethodRun* a, const MethodRun* b) { return a->metrics.f1 > b->metrics.f1; });
    std::string out = "dataset,method,paradigm,precision,recall,f1,silhouette,time,recommended\n";
    for (const auto* row : rows) {
        const auto& m = row->metrics;
        out += r.dataset.name + "," + m.method + "," + to_string(m.paradigm) + "," +
               detail::fixed(m.precision, 6) + "," + detail::fixed(m.recall, 6) + "," +
               detail::fixed(m.f1, 6) + "," + (m.silhouette ? detail::fixed(*m.silhouette, 6) : "") +
               "," + (cfg.timing ? detail::fixed(m.total_time(), 2) : "NA") + "," +
               (recommended(m.paradigm, r.probe.chosen) ? "1" : "0") + "\n";
    }
    return out;
}

inline std::string render_gap(const ParadigmGap& gap) {
    std::string out = "metric,delta,best_temporal,best_temporal_value,best_structural,best_structural_value\n";
    auto line = [&](const char* name, const MetricGap& g) {
        out += std::string(name) + "," + detail::fixed(g.delta, 6) + "," + g.best_temporal + "," +
               detail::fixed(g.best_temporal_value, 6) + "," + g.best_structural + "," +
               detail::fixed(g.best_structural_value, 6) + "\n";
    };
    line("precision", gap.precision);
    line("recall", gap.recall);
    line("f1", gap.f1);
    return out;
}

/// Full pipeline: preprocess, probe, build both feature spaces, run the
/// four-method grid, evaluate and render the output bundle.
inline RunResult run_pipeline(const RunConfig& cfg) {
    validate(cfg);
    RunResult r;
    auto prepared = detail::stage("preprocess", [&] { return prepare(load_input(cfg)); });
    r.dataset = prepared.dataset;
    const Matrix& x = prepared.standardized;
    const auto& labels = r.dataset.labels;

    r.probe = detail::stage("probe", [&] { return run_probes(x, cfg); });

    StructuralPca pca = detail::stage("features", [&] {
        auto fitted = fit_structural_pca(x, cfg.structural_dims);
        r.structural = structural_features(x, fitted);
        r.temporal = temporal_features(x, fitted.model, cfg.windows);
        return fitted;
    });

    detail::stage("detect", [&] {
        r.contamination = compute_contamination(labels);
        const double c = r.contamination.clamped;

        {  // KMeans in the structural space
            KMeansParams kp{cfg.k, cfg.kmeans_n_init, cfg.kmeans_max_iter, cfg.kmeans_tol, cfg.seed};
            Stopwatch fit_timer;
            const auto model = kmeans_fit(r.structural.matrix, kp);
            const double fit_time = fit_timer.seconds();
            auto det = kmeans_detect(model, r.structural.matrix, std::span<const int>(labels));
            MethodRun run;
            run.metrics = confusion_metrics(det.predictions, labels);
            run.metrics.method = "KMeans-Str";
            run.metrics.paradigm = Paradigm::Structural;
            if (cfg.k >= 2) {
                try {
                    run.metrics.silhouette =
                        silhouette(r.structural.matrix, det.assignments, cfg.silhouette_cap, cfg.seed);
                } catch (const Error&) {
                    // a degenerate partition (single occupied cluster) has no silhouette
                }
            }
            det.fit_time = fit_time;
            run.detection = std::move(det);
            r.methods.push_back(std::move(run));
        }
        {  // OCSVM in the temporal space, cold-start slice
            OcsvmParams op;
            op.train_size = cfg.train_size;
            op.nu = std::min(c, 0.3);
            op.tol = cfg.ocsvm_tol;
            Stopwatch fit_timer;
            const auto model = ocsvm_fit(r.temporal.matrix, op);
            const double fit_time = fit_timer.seconds();
            auto det = ocsvm_predict(model, r.temporal.matrix, cfg.chunk_size);
            det.fit_time = fit_time;
            MethodRun run;
            run.metrics = confusion_metrics(det.predictions, labels);
            run.metrics.method = "OCSVM-Temp";
            run.metrics.paradigm = Paradigm::Temporal;
            run.detection = std::move(det);
            r.methods.push_back(std::move(run));
        }
        auto isolation = [&](const FeatureMatrix& fm, const char* name, Paradigm paradigm) {
            IsolationForestParams ip{cfg.if_trees, cfg.if_subsample, cfg.seed};
            Stopwatch fit_timer;
            const auto model = if_fit(fm.matrix, ip);
            DetectionResult det;
            det.fit_time = fit_timer.seconds();
            Stopwatch predict_timer;
            det.scores = if_score(model, fm.matrix);
            det.predictions = if_predict(det.scores, c);
            det.predict_time = predict_timer.seconds();
            MethodRun run;
            run.metrics = confusion_metrics(det.predictions, labels);
            run.metrics.method = name;
            run.metrics.paradigm = paradigm;
            run.detection = std::move(det);
            r.methods.push_back(std::move(run));
        };
        isolation(r.temporal, "IF-Temp", Paradigm::Temporal);
        isolation(r.structural, "IF-Str", Paradigm::Structural);
        for (auto& m : r.methods) {
            m.metrics.fit_time = m.detection.fit_time;
            m.metrics.predict_time = m.detection.predict_time;
        }
        return 0;
    });

    detail::stage("evaluate", [&] {
        std::vector<EvalMetrics> temporal, structural;
        for (const auto& m : r.methods)
            (m.metrics.paradigm == Paradigm::Temporal ? temporal : structural).push_back(m.metrics);
        r.gap = paradigm_gap(temporal, structural);
        const std::size_t k_max =
            std::min(cfg.silhouette_k_max, static_cast<std::size_t>(r.structural.matrix.rows()));
        if (k_max >= 2) {
            KMeansParams kp{2, cfg.kmeans_n_init, cfg.kmeans_max_iter, cfg.kmeans_tol, cfg.seed};
            r.silhouette_curve = silhouette_sweep(r.structural.matrix, 2, k_max, kp, cfg.silhouette_cap);
        }
        return 0;
    });

    // rendering
    Bundle& b = r.bundle;
    b["decision.txt"] = render_decision(r.dataset, r.probe, cfg);
    b["report.csv"] = render_report(r, cfg);
    b["gap.csv"] = render_gap(r.gap);
    if (!r.probe.spectrum_model) r.probe.spectrum_model = pca.model;
    add_probe_plots(b, r.probe);

    std::string sil = "k,silhouette\n";
    for (const auto& pt : r.silhouette_curve) sil += std::to_string(pt.k) + "," + detail::fixed(pt.score, 6) + "\n";
    b["plots/silhouette.csv"] = sil;

    std::string bars = "method,paradigm,metric,value\n";
    for (const auto& m : r.methods) {
        for (auto [name, v] : {std::pair{"precision", m.metrics.precision}, std::pair{"recall", m.metrics.recall},
                               std::pair{"f1", m.metrics.f1}})
            bars += m.metrics.method + "," + to_string(m.metrics.paradigm) + "," + name + "," + detail::fixed(v, 6) + "\n";
    }
    b["plots/metrics.csv"] = bars;

    std::string gap_plot = "metric,delta\n";
    for (auto [name, g] : {std::pair{"precision", &r.gap.precision}, std::pair{"recall", &r.gap.recall},
                           std::pair{"f1", &r.gap.f1}})
        gap_plot += std::string(name) + "," + detail::fixed(g->delta, 6) + "\n";
    b["plots/gap.csv"] = gap_plot;

    std::string scatter = "index,pc1,pc2,label\n";
    const Matrix& s = r.structural.matrix;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        scatter += std::to_string(i) + "," + detail::general(s(i, 0)) + "," +
                   detail::general(s.cols() > 1 ? s(i, 1) : 0.0) + "," +
                   std::to_string(labels[static_cast<std::size_t>(i)]) + "\n";
    }
    b["plots/pca2.csv"] = scatter;
    return r;
}

/// Writes every file of the bundle under dir; on failure removes what was
/// already written.
inline void write_bundle(const Bundle& bundle, const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> written;
    try {
        for (const auto& [rel, content] : bundle) {
            const auto path = dir / rel;
            std::filesystem::create_directories(path.parent_path());
            std::ofstream out(path, std::ios::binary);
            if (!out) throw Error("cannot write " + path.string());
            written.push_back(path);
            out << content;
            if (!out) throw Error("write failed: " + path.string());
        }
    } catch (...) {
        std::error_code ec;
        for (const auto& p : written) std::filesystem::remove(p, ec);
        throw;
    }
}

}  // namespace flowprobe
