// flowprobe: pick a temporal or structural representation for a traffic
// dataset, then benchmark unsupervised detectors in both feature spaces.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "flowprobe/config.hpp"
#include "flowprobe/eval.hpp"
#include "flowprobe/features.hpp"
#include "flowprobe/ingest.hpp"
#include "flowprobe/pipeline.hpp"
#include "flowprobe/synth.hpp"

namespace {

using Overrides = std::map<std::string, std::string>;

void add_run_options(CLI::App& cmd, Overrides& ov, std::string& config_path) {
    auto opt = [&](const std::string& flag, const std::string& help) {
        const std::string key = flag.substr(2);
        cmd.add_option_function<std::string>(flag, [&ov, key](const std::string& v) { ov[key] = v; }, help);
    };
    cmd.add_option_function<std::string>("input", [&ov](const std::string& v) { ov["input"] = v; },
                                         "dataset file (CSV or raw float32)")
        ->required();
    cmd.add_option("--config", config_path, "key = value config file; flags override it");
    opt("--format", "csv (default) or binary");
    opt("--sidecar", "key-value sidecar for binary input");
    opt("--label-column", "label column name (CSV)");
    opt("--positive-values", "comma-separated label values counted as attack");
    opt("--benign-values", "comma-separated benign label values; everything else is attack");
    opt("--seed", "random seed");
    opt("--acf-threshold", "lag-1 ACF at or above this selects the temporal paradigm");
    opt("--variance-target", "cumulative explained variance target");
    opt("--component-budget", "number of components for the variance probe");
    opt("--max-lag", "largest lag in the reported ACF curve");
    opt("--aggregation", "per-sample aggregation for the ACF probe: l2 or sum");
    opt("--windows", "comma-separated rolling window sizes");
    opt("--structural-dims", "PCA components in the structural space");
    opt("--train-size", "OCSVM cold-start training rows");
    opt("--chunk-size", "OCSVM prediction chunk size");
    opt("--k", "KMeans cluster count");
    opt("--force-paradigm", "override the probe decision: temporal, structural or hybrid");
    opt("--output-dir", "output directory (default $FLOWPROBE_OUTPUT_DIR or ./flowprobe-out)");
    cmd.add_flag_callback("--force-both-probes", [&ov] { ov["force_both_probes"] = "true"; },
                          "evaluate the variance probe even on the temporal path");
    cmd.add_flag_callback("--no-timing", [&ov] { ov["timing"] = "false"; },
                          "write NA instead of wall-clock times (byte-stable reports)");
}

flowprobe::RunConfig build_config(const Overrides& ov, const std::string& config_path) {
    flowprobe::RunConfig cfg;
    cfg.output_dir = flowprobe::default_output_dir();
    if (!config_path.empty()) {
        for (const auto& [k, v] : flowprobe::read_settings(config_path)) flowprobe::apply_setting(cfg, k, v);
    }
    for (const auto& [k, v] : ov) flowprobe::apply_setting(cfg, k, v);
    return cfg;
}

std::vector<int> read_binary_column(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw flowprobe::Error("cannot open " + path);
    std::vector<int> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        const auto body = flowprobe::detail::trim(line);
        if (body.empty()) continue;
        const auto field = flowprobe::detail::trim(body.substr(0, body.find(',')));
        if (field == "0" || field == "1") {
            out.push_back(field == "1" ? 1 : 0);
        } else if (!first) {
            throw flowprobe::Error(path + ": expected 0 or 1, got '" + std::string(field) + "'");
        }
        first = false;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probe-driven temporal vs structural DDoS detection benchmark"};
    app.require_subcommand(1);

    Overrides probe_ov, run_ov, feat_ov;
    std::string probe_cfg, run_cfg, feat_cfg;

    auto* probe = app.add_subcommand("probe", "compute the ACF and PCA variance probes and the decision");
    add_run_options(*probe, probe_ov, probe_cfg);
    auto* run = app.add_subcommand("run", "full pipeline: probes, both feature spaces, detector grid, report");
    add_run_options(*run, run_ov, run_cfg);
    auto* feat = app.add_subcommand("features", "dump the temporal and structural feature matrices as CSV");
    add_run_options(*feat, feat_ov, feat_cfg);

    auto* synth = app.add_subcommand("synth", "write a synthetic labelled dataset as CSV");
    flowprobe::SynthSpec spec;
    std::string kind = "two_clusters";
    std::string synth_out;
    bool equal_strengths = false;
    long long synth_n = static_cast<long long>(spec.n);
    long long synth_p = static_cast<long long>(spec.p);
    synth->add_option("--kind", kind, "ar1, lowrank, two_clusters or white_noise")->capture_default_str();
    synth->add_option("--n", synth_n, "samples")->capture_default_str();
    synth->add_option("--p", synth_p, "features")->capture_default_str();
    synth->add_option("--phi", spec.phi, "AR(1) coefficient")->capture_default_str();
    synth->add_option("--rank", spec.rank, "low-rank factor count")->capture_default_str();
    synth->add_option("--noise-std", spec.noise_std, "low-rank additive noise")->capture_default_str();
    synth->add_flag("--equal-strengths", equal_strengths, "equal factor strengths (low-rank)");
    synth->add_option("--separation", spec.separation, "cluster separation")->capture_default_str();
    synth->add_option("--attack-ratio", spec.attack_ratio, "attack fraction")->capture_default_str();
    synth->add_option("--seed", spec.seed, "random seed")->capture_default_str();
    synth->add_option("-o,--output", synth_out, "output CSV path")->required();

    auto* eval = app.add_subcommand("eval", "precision / recall / F1 from prediction and label files");
    std::string pred_path, label_path;
    eval->add_option("--predictions", pred_path, "file with one 0/1 prediction per line")->required();
    eval->add_option("--labels", label_path, "file with one 0/1 label per line")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*probe) {
            const auto cfg = build_config(probe_ov, probe_cfg);
            const auto bundle = flowprobe::cmd_probe(cfg);
            flowprobe::write_bundle(bundle, cfg.output_dir);
            std::cout << bundle.at("decision.txt");
            if (bundle.at("decision.txt").find("hybrid_unvalidated = true") != std::string::npos)
                std::cerr << "warning: " << flowprobe::kHybridNote << " selected\n";
        } else if (*run) {
            const auto cfg = build_config(run_ov, run_cfg);
            const auto result = flowprobe::run_pipeline(cfg);
            flowprobe::write_bundle(result.bundle, cfg.output_dir);
            std::cout << result.bundle.at("decision.txt") << '\n'
                      << result.bundle.at("report.csv") << '\n'
                      << result.bundle.at("gap.csv");
        } else if (*feat) {
            const auto cfg = build_config(feat_ov, feat_cfg);
            flowprobe::validate(cfg);
            auto prepared = flowprobe::prepare(flowprobe::load_input(cfg));
            auto fitted = flowprobe::fit_structural_pca(prepared.standardized, cfg.structural_dims);
            const auto structural = flowprobe::structural_features(prepared.standardized, fitted);
            const auto temporal = flowprobe::temporal_features(prepared.standardized, fitted.model, cfg.windows);
            std::filesystem::create_directories(cfg.output_dir);
            flowprobe::write_csv(cfg.output_dir / "temporal.csv", temporal.matrix, temporal.feature_names,
                                 &prepared.dataset.labels);
            flowprobe::write_csv(cfg.output_dir / "structural.csv", structural.matrix,
                                 structural.feature_names, &prepared.dataset.labels);
            if (fitted.clamped)
                std::cerr << "note: structural dims clamped to " << fitted.model.components() << '\n';
            std::cout << "wrote " << (cfg.output_dir / "temporal.csv").string() << " ("
                      << temporal.matrix.cols() << " features) and "
                      << (cfg.output_dir / "structural.csv").string() << " (" << structural.matrix.cols()
                      << " features)\n";
        } else if (*synth) {
            if (synth_n <= 0 || synth_p <= 0) throw flowprobe::Error("synth needs --n > 0 and --p > 0");
            spec.n = static_cast<std::size_t>(synth_n);
            spec.p = static_cast<std::size_t>(synth_p);
            spec.kind = flowprobe::parse_synth_kind(kind);
            spec.strengths = equal_strengths ? flowprobe::Strengths::Equal : flowprobe::Strengths::Descending;
            const auto ds = flowprobe::generate(spec);
            flowprobe::write_csv(synth_out, ds.matrix, ds.column_names, &ds.labels);
            std::ofstream side(synth_out + ".spec");
            side << "kind = " << flowprobe::to_string(spec.kind) << "\n"
                 << "n = " << spec.n << "\np = " << spec.p << "\nphi = " << spec.phi
                 << "\nrank = " << spec.rank << "\nnoise_std = " << spec.noise_std
                 << "\nstrengths = " << (equal_strengths ? "equal" : "descending")
                 << "\nseparation = " << spec.separation << "\nattack_ratio = " << spec.attack_ratio
                 << "\nseed = " << spec.seed << "\nlabel_column = label\npositive_values = 1\n";
            if (!side) throw flowprobe::Error("cannot write " + synth_out + ".spec");
            std::cout << "wrote " << synth_out << " (" << spec.n << " x " << spec.p << ")\n";
        } else if (*eval) {
            const auto pred = read_binary_column(pred_path);
            const auto lab = read_binary_column(label_path);
            const auto m = flowprobe::confusion_metrics(pred, lab);
            std::printf("precision = %.6f\nrecall = %.6f\nf1 = %.6f\ntp = %zu\nfp = %zu\nfn = %zu\ntn = %zu\n",
                        m.precision, m.recall, m.f1, m.tp, m.fp, m.fn, m.tn);
        }
    } catch (const std::exception& e) {
        std::cerr << "flowprobe: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
