#pragma once

// The flowdiag command-line front end. Exit codes: 0 success (no events for
// detect), 1 events found (detect), 2 input or configuration error,
// 3 analysis could not fit a model.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "flowdiag/detect.hpp"
#include "flowdiag/ingest.hpp"
#include "flowdiag/pipeline.hpp"
#include "flowdiag/report.hpp"
#include "flowdiag/sim.hpp"

namespace flowdiag::cli {

inline constexpr const char* tool_version = "0.1.0";
inline constexpr const char* out_dir_env = "FLOWDIAG_OUT_DIR";

enum exit_code : int { ok = 0, events_found = 1, input_error = 2, degenerate = 3 };

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string default_out(const std::string& file) {
    const char* dir = std::getenv(out_dir_env);
    return (std::filesystem::path(dir && *dir ? dir : ".") / file).string();
}

/// "out/report.json" + ".plot.csv" -> "out/report.plot.csv"
inline std::string sibling(const std::string& path, const std::string& suffix) {
    std::filesystem::path p(path);
    return (p.parent_path() / (p.stem().string() + suffix)).string();
}

inline void ensure_parent(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

struct RunManifest {
    std::string command;
    std::string config_digest;
    std::uint64_t seed = 0;
    std::string tool_version = cli::tool_version;
    std::string timestamp;
};

inline std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

inline void write_manifest(const RunManifest& m, const std::string& path) {
    report::write_json_file({{"command", m.command},
                             {"config_digest", m.config_digest},
                             {"seed", m.seed},
                             {"tool_version", m.tool_version},
                             {"timestamp", m.timestamp}},
                            path);
}

inline std::vector<double> parse_edges(const std::string& text) {
    std::vector<double> edges;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        double v = 0;
        if (!ingest::detail::parse_number(item, v)) throw config_error("edges", "not a number: '" + item + "'");
        edges.push_back(v);
    }
    return edges;
}

struct Context {
    std::ostream& out;
    std::ostream& err;
    std::string command_line;
};

inline int cmd_simulate(const Context& ctx, const std::string& config_path, std::string out_path,
                        std::optional<std::uint64_t> seed, const std::string& unit) {
    const std::string text = read_file(config_path);
    auto config = sim::parse_sim_config(text);
    if (seed) config.seed = *seed;
    const auto rate_unit = parse_unit(unit);
    if (out_path.empty()) out_path = default_out("samples.csv");
    ensure_parent(out_path);

    const auto samples = sim::simulate(config);
    ingest::write_samples_csv(samples, out_path, rate_unit, config.label);
    report::write_json_file(report::to_json(sim::theoretical_moments(config)), sibling(out_path, ".moments.json"));
    write_manifest({ctx.command_line, "sha256:" + sha256_hex(text + "\nseed=" + std::to_string(config.seed)),
                    config.seed, tool_version, utc_now()},
                   sibling(out_path, ".manifest.json"));

    ctx.out << "simulated " << samples.size() << " samples over " << config.horizon << " s (seed "
            << config.seed << ") -> " << out_path << '\n';
    return ok;
}

struct AnalyzeArgs {
    std::string samples_path;
    std::string fixture;
    std::string edges = "auto";
    double epsilon = 0.05;
    std::size_t min_samples = 30;
    double residual_k = 1.0;
    std::string label;
    std::string out_path;
};

inline int cmd_analyze(const Context& ctx, AnalyzeArgs a) {
    if (a.samples_path.empty() == a.fixture.empty())
        throw config_error("samples", "give exactly one of --samples or --fixture");

    pipeline::AnalyzeOptions opts;
    opts.epsilon = a.epsilon;
    opts.min_samples = a.min_samples;
    opts.residual_k = a.residual_k;
    if (a.edges != "auto") opts.edges = parse_edges(a.edges);
    if (!(opts.epsilon > 0 && opts.epsilon < 1)) throw config_error("epsilon", "must lie in (0, 1)");
    if (a.out_path.empty()) a.out_path = default_out("report.json");

    pipeline::AnalysisReport rep;
    std::string digest;
    if (!a.fixture.empty()) {
        opts.label = a.label.empty() ? a.fixture : a.label;
        auto bins = ingest::load_fixture(a.fixture);
        digest = "fixture:" + a.fixture;
        rep = pipeline::analyze_bins(std::move(bins), opts, "fixture:" + a.fixture);
    } else {
        const std::string text = read_file(a.samples_path);
        std::istringstream in(text);
        auto file = ingest::read_samples_csv(in);
        opts.label = !a.label.empty()                  ? a.label
                     : !file.header.source_label.empty() ? file.header.source_label
                                                         : std::filesystem::path(a.samples_path).stem().string();
        digest = "sha256:" + sha256_hex(text);
        rep = pipeline::analyze_samples(file.samples, opts, a.samples_path);
    }

    ensure_parent(a.out_path);
    report::write_json_file(pipeline::to_json(rep), a.out_path);
    {
        const auto plot = sibling(a.out_path, ".plot.csv");
        std::ofstream out(plot, std::ios::binary);
        if (!out) throw error("cannot write '" + plot + "'");
        report::write_plot_csv(rep.bins, rep.fit, out);
    }
    write_manifest({ctx.command_line, digest, 0, tool_version, utc_now()}, sibling(a.out_path, ".manifest.json"));

    const auto& f = rep.fit;
    ctx.out << "label: " << rep.label << '\n'
            << "bins: " << rep.bins.size() << ", region: " << f.region_bins.size() << " bins, threshold N* = "
            << (std::isinf(f.threshold_n) ? std::string("unbounded") : ingest::detail::format_number(f.threshold_n))
            << '\n'
            << "mean flow performance b = " << f.slope_perf << " bps\n"
            << "alpha = " << f.alpha << ", A(" << f.epsilon << ") = " << f.quantile << '\n';
    if (rep.correlation) ctx.out << "corr(sigma(B), sqrt(N)) = " << *rep.correlation << '\n';
    for (const auto& w : rep.warnings) ctx.err << "warning: " << w << '\n';
    ctx.out << "report -> " << a.out_path << '\n';
    return ok;
}

struct DetectArgs {
    std::string samples_path;
    std::string model_path;
    std::size_t consecutive = 2;
    std::optional<double> epsilon;
    std::optional<double> max_gap;
    std::string out_path;
};

inline int cmd_detect(const Context& ctx, DetectArgs a) {
    if (a.out_path.empty()) a.out_path = default_out("events.json");
    const std::string model_text = read_file(a.model_path);
    report::json model_doc;
    try {
        model_doc = report::json::parse(model_text);
    } catch (const report::json::parse_error& e) {
        throw report::schema_error("model is not valid JSON: " + std::string(e.what()));
    }
    const auto fit = report::fit_from_json(model_doc);
    const std::string sample_text = read_file(a.samples_path);
    std::istringstream in(sample_text);
    const auto file = ingest::read_samples_csv(in);

    detect::DetectorConfig config;
    config.fit = fit;
    config.consecutive_required = a.consecutive;
    config.epsilon = a.epsilon.value_or(fit.epsilon);
    config.max_gap = a.max_gap;
    const auto events = detect::detect_anomalies(file.samples, config);
    const auto clusters = detect::cluster_summary(events);

    ensure_parent(a.out_path);
    auto doc = report::events_to_json(events, clusters);
    doc["samples"] = a.samples_path;
    doc["model"] = a.model_path;
    doc["consecutive_required"] = config.consecutive_required;
    doc["epsilon"] = config.epsilon;
    report::write_json_file(doc, a.out_path);
    {
        const auto log = sibling(a.out_path, ".log");
        std::ofstream out(log, std::ios::binary);
        if (!out) throw error("cannot write '" + log + "'");
        report::write_alert_log(events, clusters, out);
    }
    write_manifest({ctx.command_line, "sha256:" + sha256_hex(sample_text + model_text), 0, tool_version, utc_now()},
                   sibling(a.out_path, ".manifest.json"));

    ctx.out << file.samples.size() << " samples checked, " << events.size() << " anomaly events in "
            << clusters.size() << " clusters\n";
    report::write_alert_log(events, clusters, ctx.out);
    return events.empty() ? ok : events_found;
}

inline int cmd_compare(const Context& ctx, const std::vector<std::string>& model_paths, std::string out_path) {
    if (model_paths.empty()) throw config_error("models", "at least one model file is required");
    if (out_path.empty()) out_path = default_out("comparison.json");

    std::vector<std::pair<std::string, RegionFit>> fits;
    std::string all;
    for (const auto& path : model_paths) {
        const std::string text = read_file(path);
        all += text;
        report::json doc;
        try {
            doc = report::json::parse(text);
        } catch (const report::json::parse_error& e) {
            throw report::schema_error("'" + path + "' is not valid JSON");
        }
        std::string label = doc.contains("label") && doc["label"].is_string()
                                ? doc["label"].get<std::string>()
                                : std::filesystem::path(path).stem().string();
        fits.emplace_back(std::move(label), report::fit_from_json(doc));
    }
    const auto cmp = analysis::compare_networks(fits);
    ensure_parent(out_path);
    report::write_json_file(report::to_json(cmp), out_path);
    write_manifest({ctx.command_line, "sha256:" + sha256_hex(all), 0, tool_version, utc_now()},
                   sibling(out_path, ".manifest.json"));

    std::size_t rank = 1;
    for (const auto& label : cmp.ranking) {
        const auto& e = *std::find_if(cmp.entries.begin(), cmp.entries.end(),
                                      [&](const auto& x) { return x.label == label; });
        ctx.out << rank++ << ". " << e.label << "  b = " << e.mean_flow_perf << " bps"
                << (e.streaming_capable ? "  [streaming capable]" : "") << '\n';
    }
    return ok;
}

/// Entry point shared by the executable and the tests. args[0] is the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"flowdiag - flow-level link diagnostics"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version);

    std::string config_path, sim_out, sim_unit = "bps";
    std::optional<std::uint64_t> seed;
    auto* simulate = app.add_subcommand("simulate", "Simulate shot-noise traffic and write a sample CSV");
    simulate->add_option("--config", config_path, "Simulation config file (key = value)")->required();
    simulate->add_option("--out", sim_out, "Sample CSV path (default $FLOWDIAG_OUT_DIR/samples.csv)");
    simulate->add_option("--seed", seed, "Override the configured seed");
    simulate->add_option("--unit", sim_unit, "Rate unit of the CSV: bps or Mbps");

    AnalyzeArgs aa;
    auto* analyze = app.add_subcommand("analyze", "Fit the operational region and confidence envelope");
    analyze->add_option("--samples", aa.samples_path, "Sample CSV file");
    analyze->add_option("--fixture", aa.fixture, "Built-in bin table: dataset1 or dataset2");
    analyze->add_option("--edges", aa.edges, "Comma-separated bin edges over N, or 'auto'");
    analyze->add_option("--epsilon", aa.epsilon, "Envelope level epsilon (two-sided)");
    analyze->add_option("--min-samples", aa.min_samples, "Minimum samples per bin");
    analyze->add_option("--k", aa.residual_k, "Region residual tolerance in sigma(B)");
    analyze->add_option("--label", aa.label, "Network label used in reports");
    analyze->add_option("--out", aa.out_path, "Report JSON path (default $FLOWDIAG_OUT_DIR/report.json)");

    DetectArgs da;
    auto* detect = app.add_subcommand("detect", "Detect anomalies against a fitted envelope");
    detect->add_option("--samples", da.samples_path, "Sample CSV file")->required();
    detect->add_option("--model", da.model_path, "Analysis report or fit JSON")->required();
    detect->add_option("--consecutive", da.consecutive, "Consecutive deviations required");
    detect->add_option("--epsilon", da.epsilon, "Override the model's epsilon");
    detect->add_option("--max-gap", da.max_gap, "Largest timestamp step within a run (s)");
    detect->add_option("--out", da.out_path, "Events JSON path (default $FLOWDIAG_OUT_DIR/events.json)");

    std::vector<std::string> models;
    std::string cmp_out;
    auto* compare = app.add_subcommand("compare", "Rank networks by mean flow performance");
    compare->add_option("models", models, "Analysis report or fit JSON files")->required();
    compare->add_option("--out", cmp_out, "Comparison JSON path (default $FLOWDIAG_OUT_DIR/comparison.json)");

    std::vector<std::string> owned(args);
    if (owned.empty()) owned.emplace_back("flowdiag");
    std::vector<char*> argv;
    for (auto& a : owned) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : input_error;
    }

    std::string command_line;
    for (const auto& a : owned) command_line += (command_line.empty() ? "" : " ") + a;
    const Context ctx{out, err, command_line};
    try {
        if (*simulate) return cmd_simulate(ctx, config_path, sim_out, seed, sim_unit);
        if (*analyze) return cmd_analyze(ctx, aa);
        if (*detect) return cmd_detect(ctx, da);
        if (*compare) return cmd_compare(ctx, models, cmp_out);
    } catch (const degenerate_error& e) {
        err << "error: " << e.what() << '\n';
        return degenerate;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return input_error;
    }
    return input_error;
}

}  // namespace flowdiag::cli
