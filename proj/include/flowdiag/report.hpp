#pragma once

// JSON and CSV artifacts written by the command-line tool.

#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowdiag/analysis.hpp"
#include "flowdiag/detect.hpp"
#include "flowdiag/ingest.hpp"
#include "flowdiag/model.hpp"
#include "flowdiag/sim.hpp"

namespace flowdiag::report {

using json = nlohmann::json;

/// Model or report JSON that does not have the expected shape.
class schema_error : public error {
public:
    using error::error;
};

// JSON has no infinity; unbounded values travel as null.
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const BinStats& b) {
    json j = {{"bin_index", b.bin_index},     {"n_lo", b.n_lo},
              {"n_hi", finite_or_null(b.n_hi)}, {"mean_n", b.mean_n},
              {"sample_count", b.sample_count}, {"enough_data", b.enough_data}};
    if (b.enough_data) {
        j["mean_rate"] = b.mean_rate;
        j["sigma_rate"] = b.sigma_rate;
        j["mean_perf"] = b.mean_perf;
        j["sigma_perf"] = b.sigma_perf;
    } else {
        j["mean_rate"] = j["sigma_rate"] = j["mean_perf"] = j["sigma_perf"] = nullptr;
    }
    return j;
}

inline json to_json(const RegionFit& f) {
    return {{"slope_perf", f.slope_perf}, {"threshold_n", finite_or_null(f.threshold_n)},
            {"alpha", f.alpha},           {"epsilon", f.epsilon},
            {"quantile", f.quantile},     {"residual_k", f.residual_k},
            {"region_bins", f.region_bins}};
}

/// Accepts either a bare fit object or a document carrying one under "fit".
inline RegionFit fit_from_json(const json& doc) {
    const json& j = doc.contains("fit") ? doc.at("fit") : doc;
    if (!j.is_object()) throw schema_error("model: expected a JSON object");
    auto number = [&](const char* key) {
        if (!j.contains(key) || !j.at(key).is_number())
            throw schema_error(std::string("model: missing numeric field '") + key + "'");
        return j.at(key).get<double>();
    };
    RegionFit f;
    f.slope_perf = number("slope_perf");
    f.alpha = number("alpha");
    if (!j.contains("threshold_n")) throw schema_error("model: missing field 'threshold_n'");
    f.threshold_n = j.at("threshold_n").is_null() ? unbounded : number("threshold_n");
    if (j.contains("epsilon")) f.epsilon = number("epsilon");
    f.quantile = stats::normal_quantile(f.epsilon);
    if (j.contains("residual_k")) f.residual_k = number("residual_k");
    if (j.contains("region_bins")) {
        if (!j.at("region_bins").is_array()) throw schema_error("model: 'region_bins' must be an array");
        for (const auto& v : j.at("region_bins")) {
            if (!v.is_number_unsigned()) throw schema_error("model: 'region_bins' must hold bin indices");
            f.region_bins.push_back(v.get<std::size_t>());
        }
    }
    if (!(f.slope_perf > 0)) throw schema_error("model: slope_perf must be positive");
    if (!(f.alpha >= 0)) throw schema_error("model: alpha must be >= 0");
    return f;
}

inline json to_json(const analysis::ChiSquareResult& r) {
    if (!r.performed) return {{"performed", false}, {"note", "not enough data"}};
    json cells = json::array();
    for (const auto& c : r.cells) cells.push_back({{"observed", c.observed}, {"expected", c.expected}});
    return {{"performed", true},    {"statistic", r.statistic}, {"critical", r.critical},
            {"dof", r.dof},         {"passed", r.passed},       {"histogram_bins", r.histogram_bins},
            {"cells", cells}};
}

inline json to_json(const sim::MomentReport& m) {
    return {{"mean_rate", finite_or_null(m.mean_rate)},
            {"var_rate", finite_or_null(m.var_rate)},
            {"mean_flows", finite_or_null(m.mean_flows)},
            {"mean_size", finite_or_null(m.mean_size)},
            {"mean_duration", finite_or_null(m.mean_duration)},
            {"mean_sq_size_over_dur", finite_or_null(m.mean_sq_size_over_dur)},
            {"mean_flow_perf", finite_or_null(m.mean_flow_perf)}};
}

inline json to_json(const TrafficSample& s) {
    return {{"timestamp", s.timestamp}, {"active_flows", s.active_flows}, {"total_rate", s.total_rate}};
}

inline json to_json(const analysis::ComparisonReport& r) {
    json entries = json::array();
    for (const auto& e : r.entries)
        entries.push_back({{"label", e.label},
                           {"mean_flow_perf", e.mean_flow_perf},
                           {"streaming_capable", e.streaming_capable}});
    return {{"entries", entries},
            {"ranking", r.ranking},
            {"streaming_threshold", analysis::streaming_threshold}};
}

/// Events with their cluster ids plus the cluster table.
inline json events_to_json(std::span<const AnomalyEvent> events, std::span<const detect::Cluster> clusters) {
    std::vector<std::size_t> cluster_of(events.size(), 0);
    for (const auto& c : clusters)
        for (auto i : c.events) cluster_of[i] = c.id;

    json ev = json::array();
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        json samples = json::array();
        for (const auto& s : e.samples) samples.push_back(to_json(s));
        ev.push_back({{"start_time", e.start_time},
                      {"end_time", e.end_time},
                      {"first_index", e.first_index},
                      {"direction", to_string(e.direction)},
                      {"cluster", cluster_of[i]},
                      {"samples", samples}});
    }
    json cl = json::array();
    for (const auto& c : clusters)
        cl.push_back({{"id", c.id},
                      {"direction", to_string(c.direction)},
                      {"events", c.events},
                      {"sample_count", c.sample_count},
                      {"mean_n", c.mean_n},
                      {"mean_rate", c.mean_rate},
                      {"n_min", c.n_min},
                      {"n_max", c.n_max},
                      {"start_time", c.start_time},
                      {"end_time", c.end_time}});
    return {{"event_count", events.size()}, {"events", ev}, {"clusters", cl}};
}

/// One line per event, e.g.
/// `ALERT start=1800 end=2400 direction=below samples=2 mean_n=30120 mean_rate_bps=9.1e+07 cluster=1`.
inline void write_alert_log(std::span<const AnomalyEvent> events, std::span<const detect::Cluster> clusters,
                            std::ostream& out) {
    std::vector<std::size_t> cluster_of(events.size(), 0);
    for (const auto& c : clusters)
        for (auto i : c.events) cluster_of[i] = c.id;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        double sn = 0, sb = 0;
        for (const auto& s : e.samples) {
            sn += static_cast<double>(s.active_flows);
            sb += s.total_rate;
        }
        const auto k = static_cast<double>(e.samples.size());
        out << "ALERT start=" << ingest::detail::format_number(e.start_time)
            << " end=" << ingest::detail::format_number(e.end_time) << " direction=" << to_string(e.direction)
            << " samples=" << e.samples.size() << " mean_n=" << ingest::detail::format_number(sn / k)
            << " mean_rate_bps=" << ingest::detail::format_number(sb / k) << " cluster=" << cluster_of[i]
            << '\n';
    }
}

/// Plot data: one row per bin with the fitted line and envelope at the bin mean.
/// Rates in bits/second; in_region and enough_data are 0/1.
inline void write_plot_csv(std::span<const BinStats> bins, const RegionFit& fit, std::ostream& out) {
    using ingest::detail::format_number;
    out << "bin_index,n_lo,n_hi,mean_n,mean_rate,sigma_rate,fit_rate,lower,upper,in_region,enough_data\n";
    for (const auto& b : bins) {
        const auto [lo, hi] = analysis::confidence_interval(fit, b.mean_n);
        const bool in_region =
            std::find(fit.region_bins.begin(), fit.region_bins.end(), b.bin_index) != fit.region_bins.end();
        out << b.bin_index << ',' << format_number(b.n_lo) << ','
            << (std::isinf(b.n_hi) ? std::string("inf") : format_number(b.n_hi)) << ','
            << format_number(b.mean_n) << ',';
        if (b.enough_data) out << format_number(b.mean_rate) << ',' << format_number(b.sigma_rate) << ',';
        else out << ",,";
        out << format_number(fit.slope_perf * b.mean_n) << ',' << format_number(lo) << ',' << format_number(hi)
            << ',' << in_region << ',' << b.enough_data << '\n';
    }
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw schema_error("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
    if (!out) throw error("I/O error writing '" + path + "'");
}

}  // namespace flowdiag::report
