#pragma once

// Whole-dataset analysis: binning, region fit, envelope, validation statistics.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowdiag/analysis.hpp"
#include "flowdiag/report.hpp"

namespace flowdiag::pipeline {

struct AnalyzeOptions {
    std::optional<std::vector<double>> edges;  // unset: automatic decile edges
    double epsilon = 0.05;
    std::size_t min_samples = 30;
    double residual_k = 1.0;
    double chi_square_level = 0.95;
    std::string label = "network";
};

/// alpha under the different choices of b a bare bin table leaves open.
struct AlphaVariants {
    double fitted_slope = 0;       // all usable bins, fitted slope (the model's alpha)
    double fitted_slope_region = 0;  // region bins only, fitted slope
    double mean_bin_perf = 0;      // all usable bins, b = mean of the per-bin b
    double first_bin_perf = 0;     // all usable bins, b = per-bin b of the lowest bin
};

struct AnalysisReport {
    std::string label;
    std::string source;
    AnalyzeOptions options;
    std::vector<BinStats> bins;
    std::size_t sample_count = 0;
    std::size_t out_of_range = 0;
    std::vector<std::string> warnings;
    RegionFit fit;
    AlphaVariants alpha_variants;
    std::vector<analysis::ChiSquareResult> normality;  // per bin; empty for bin-only inputs
    std::optional<double> correlation;
    analysis::ComparisonReport comparison;
};

namespace detail {

inline void finish(AnalysisReport& r) {
    const auto& o = r.options;
    r.fit = analysis::fit_operational_region(r.bins, o.residual_k);
    r.fit = analysis::with_envelope(std::move(r.fit), r.bins, o.epsilon);

    auto& av = r.alpha_variants;
    av.fitted_slope = r.fit.alpha;
    av.fitted_slope_region = analysis::estimate_alpha(r.bins, r.fit.slope_perf, o.epsilon, r.fit.region_bins);
    double perf_sum = 0;
    std::size_t perf_n = 0;
    const BinStats* first = nullptr;
    for (const auto& b : r.bins) {
        if (!b.enough_data || !(b.mean_perf > 0)) continue;
        perf_sum += b.mean_perf;
        ++perf_n;
        if (!first || b.mean_n < first->mean_n) first = &b;
    }
    if (perf_n > 0) {
        av.mean_bin_perf = analysis::estimate_alpha(r.bins, perf_sum / static_cast<double>(perf_n), o.epsilon);
        av.first_bin_perf = analysis::estimate_alpha(r.bins, first->mean_perf, o.epsilon);
    }

    try {
        r.correlation = analysis::sigma_sqrtn_correlation(r.bins);
    } catch (const stats::domain_error& e) {
        r.warnings.push_back(std::string("correlation not computed: ") + e.what());
    }
    const std::pair<std::string, RegionFit> entry{r.label, r.fit};
    r.comparison = analysis::compare_networks(std::span(&entry, 1));
}

}  // namespace detail


inline AnalysisReport analyze_samples(std::span<const TrafficSample> samples, AnalyzeOptions options,
                                      std::string source = "") {
    if (samples.empty()) throw degenerate_error("no samples to analyze");
    AnalysisReport r;
    r.label = options.label;
    r.source = std::move(source);
    r.sample_count = samples.size();

    analysis::BinSpec spec;
    spec.min_samples = options.min_samples;
    spec.edges = options.edges ? *options.edges : analysis::auto_edges(samples, options.min_samples);
    auto binning = analysis::bin_by_flow_count(samples, spec);
    r.bins = std::move(binning.bins);
    r.out_of_range = binning.out_of_range;
    r.warnings = std::move(binning.warnings);
    r.options = std::move(options);
    r.options.edges = spec.edges;

    for (std::size_t j = 0; j < r.bins.size(); ++j) {
        std::vector<double> perf;
        for (auto i : binning.members[j])
            if (samples[i].active_flows > 0) perf.push_back(samples[i].flow_performance());
        analysis::ChiSquareResult res;
        try {
            res = analysis::normality_test(perf, r.options.chi_square_level, analysis::mann_wald_cells(perf.size(), r.options.chi_square_level));
        } catch (const degenerate_error&) {
            r.warnings.push_back("bin " + std::to_string(r.bins[j].bin_index) +
                                 ": flow performance has zero variance, normality test skipped");
        }
        r.normality.push_back(std::move(res));
    }
    detail::finish(r);
    return r;
}

/// Analysis of an already binned table (for example a reference fixture).
inline AnalysisReport analyze_bins(std::vector<BinStats> bins, AnalyzeOptions options, std::string source = "") {
    AnalysisReport r;
    r.label = options.label;
    r.source = std::move(source);
    r.bins = std::move(bins);
    r.options = std::move(options);
    detail::finish(r);
    return r;
}

inline report::json to_json(const AnalysisReport& r) {
    using report::json;
    json bins = json::array();
    for (const auto& b : r.bins) bins.push_back(report::to_json(b));
    json normality = json::array();
    for (std::size_t i = 0; i < r.normality.size(); ++i) {
        auto j = report::to_json(r.normality[i]);
        j["bin_index"] = r.bins[i].bin_index;
        normality.push_back(std::move(j));
    }
    const auto& av = r.alpha_variants;
    return {{"label", r.label},
            {"source", r.source},
            {"sample_count", r.sample_count},
            {"out_of_range", r.out_of_range},
            {"epsilon", r.options.epsilon},
            {"quantile", r.fit.quantile},
            {"edges", r.options.edges ? json(*r.options.edges) : json(nullptr)},
            {"bins", bins},
            {"fit", report::to_json(r.fit)},
            {"alpha_variants",
             {{"fitted_slope", av.fitted_slope},
              {"fitted_slope_region", av.fitted_slope_region},
              {"mean_bin_perf", av.mean_bin_perf},
              {"first_bin_perf", av.first_bin_perf}}},
            {"normality", normality},
            {"correlation", r.correlation ? json(*r.correlation) : json(nullptr)},
            {"comparison", report::to_json(r.comparison)},
            {"warnings", r.warnings}};
}

}  // namespace flowdiag::pipeline
