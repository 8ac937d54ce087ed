#pragma once

// Binned statistics of (N, B) samples, the operational-region fit with its
// confidence envelope B = b (N +- alpha A(eps) sqrt(N)), and the validation
// statistics run on top of it.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowdiag/model.hpp"
#include "flowdiag/stats.hpp"

namespace flowdiag::analysis {

/// Edges partition N into [e0, e1), [e1, e2), ..., [e_last, inf).
struct BinSpec {
    std::vector<double> edges;
    std::size_t min_samples = 2;

    void validate() const {
        if (edges.empty()) throw config_error("edges", "at least one edge is required");
        for (std::size_t i = 1; i < edges.size(); ++i)
            if (!(edges[i] > edges[i - 1])) throw config_error("edges", "must be strictly ascending");
        if (min_samples < 2) throw config_error("min_samples", "must be at least 2");
    }
};

struct Binning {
    std::vector<BinStats> bins;                      // non-empty bins only, ascending N
    std::vector<std::vector<std::size_t>> members;  // sample indices per emitted bin
    std::size_t out_of_range = 0;                    // samples below edges.front()
    std::vector<std::string> warnings;
};

/// Groups samples by active-flow count and computes per-bin moments with the
/// sample (n - 1) standard deviation. The per-flow performance b is the mean of
/// per-sample B/N; samples with N = 0 never enter b. Bins holding fewer than
/// min_samples samples keep mean_n and sample_count only and are flagged.
inline Binning bin_by_flow_count(std::span<const TrafficSample> samples, const BinSpec& spec) {
    spec.validate();
    if (samples.empty()) throw error("bin_by_flow_count: no samples");

    const auto& edges = spec.edges;
    std::vector<std::vector<std::size_t>> slots(edges.size());
    Binning out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto n = static_cast<double>(samples[i].active_flows);
        if (n < edges.front()) {
            ++out.out_of_range;
            continue;
        }
        const auto it = std::upper_bound(edges.begin(), edges.end(), n);
        slots[static_cast<std::size_t>(it - edges.begin()) - 1].push_back(i);
    }
    if (out.out_of_range == samples.size())
        out.warnings.push_back("all samples lie below the first bin edge");
    else if (out.out_of_range > 0)
        out.warnings.push_back(std::to_string(out.out_of_range) + " samples lie below the first bin edge");

    for (std::size_t j = 0; j < slots.size(); ++j) {
        const auto& idx = slots[j];
        if (idx.empty()) continue;

        std::vector<double> ns, rates, perfs;
        for (auto i : idx) {
            ns.push_back(static_cast<double>(samples[i].active_flows));
            rates.push_back(samples[i].total_rate);
            if (samples[i].active_flows > 0) perfs.push_back(samples[i].flow_performance());
        }

        BinStats b;
        b.bin_index = out.bins.size() + 1;
        b.n_lo = edges[j];
        b.n_hi = j + 1 < edges.size() ? edges[j + 1] : unbounded;
        b.mean_n = stats::mean(ns);
        b.sample_count = idx.size();
        b.enough_data = idx.size() >= spec.min_samples;
        if (b.enough_data) {
            b.mean_rate = stats::mean(rates);
            b.sigma_rate = stats::stddev(rates);
            b.mean_perf = stats::mean(perfs);
            b.sigma_perf = stats::stddev(perfs);
        }
        out.bins.push_back(b);
        out.members.push_back(idx);
    }
    return out;
}

/// Default edges: the distinct deciles of the observed N, merged left to right
/// until every bin holds at least min_samples samples (a short tail joins its
/// left neighbour).
inline std::vector<double> auto_edges(std::span<const TrafficSample> samples, std::size_t min_samples = 30) {
    if (samples.empty()) throw error("auto_edges: no samples");
    std::vector<double> ns;
    ns.reserve(samples.size());
    for (const auto& s : samples) ns.push_back(static_cast<double>(s.active_flows));
    std::sort(ns.begin(), ns.end());

    std::vector<double> candidates;
    for (std::size_t q = 0; q < 10; ++q) {
        const double v = ns[q * ns.size() / 10];
        if (candidates.empty() || v > candidates.back()) candidates.push_back(v);
    }

    auto occupancy = [&](std::size_t j) {
        const auto lo = std::lower_bound(ns.begin(), ns.end(), candidates[j]);
        const auto hi = j + 1 < candidates.size() ? std::lower_bound(ns.begin(), ns.end(), candidates[j + 1])
                                                  : ns.end();
        return static_cast<std::size_t>(hi - lo);
    };

    std::vector<double> edges;
    std::size_t acc = 0;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        if (acc == 0) edges.push_back(candidates[j]);
        acc += occupancy(j);
        if (acc >= min_samples) acc = 0;
    }
    if (acc > 0 && edges.size() > 1) edges.pop_back();
    return edges;
}

/// Through-origin least squares slope sum(N B) / sum(N^2).
inline double through_origin_slope(std::span<const BinStats> bins) {
    double nb = 0, nn = 0;
    for (const auto& b : bins) {
        nb += b.mean_n * b.mean_rate;
        nn += b.mean_n * b.mean_n;
    }
    return nb / nn;
}

namespace detail {

inline std::vector<BinStats> usable(std::span<const BinStats> bins) {
    std::vector<BinStats> out;
    for (const auto& b : bins)
        if (b.enough_data && b.mean_n > 0) out.push_back(b);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.mean_n < b.mean_n; });
    return out;
}

inline bool within(const BinStats& b, double slope, double k) {
    const double predicted = slope * b.mean_n;
    // Relative slack absorbs round-off on noiseless data where sigma is 0.
    return std::abs(b.mean_rate - predicted) <= k * b.sigma_rate + 1e-9 * std::abs(predicted);
}

}  // namespace detail

/// Finds the operational region: the leading bins (by mean N) that lie on a line
/// through the origin. Starting from the first two bins, the region grows one
/// bin at a time while the next bin lies within k sigma(B) of the line fitted to
/// the current region and the refitted line keeps every member within k sigma(B).
/// alpha is left at 0; see estimate_alpha.
inline RegionFit fit_operational_region(std::span<const BinStats> bins, double k = 1.0) {
    if (!(k > 0)) throw config_error("residual_k", "must be positive");
    const auto pts = detail::usable(bins);
    if (pts.size() < 2) throw degenerate_error("region fit needs at least two bins with enough data");

    auto fits = [&](std::size_t len, double slope) {
        for (std::size_t i = 0; i < len; ++i)
            if (!detail::within(pts[i], slope, k)) return false;
        return true;
    };

    std::size_t len = 2;
    double slope = through_origin_slope(std::span(pts).first(len));
    if (!fits(len, slope))
        throw degenerate_error("no linear operational region found in the first two bins; "
                               "supply bin edges manually");
    while (len < pts.size()) {
        if (!detail::within(pts[len], slope, k)) break;
        const double refit = through_origin_slope(std::span(pts).first(len + 1));
        if (!fits(len + 1, refit)) break;
        slope = refit;
        ++len;
    }
    if (!(slope > 0)) throw degenerate_error("fitted mean flow performance is not positive");

    RegionFit fit;
    fit.slope_perf = slope;
    fit.threshold_n = pts[len - 1].n_hi;
    fit.residual_k = k;
    for (std::size_t i = 0; i < len; ++i) fit.region_bins.push_back(pts[i].bin_index);
    return fit;
}

/// alpha = mean over bins of sigma_i(B) / (A(eps) b sqrt(N_i)). When `only` is
/// non-empty the mean runs over those bin indices instead of every usable bin.
inline double estimate_alpha(std::span<const BinStats> bins, double slope_perf, double epsilon,
                             std::span<const std::size_t> only = {}) {
    if (!(slope_perf > 0)) throw degenerate_error("estimate_alpha: slope must be positive");
    const double a = stats::normal_quantile(epsilon);
    double sum = 0;
    std::size_t count = 0;
    for (const auto& b : detail::usable(bins)) {
        if (!only.empty() && std::find(only.begin(), only.end(), b.bin_index) == only.end()) continue;
        sum += b.sigma_rate / (a * slope_perf * std::sqrt(b.mean_n));
        ++count;
    }
    if (count == 0) throw degenerate_error("estimate_alpha: no bins with enough data");
    return sum / static_cast<double>(count);
}

/// Fills alpha, epsilon and the quantile of a region fit.
inline RegionFit with_envelope(RegionFit fit, std::span<const BinStats> bins, double epsilon) {
    fit.epsilon = epsilon;
    fit.quantile = stats::normal_quantile(epsilon);
    fit.alpha = estimate_alpha(bins, fit.slope_perf, epsilon);
    return fit;
}

struct Interval {
    bits_per_second lower = 0;
    bits_per_second upper = 0;
};

inline Interval confidence_interval(const RegionFit& fit, double n) {
    const double center = fit.slope_perf * n;
    const double half = fit.slope_perf * fit.alpha * fit.quantile * std::sqrt(std::max(n, 0.0));
    return {std::max(0.0, center - half), center + half};
}

using stats::normal_quantile;

struct ChiSquareCell {
    double observed = 0;
    double expected = 0;
};

struct ChiSquareResult {
    bool performed = false;  // false: not enough data, nothing else is meaningful
    double statistic = 0;
    double critical = 0;
    std::size_t dof = 0;
    bool passed = false;
    std::size_t histogram_bins = 0;  // cells after merging
    std::vector<ChiSquareCell> cells;
};

inline constexpr std::size_t min_normality_values = 30;
inline constexpr double min_expected_count = 5.0;

/// Mann-Wald cell count 4 (2 (n-1)^2 / z^2)^(1/5) for n values at the given
/// level, capped so that every cell expects at least 5 values.
inline std::size_t mann_wald_cells(std::size_t n, double level = 0.95) {
    if (n < 2) return 4;
    const double z = stats::normal_inverse_cdf(level);
    const double m = static_cast<double>(n - 1);
    const auto k = static_cast<std::size_t>(std::lround(4.0 * std::pow(2.0 * m * m / (z * z), 0.2)));
    return std::clamp<std::size_t>(std::min(k, n / static_cast<std::size_t>(min_expected_count)), 4, k);
}

/// Verdict for a statistic already computed elsewhere, with dof = cells - 3.
inline ChiSquareResult chi_square_verdict(double statistic, double critical, std::size_t histogram_bins) {
    ChiSquareResult r;
    r.performed = true;
    r.statistic = statistic;
    r.critical = critical;
    r.histogram_bins = histogram_bins;
    r.dof = histogram_bins - 3;
    r.passed = statistic <= critical;
    return r;
}

/// Pearson chi-square test of normality. Mean and standard deviation (maximum
/// likelihood) are fitted from the data, values are counted into
/// `histogram_bins` equal-probability cells of the fitted normal, and adjacent
/// cells are merged left to right until each expects at least 5 values.
inline ChiSquareResult normality_test(std::span<const double> values, double level = 0.95,
                                      std::size_t histogram_bins = 10) {
    if (!(level > 0 && level < 1)) throw config_error("level", "must lie in (0, 1)");
    if (histogram_bins < 4) throw config_error("histogram_bins", "need at least 4 cells");
    ChiSquareResult r;
    if (values.size() < min_normality_values) return r;

    const double m = stats::mean(values);
    const double sd = stats::stddev(values, 0);
    if (!(sd > 0)) throw degenerate_error("normality_test: values have zero variance");

    std::vector<double> bounds;
    for (std::size_t j = 1; j < histogram_bins; ++j)
        bounds.push_back(m + sd * stats::normal_inverse_cdf(static_cast<double>(j) / histogram_bins));
    std::vector<double> observed(histogram_bins, 0.0);
    for (double v : values)
        observed[static_cast<std::size_t>(std::upper_bound(bounds.begin(), bounds.end(), v) - bounds.begin())] += 1;
    const double expected = static_cast<double>(values.size()) / histogram_bins;

    ChiSquareCell acc;
    for (std::size_t j = 0; j < histogram_bins; ++j) {
        acc.observed += observed[j];
        acc.expected += expected;
        if (acc.expected >= min_expected_count) {
            r.cells.push_back(acc);
            acc = {};
        }
    }
    if (acc.expected > 0) {
        if (r.cells.empty()) r.cells.push_back(acc);
        else {
            r.cells.back().observed += acc.observed;
            r.cells.back().expected += acc.expected;
        }
    }
    if (r.cells.size() < 4) return ChiSquareResult{};

    double chi2 = 0;
    for (const auto& c : r.cells) chi2 += (c.observed - c.expected) * (c.observed - c.expected) / c.expected;
    const std::size_t dof = r.cells.size() - 3;
    auto cells = std::move(r.cells);
    r = chi_square_verdict(chi2, stats::chi_square_quantile(level, static_cast<double>(dof)), cells.size());
    r.cells = std::move(cells);
    return r;
}

/// Pearson correlation between sigma_i(B) and sqrt(N_i) over bins with data.
inline double sigma_sqrtn_correlation(std::span<const BinStats> bins) {
    std::vector<double> sigma, root_n;
    for (const auto& b : bins) {
        if (!b.enough_data) continue;
        sigma.push_back(b.sigma_rate);
        root_n.push_back(std::sqrt(b.mean_n));
    }
    if (sigma.size() < 3) throw stats::domain_error("correlation needs at least three bins with data");
    return stats::pearson_correlation(sigma, root_n);
}

inline constexpr bits_per_second streaming_threshold = 1e4;

struct ComparisonEntry {
    std::string label;
    bits_per_second mean_flow_perf = 0;
    bool streaming_capable = false;
};

struct ComparisonReport {
    std::vector<ComparisonEntry> entries;  // input order
    std::vector<std::string> ranking;      // by mean flow performance, descending; ties by label
};

inline ComparisonReport compare_networks(std::span<const std::pair<std::string, RegionFit>> fits) {
    ComparisonReport report;
    for (const auto& [label, fit] : fits)
        report.entries.push_back({label, fit.slope_perf, fit.slope_perf >= streaming_threshold});
    std::vector<const ComparisonEntry*> order;
    for (const auto& e : report.entries) order.push_back(&e);
    std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
        if (a->mean_flow_perf != b->mean_flow_perf) return a->mean_flow_perf > b->mean_flow_perf;
        return a->label < b->label;
    });
    for (const auto* e : order) report.ranking.push_back(e->label);
    return report;
}

}  // namespace flowdiag::analysis
