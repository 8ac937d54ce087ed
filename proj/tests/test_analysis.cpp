#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <random>

#include "flowdiag/analysis.hpp"
#include "flowdiag/ingest.hpp"
#include "flowdiag/pipeline.hpp"
#include "flowdiag/sim.hpp"

using namespace flowdiag;

namespace {

BinStats bin(std::size_t i, double lo, double hi, double n, double b, double sb) {
    return BinStats{i, lo, hi, n, b, sb, b / n, 0, 100, true};
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

}  // namespace

TEST(Binning, HandComputedMoments) {
    const std::vector<TrafficSample> s{{0, 10, 100}, {1, 12, 120}, {2, 25, 200}, {3, 35, 280}};
    analysis::BinSpec spec{{0, 20, 40}, 2};
    const auto b = analysis::bin_by_flow_count(s, spec);
    ASSERT_EQ(b.bins.size(), 2u);  // the empty [40, inf) bin is dropped
    EXPECT_DOUBLE_EQ(b.bins[0].mean_n, 11);
    EXPECT_DOUBLE_EQ(b.bins[0].mean_rate, 110);
    EXPECT_DOUBLE_EQ(b.bins[0].mean_perf, 10);
    EXPECT_DOUBLE_EQ(b.bins[0].sigma_rate, std::sqrt(200.0));
    EXPECT_DOUBLE_EQ(b.bins[1].mean_n, 30);
    EXPECT_DOUBLE_EQ(b.bins[1].mean_rate, 240);
    EXPECT_DOUBLE_EQ(b.bins[1].mean_perf, 8);
    EXPECT_EQ(b.bins[1].n_lo, 20);
    EXPECT_EQ(b.bins[1].n_hi, 40);
    EXPECT_EQ(b.bins[1].bin_index, 2u);
}

TEST(Binning, SparseBinIsFlagged) {
    const std::vector<TrafficSample> s{{0, 10, 100}, {1, 12, 120}, {2, 25, 200}};
    const auto b = analysis::bin_by_flow_count(s, {{0, 20}, 2});
    ASSERT_EQ(b.bins.size(), 2u);
    EXPECT_TRUE(b.bins[0].enough_data);
    EXPECT_FALSE(b.bins[1].enough_data);
    EXPECT_EQ(b.bins[1].sample_count, 1u);
    EXPECT_DOUBLE_EQ(b.bins[1].mean_n, 25);
}

TEST(Binning, ZeroVarianceAndIdleSamples) {
    const std::vector<TrafficSample> s{{0, 0, 0}, {1, 5, 50}, {2, 5, 50}};
    const auto b = analysis::bin_by_flow_count(s, {{0}, 2});
    ASSERT_EQ(b.bins.size(), 1u);
    EXPECT_DOUBLE_EQ(b.bins[0].mean_perf, 10);  // the idle sample does not enter b
    const auto c = analysis::bin_by_flow_count(std::span(s).subspan(1), {{0}, 2});
    EXPECT_EQ(c.bins[0].sigma_rate, 0.0);
}

TEST(Binning, RejectsBadEdges) {
    const std::vector<TrafficSample> s{{0, 1, 1}};
    EXPECT_THROW(analysis::bin_by_flow_count(s, {{}, 2}), config_error);
    EXPECT_THROW(analysis::bin_by_flow_count(s, {{5, 5}, 2}), config_error);
    EXPECT_THROW(analysis::bin_by_flow_count(s, {{0}, 1}), config_error);
}

TEST(Binning, PartitionsEverySample) {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<TrafficSample> s;
        for (int i = 0; i < 500; ++i) s.push_back({double(i), gen() % 1000, double(gen() % 100000)});
        std::vector<double> edges{double(gen() % 200)};
        while (edges.size() < 1 + gen() % 8) edges.push_back(edges.back() + 1 + gen() % 200);
        const auto b = analysis::bin_by_flow_count(s, {edges, 2});
        std::size_t total = b.out_of_range;
        std::vector<int> seen(s.size(), 0);
        for (std::size_t j = 0; j < b.bins.size(); ++j) {
            total += b.bins[j].sample_count;
            EXPECT_EQ(b.members[j].size(), b.bins[j].sample_count);
            for (auto i : b.members[j]) {
                ++seen[i];
                const double n = static_cast<double>(s[i].active_flows);
                EXPECT_GE(n, b.bins[j].n_lo);
                EXPECT_LT(n, b.bins[j].n_hi);
            }
        }
        EXPECT_EQ(total, s.size());
        for (std::size_t i = 0; i < s.size(); ++i)
            EXPECT_EQ(seen[i], static_cast<double>(s[i].active_flows) < edges.front() ? 0 : 1);
    }
}

TEST(AutoEdges, EveryBinHasEnoughSamples) {
    std::mt19937_64 gen(11);
    std::poisson_distribution<int> pois(400);
    std::vector<TrafficSample> s;
    for (int i = 0; i < 3000; ++i) s.push_back({double(i), flow_count(pois(gen)), 1.0});
    const auto edges = analysis::auto_edges(s, 30);
    EXPECT_GE(edges.size(), 5u);
    const auto b = analysis::bin_by_flow_count(s, {edges, 30});
    EXPECT_EQ(b.out_of_range, 0u);
    for (const auto& x : b.bins) EXPECT_GE(x.sample_count, 30u);
}

TEST(RegionFit, FixtureOneHasThreeLinearBins) {
    const auto bins = ingest::load_fixture("dataset1");
    const auto fit = analysis::fit_operational_region(bins);
    EXPECT_EQ(fit.region_bins, (std::vector<std::size_t>{1, 2, 3}));
    EXPECT_EQ(fit.threshold_n, 30000);
    const double expected = (17489 * 113.1e6 + 23260 * 126.0e6 + 27007 * 152.0e6) /
                            (17489.0 * 17489 + 23260.0 * 23260 + 27007.0 * 27007);
    EXPECT_NEAR(fit.slope_perf, expected, 1e-9 * expected);
    EXPECT_NEAR(fit.slope_perf, 5700, 0.01 * 5700);
}

TEST(RegionFit, FixtureTwo) {
    const auto fit = analysis::fit_operational_region(ingest::load_fixture("dataset2"));
    EXPECT_EQ(fit.region_bins, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(fit.threshold_n, 7000);
    EXPECT_NEAR(fit.slope_perf, 2706.6, 0.1);
}

TEST(RegionFit, NoiselessLineIsAllRegion) {
    std::vector<BinStats> bins;
    for (std::size_t i = 1; i <= 6; ++i) bins.push_back(bin(i, 100.0 * i, 100.0 * (i + 1), 100.0 * i + 50, 2000 * (100.0 * i + 50), 0));
    const auto fit = analysis::fit_operational_region(bins);
    EXPECT_DOUBLE_EQ(fit.slope_perf, 2000);
    EXPECT_EQ(fit.region_bins.size(), 6u);
    EXPECT_EQ(fit.threshold_n, 700);
}

TEST(RegionFit, StopsAtKnee) {
    std::vector<BinStats> bins;
    for (std::size_t i = 1; i <= 8; ++i) {
        const double n = 10.0 * i;
        const double rate = 1000 * std::min(n, 40.0);
        bins.push_back(bin(i, n - 5, n + 5, n, rate, 200 * std::sqrt(n)));
    }
    const auto fit = analysis::fit_operational_region(bins);
    EXPECT_EQ(fit.region_bins, (std::vector<std::size_t>{1, 2, 3, 4}));
    EXPECT_EQ(fit.threshold_n, 45);
    EXPECT_NEAR(fit.slope_perf, 1000, 1e-9);
}

TEST(RegionFit, DegenerateInputs) {
    std::vector<BinStats> one{bin(1, 0, 10, 5, 50, 1)};
    EXPECT_THROW(analysis::fit_operational_region(one), degenerate_error);
    // The second bin is far off the line through the first.
    std::vector<BinStats> bent{bin(1, 0, 10, 5, 50, 1), bin(2, 10, 20, 15, 10, 1)};
    EXPECT_THROW(analysis::fit_operational_region(bent), degenerate_error);
    std::vector<BinStats> sparse{bin(1, 0, 10, 5, 50, 1), bin(2, 10, 20, 15, 150, 1)};
    sparse[1].enough_data = false;
    EXPECT_THROW(analysis::fit_operational_region(sparse), degenerate_error);
}

TEST(Alpha, FixtureValues) {
    const auto bins = ingest::load_fixture("dataset1");
    const double a = boost::math::quantile(boost::math::complement(boost::math::normal(), 0.025));
    double expected = 0;
    for (const auto& b : bins) expected += b.sigma_rate / (a * 5700 * std::sqrt(b.mean_n));
    expected /= static_cast<double>(bins.size());
    EXPECT_NEAR(analysis::estimate_alpha(bins, 5700, 0.05), expected, 1e-6 * expected);
    EXPECT_NEAR(expected, 14.89, 0.01);

    const auto d2 = ingest::load_fixture("dataset2");
    EXPECT_NEAR(analysis::estimate_alpha(d2, 5700, 0.05), 2.909, 1e-3);
    const auto fit = analysis::with_envelope(analysis::fit_operational_region(d2), d2, 0.05);
    EXPECT_NEAR(fit.alpha, 6.126, 1e-3);
}

TEST(Alpha, SquareRootScalingGivesConstantAlpha) {
    // sigma(B) = alpha A b sqrt(N) exactly: every bin yields the same alpha.
    const double a = stats::normal_quantile(0.05);
    std::vector<BinStats> bins;
    for (std::size_t i = 1; i <= 5; ++i) {
        const double n = 1000.0 * i;
        bins.push_back(bin(i, n - 500, n + 500, n, 3000 * n, 2.5 * a * 3000 * std::sqrt(n)));
    }
    EXPECT_NEAR(analysis::estimate_alpha(bins, 3000, 0.05), 2.5, 1e-12);
    const std::vector<std::size_t> only{2, 4};
    EXPECT_NEAR(analysis::estimate_alpha(bins, 3000, 0.05, only), 2.5, 1e-12);
    EXPECT_THROW(analysis::estimate_alpha(bins, 0, 0.05), degenerate_error);
    EXPECT_THROW(analysis::estimate_alpha(bins, 3000, 0), stats::domain_error);
}

TEST(ConfidenceInterval, WorkedExample) {
    RegionFit fit;
    fit.slope_perf = 5700;
    fit.alpha = 13;
    fit.quantile = stats::normal_quantile(0.05);
    const auto ci = analysis::confidence_interval(fit, 30000);
    EXPECT_NEAR(ci.lower, 1.4584e8, 1e4);
    EXPECT_NEAR(ci.upper, 1.9616e8, 1e4);
}

TEST(ConfidenceInterval, Properties) {
    RegionFit fit;
    fit.slope_perf = 1000;
    fit.alpha = 4;
    fit.quantile = 1.96;
    const auto zero = analysis::confidence_interval(fit, 0);
    EXPECT_EQ(zero.lower, 0);
    EXPECT_EQ(zero.upper, 0);
    // Small N: the lower bound would go negative and is clamped.
    EXPECT_EQ(analysis::confidence_interval(fit, 4).lower, 0);
    double prev_width = 0;
    for (double n = 1; n < 1e6; n *= 1.7) {
        const auto ci = analysis::confidence_interval(fit, n);
        EXPECT_LE(ci.lower, fit.slope_perf * n);
        EXPECT_GE(ci.upper, fit.slope_perf * n);
        EXPECT_NEAR(ci.upper - fit.slope_perf * n, 1000 * 4 * 1.96 * std::sqrt(n), 1e-6 * ci.upper);
        EXPECT_GT(ci.upper - ci.lower, prev_width - 1e-9);
        prev_width = ci.upper - ci.lower;
    }
    auto wider = fit;
    wider.alpha = 5;
    EXPECT_GT(analysis::confidence_interval(wider, 1e4).upper, analysis::confidence_interval(fit, 1e4).upper);
}

TEST(Normality, MatchesIndependentComputation) {
    sim::Rng rng(9);
    std::vector<double> xs;
    for (int i = 0; i < 200; ++i) xs.push_back(3 + 2 * rng.standard_normal());
    const auto r = analysis::normality_test(xs, 0.95, 10);
    ASSERT_TRUE(r.performed);

    double m = 0;
    for (double x : xs) m += x;
    m /= xs.size();
    double ss = 0;
    for (double x : xs) ss += (x - m) * (x - m);
    const boost::math::normal fitted(m, std::sqrt(ss / xs.size()));
    std::vector<double> counts(10, 0);
    for (double x : xs) {
        std::size_t c = 0;
        while (c < 9 && x >= boost::math::quantile(fitted, (c + 1) / 10.0)) ++c;
        counts[c] += 1;
    }
    double chi2 = 0;
    for (double o : counts) chi2 += (o - 20) * (o - 20) / 20;
    EXPECT_NEAR(r.statistic, chi2, 1e-9);
    EXPECT_EQ(r.dof, 7u);
    EXPECT_NEAR(r.critical, boost::math::quantile(boost::math::chi_squared(7), 0.95), 1e-8);
    EXPECT_EQ(r.passed, chi2 <= r.critical);
}

TEST(Normality, PowerOnNormalAndUniformData) {
    sim::Rng rng(1234);
    int normal_pass = 0, uniform_reject = 0;
    const int reps = 200;
    for (int rep = 0; rep < reps; ++rep) {
        std::vector<double> nv, uv;
        for (int i = 0; i < 200; ++i) {
            nv.push_back(rng.standard_normal());
            uv.push_back(rng.uniform());
        }
        normal_pass += analysis::normality_test(nv, 0.95, 30).passed;
        uniform_reject += !analysis::normality_test(uv, 0.95, 30).passed;
    }
    EXPECT_GE(normal_pass, reps * 0.90);
    EXPECT_GE(uniform_reject, reps * 0.95);
}

TEST(Normality, SmallOrDegenerateInput) {
    std::vector<double> few(29, 1.0);
    EXPECT_FALSE(analysis::normality_test(few).performed);
    std::vector<double> flat(100, 1.0);
    EXPECT_THROW(analysis::normality_test(flat), degenerate_error);
    // 40 values in 10 cells: cells are merged until each expects 5 or more.
    sim::Rng rng(2);
    std::vector<double> xs;
    for (int i = 0; i < 40; ++i) xs.push_back(rng.standard_normal());
    const auto r = analysis::normality_test(xs, 0.95, 10);
    ASSERT_TRUE(r.performed);
    EXPECT_EQ(r.histogram_bins, 5u);
    for (const auto& c : r.cells) EXPECT_GE(c.expected, 5.0);
}

TEST(Normality, ReferenceVerdicts) {
    const auto a = analysis::chi_square_verdict(3.49, 9.49, 7);
    EXPECT_TRUE(a.passed);
    EXPECT_EQ(a.dof, 4u);
    EXPECT_NEAR(stats::chi_square_quantile(0.95, 4), 9.49, 0.005);
    const auto b = analysis::chi_square_verdict(9.15, 12.6, 9);
    EXPECT_TRUE(b.passed);
    EXPECT_EQ(b.dof, 6u);
    EXPECT_NEAR(stats::chi_square_quantile(0.95, 6), 12.6, 0.05);
    EXPECT_FALSE(analysis::chi_square_verdict(13.0, 12.6, 9).passed);
}

TEST(Correlation, FixtureValues) {
    for (const auto& [name, expected] : {std::pair{"dataset1", 0.7051}, std::pair{"dataset2", 0.9297}}) {
        const auto bins = ingest::load_fixture(name);
        std::vector<double> s, r;
        for (const auto& b : bins) {
            s.push_back(b.sigma_rate);
            r.push_back(std::sqrt(b.mean_n));
        }
        const double got = analysis::sigma_sqrtn_correlation(bins);
        EXPECT_NEAR(got, pearson(s, r), 1e-12) << name;
        EXPECT_NEAR(got, expected, 1e-4) << name;
    }
    std::vector<BinStats> two{bin(1, 0, 1, 1, 1, 1), bin(2, 1, 2, 2, 2, 2)};
    EXPECT_THROW(analysis::sigma_sqrtn_correlation(two), stats::domain_error);
}

TEST(Comparison, RanksByFlowPerformance) {
    RegionFit a, b, c;
    a.slope_perf = 5718;
    b.slope_perf = 2706;
    c.slope_perf = 2e4;
    const std::vector<std::pair<std::string, RegionFit>> in{{"alpha", a}, {"beta", b}, {"gamma", c}};
    const auto r = analysis::compare_networks(in);
    EXPECT_EQ(r.ranking, (std::vector<std::string>{"gamma", "alpha", "beta"}));
    EXPECT_FALSE(r.entries[0].streaming_capable);
    EXPECT_TRUE(r.entries[2].streaming_capable);

    const std::vector<std::pair<std::string, RegionFit>> tie{{"zeta", a}, {"eta", a}};
    EXPECT_EQ(analysis::compare_networks(tie).ranking, (std::vector<std::string>{"eta", "zeta"}));
}

TEST(Pipeline, RateUnitScaleDoesNotChangeShape) {
    auto bins = ingest::load_fixture("dataset1");
    const auto base = pipeline::analyze_bins(bins, {});
    for (auto& b : bins) {
        b.mean_rate /= 1e6;
        b.sigma_rate /= 1e6;
    }
    const auto scaled = pipeline::analyze_bins(bins, {});
    EXPECT_EQ(scaled.fit.region_bins, base.fit.region_bins);
    EXPECT_NEAR(scaled.fit.slope_perf * 1e6, base.fit.slope_perf, 1e-6 * base.fit.slope_perf);
    EXPECT_NEAR(scaled.fit.alpha, base.fit.alpha, 1e-9 * base.fit.alpha);
    EXPECT_NEAR(*scaled.correlation, *base.correlation, 1e-12);
}

TEST(Pipeline, SimulatedLinkFitsItsOwnMoments) {
    sim::SimConfig c;
    c.lambda = 40;
    c.size = sim::Distribution::exponential(5e4);
    c.duration = sim::Distribution::constant(10);
    c.horizon = 20000;
    c.seed = 77;
    const auto samples = sim::simulate(c);
    const auto r = pipeline::analyze_samples(samples, {});
    const double b = 5e4 / 10;
    EXPECT_NEAR(r.fit.slope_perf, b, 0.02 * b);
    EXPECT_GE(r.fit.region_bins.size(), 5u);
    EXPECT_EQ(r.normality.size(), r.bins.size());
    // Within a narrow N bin B is a sum of N independent rates S/D with coefficient of
    // variation 1, so sigma(B) ~ b sqrt(N) and alpha A ~ 1.
    EXPECT_NEAR(r.fit.alpha * r.fit.quantile, 1.0, 0.05);
}

TEST(Normality, MannWaldCellCount) {
    const double z = boost::math::quantile(boost::math::normal(), 0.95);
    for (std::size_t n : {200u, 1000u, 5000u}) {
        const double m = static_cast<double>(n - 1);
        const auto k = static_cast<std::size_t>(std::lround(4 * std::pow(2 * m * m / (z * z), 0.2)));
        EXPECT_EQ(analysis::mann_wald_cells(n), k) << n;
    }
    EXPECT_EQ(analysis::mann_wald_cells(200), 31u);
    EXPECT_EQ(analysis::mann_wald_cells(60), 12u);  // capped at 5 expected values per cell
    EXPECT_EQ(analysis::mann_wald_cells(10), 4u);
}
