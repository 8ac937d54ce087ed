#pragma once

// Network-state classification and envelope-violation detection.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "flowdiag/analysis.hpp"
#include "flowdiag/model.hpp"
#include "flowdiag/stats.hpp"

namespace flowdiag::detect {

/// Operational up to and including the threshold point. Beyond it the link is
/// moderately loaded while the carried rate still reaches the lower envelope
/// bound at the threshold point, and overloaded once it falls below that level.
inline NetworkState classify_state(const TrafficSample& sample, const RegionFit& fit) {
    const auto n = static_cast<double>(sample.active_flows);
    if (n <= fit.threshold_n) return NetworkState::Operational;
    const auto floor = analysis::confidence_interval(fit, fit.threshold_n).lower;
    return sample.total_rate >= floor ? NetworkState::ModeratelyLoaded : NetworkState::Overloaded;
}

struct DetectorConfig {
    RegionFit fit;
    std::size_t consecutive_required = 2;
    double epsilon = 0.05;
    // Largest timestamp step that still counts as consecutive. Unset: batch
    // detection infers 1.5x the median sampling step, streaming never splits.
    std::optional<seconds> max_gap;

    void validate() const {
        if (consecutive_required < 2) throw config_error("consecutive", "must be at least 2");
        if (!(epsilon > 0 && epsilon < 1)) throw config_error("epsilon", "must lie in (0, 1)");
        if (!(fit.slope_perf > 0)) throw config_error("fit", "slope_perf must be positive");
        if (!(fit.alpha >= 0)) throw config_error("fit", "alpha must be >= 0");
    }

    RegionFit envelope() const {
        RegionFit f = fit;
        f.epsilon = epsilon;
        f.quantile = stats::normal_quantile(epsilon);
        return f;
    }
};

/// Side of the envelope a sample falls on, or nothing when it is inside.
inline std::optional<deviation> classify_deviation(const TrafficSample& s, const RegionFit& envelope) {
    const auto [lo, hi] = analysis::confidence_interval(envelope, static_cast<double>(s.active_flows));
    if (s.total_rate > hi) return deviation::above;
    if (s.total_rate < lo) return deviation::below;
    return std::nullopt;
}

/// Incremental form of the detector: feed samples in time order, collect the
/// events returned by push() and finish().
class AnomalyDetector {
public:
    explicit AnomalyDetector(DetectorConfig config) : config_(std::move(config)) {
        config_.validate();
        envelope_ = config_.envelope();
    }

    std::optional<AnomalyEvent> push(const TrafficSample& s) {
        std::optional<AnomalyEvent> done;
        if (have_prev_ && config_.max_gap && s.timestamp - prev_time_ > *config_.max_gap) done = close();

        const auto side = classify_deviation(s, envelope_);
        if (!side || (!run_.empty() && *side != run_dir_)) {
            if (auto e = close()) done = std::move(e);
        }
        if (side) {
            if (run_.empty()) {
                run_start_ = index_;
                run_dir_ = *side;
            }
            run_.push_back(s);
        }
        prev_time_ = s.timestamp;
        have_prev_ = true;
        ++index_;
        return done;
    }

    std::optional<AnomalyEvent> finish() { return close(); }

private:
    std::optional<AnomalyEvent> close() {
        std::optional<AnomalyEvent> e;
        if (run_.size() >= config_.consecutive_required)
            e = AnomalyEvent{run_.front().timestamp, run_.back().timestamp, run_start_, run_, run_dir_};
        run_.clear();
        return e;
    }

    DetectorConfig config_;
    RegionFit envelope_;
    std::vector<TrafficSample> run_;
    std::size_t run_start_ = 0;
    deviation run_dir_ = deviation::below;
    std::size_t index_ = 0;
    seconds prev_time_ = 0;
    bool have_prev_ = false;
};

inline seconds infer_max_gap(std::span<const TrafficSample> samples) {
    std::vector<double> steps;
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const double d = samples[i].timestamp - samples[i - 1].timestamp;
        if (d > 0) steps.push_back(d);
    }
    if (steps.empty()) return unbounded;
    std::nth_element(steps.begin(), steps.begin() + static_cast<std::ptrdiff_t>(steps.size() / 2), steps.end());
    return 1.5 * steps[steps.size() / 2];
}

/// Maximal same-side runs of out-of-envelope samples at least
/// consecutive_required long. A sampling gap larger than max_gap ends a run.
inline std::vector<AnomalyEvent> detect_anomalies(std::span<const TrafficSample> samples, DetectorConfig config) {
    if (!config.max_gap) config.max_gap = infer_max_gap(samples);
    AnomalyDetector detector(std::move(config));
    std::vector<AnomalyEvent> events;
    for (const auto& s : samples)
        if (auto e = detector.push(s)) events.push_back(std::move(*e));
    if (auto e = detector.finish()) events.push_back(std::move(*e));
    return events;
}

struct Cluster {
    std::size_t id = 0;
    deviation direction = deviation::below;
    std::vector<std::size_t> events;  // indices into the event list
    std::size_t sample_count = 0;
    double mean_n = 0;
    bits_per_second mean_rate = 0;
    double n_min = 0;
    double n_max = 0;
    seconds start_time = 0;
    seconds end_time = 0;
};

/// Groups events that share a direction and whose N ranges overlap, directly or
/// through a chain of other events. Clusters come out below-first, then by N.
inline std::vector<Cluster> cluster_summary(std::span<const AnomalyEvent> events) {
    struct Span {
        std::size_t event;
        double lo, hi;
    };
    std::vector<Cluster> clusters;
    for (const auto dir : {deviation::below, deviation::above}) {
        std::vector<Span> spans;
        for (std::size_t i = 0; i < events.size(); ++i) {
            if (events[i].direction != dir || events[i].samples.empty()) continue;
            double lo = unbounded, hi = -unbounded;
            for (const auto& s : events[i].samples) {
                lo = std::min(lo, static_cast<double>(s.active_flows));
                hi = std::max(hi, static_cast<double>(s.active_flows));
            }
            spans.push_back({i, lo, hi});
        }
        std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
            return a.lo != b.lo ? a.lo < b.lo : a.event < b.event;
        });

        double reach = -unbounded;
        for (const auto& sp : spans) {
            if (clusters.empty() || clusters.back().direction != dir || sp.lo > reach) {
                Cluster c;
                c.id = clusters.size() + 1;
                c.direction = dir;
                c.n_min = sp.lo;
                c.start_time = unbounded;
                c.end_time = -unbounded;
                clusters.push_back(c);
                reach = sp.hi;
            }
            auto& c = clusters.back();
            reach = std::max(reach, sp.hi);
            c.n_max = reach;
            c.events.push_back(sp.event);
            const auto& e = events[sp.event];
            c.start_time = std::min(c.start_time, e.start_time);
            c.end_time = std::max(c.end_time, e.end_time);
        }
    }

    for (auto& c : clusters) {
        std::sort(c.events.begin(), c.events.end());
        double sn = 0, sb = 0;
        for (auto i : c.events)
            for (const auto& s : events[i].samples) {
                sn += static_cast<double>(s.active_flows);
                sb += s.total_rate;
                ++c.sample_count;
            }
        c.mean_n = sn / static_cast<double>(c.sample_count);
        c.mean_rate = sb / static_cast<double>(c.sample_count);
    }
    return clusters;
}

}  // namespace flowdiag::detect
