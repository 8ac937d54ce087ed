#pragma once

// Core value types shared by the simulator, ingestion, analysis and detection
// layers. Internally every time is in seconds and every rate in bits/second;
// other rate units only appear at file and console boundaries.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flowdiag {

using seconds = double;
using bits = double;
using bits_per_second = double;
using flow_count = std::uint64_t;

inline constexpr double unbounded = std::numeric_limits<double>::infinity();

/// Base class for every error the library raises.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration; field() names the offending key.
class config_error : public error {
public:
    config_error(std::string field, const std::string& what)
        : error(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Malformed input text; line() is 1-based, 0 when not line oriented.
class parse_error : public error {
public:
    parse_error(std::size_t line, const std::string& what)
        : error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Analysis could not produce a model from the data (exit code 3 territory).
class degenerate_error : public error {
public:
    using error::error;
};

enum class rate_unit { bps, kbps, mbps, gbps };

constexpr double unit_scale(rate_unit u) {
    switch (u) {
    case rate_unit::bps: return 1.0;
    case rate_unit::kbps: return 1e3;
    case rate_unit::mbps: return 1e6;
    case rate_unit::gbps: return 1e9;
    }
    return 1.0;
}

constexpr std::string_view unit_name(rate_unit u) {
    switch (u) {
    case rate_unit::bps: return "bps";
    case rate_unit::kbps: return "Kbps";
    case rate_unit::mbps: return "Mbps";
    case rate_unit::gbps: return "Gbps";
    }
    return "bps";
}

inline rate_unit parse_unit(std::string_view s) {
    // Case-insensitive on the prefix letter only; "mbps" and "Mbps" both mean megabits.
    std::string lower(s);
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "bps") return rate_unit::bps;
    if (lower == "kbps") return rate_unit::kbps;
    if (lower == "mbps") return rate_unit::mbps;
    if (lower == "gbps") return rate_unit::gbps;
    throw error("unknown rate unit '" + std::string(s) + "'");
}

inline bits_per_second to_bps(double value, rate_unit u) { return value * unit_scale(u); }
inline double from_bps(bits_per_second value, rate_unit u) { return value / unit_scale(u); }

enum class rate_shape { rectangular };

/// One flow of the shot-noise model. The instantaneous rate is size/duration
/// on [arrival_time, arrival_time + duration] and zero elsewhere.
struct FlowRecord {
    seconds arrival_time = 0;
    bits size = 0;
    seconds duration = 0;
    rate_shape shape = rate_shape::rectangular;

    bits_per_second rate() const { return size / duration; }
    seconds end_time() const { return arrival_time + duration; }
    bool active_at(seconds t) const { return arrival_time <= t && t <= arrival_time + duration; }
    bits_per_second rate_at(seconds t) const { return active_at(t) ? rate() : 0.0; }

    bool operator==(const FlowRecord&) const = default;
};

/// One observed network state.
struct TrafficSample {
    seconds timestamp = 0;
    flow_count active_flows = 0;
    bits_per_second total_rate = 0;

    /// B/N; only meaningful when active_flows > 0.
    bits_per_second flow_performance() const {
        return total_rate / static_cast<double>(active_flows);
    }

    bool operator==(const TrafficSample&) const = default;
};

/// Statistics of the samples whose N falls into the half-open range [n_lo, n_hi).
/// Fixture rows carry sample_count == 0: the reference tables omit occupancy.
struct BinStats {
    std::size_t bin_index = 0;  // 1-based
    double n_lo = 0;
    double n_hi = unbounded;
    double mean_n = 0;
    bits_per_second mean_rate = 0;
    bits_per_second sigma_rate = 0;
    bits_per_second mean_perf = 0;
    bits_per_second sigma_perf = 0;
    std::size_t sample_count = 0;
    bool enough_data = true;

    bool operator==(const BinStats&) const = default;
};

/// Fitted operational region and its confidence envelope.
struct RegionFit {
    bits_per_second slope_perf = 0;  // mean flow performance b
    double threshold_n = 0;          // end of the operational region, may be unbounded
    double alpha = 0;
    double epsilon = 0.05;
    double quantile = 1.959963984540054;  // two-sided standard normal quantile of epsilon
    double residual_k = 1.0;
    std::vector<std::size_t> region_bins;

    bool operator==(const RegionFit&) const = default;
};

enum class deviation { above, below };

constexpr std::string_view to_string(deviation d) {
    return d == deviation::above ? "above" : "below";
}

/// A run of consecutive samples that all left the envelope on the same side.
struct AnomalyEvent {
    seconds start_time = 0;
    seconds end_time = 0;
    std::size_t first_index = 0;  // position of samples.front() in the input series
    std::vector<TrafficSample> samples;
    deviation direction = deviation::below;

    std::size_t last_index() const { return first_index + samples.size() - 1; }
    bool operator==(const AnomalyEvent&) const = default;
};

enum class NetworkState { Operational, ModeratelyLoaded, Overloaded };

constexpr std::string_view to_string(NetworkState s) {
    switch (s) {
    case NetworkState::Operational: return "operational";
    case NetworkState::ModeratelyLoaded: return "moderately_loaded";
    case NetworkState::Overloaded: return "overloaded";
    }
    return "operational";
}

}  // namespace flowdiag
