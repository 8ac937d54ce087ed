#pragma once

// Poisson shot-noise traffic: flow generation, aggregate sampling, closed-form
// moments and a processor-sharing overload transform.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "flowdiag/model.hpp"
#include "flowdiag/stats.hpp"

namespace flowdiag::sim {

enum class distribution_kind { constant, exponential, pareto, lognormal };

/// Seeded 64-bit Mersenne Twister with portable inverse-transform draws.
/// std:: distribution objects are avoided because their algorithms differ
/// between standard libraries; this keeps a seed reproducible everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }
    double exponential(double mean) { return -mean * std::log(uniform()); }
    double standard_normal() { return stats::normal_inverse_cdf(uniform()); }

private:
    std::mt19937_64 engine_;
};

struct Distribution {
    distribution_kind kind = distribution_kind::constant;
    double value = 0;  // constant value, or exponential mean
    double shape = 0;  // pareto
    double scale = 0;  // pareto minimum
    double mu = 0;     // lognormal
    double sigma = 0;  // lognormal

    static Distribution constant(double v) { return {distribution_kind::constant, v}; }
    static Distribution exponential(double mean) { return {distribution_kind::exponential, mean}; }
    static Distribution pareto(double shape, double scale) {
        Distribution d{distribution_kind::pareto};
        d.shape = shape;
        d.scale = scale;
        return d;
    }
    static Distribution pareto_with_mean(double shape, double mean) {
        return pareto(shape, mean * (shape - 1.0) / shape);
    }
    static Distribution lognormal(double mu, double sigma) {
        Distribution d{distribution_kind::lognormal};
        d.mu = mu;
        d.sigma = sigma;
        return d;
    }
    static Distribution lognormal_with_mean(double mean, double sigma) {
        return lognormal(std::log(mean) - sigma * sigma / 2.0, sigma);
    }

    double mean() const {
        switch (kind) {
        case distribution_kind::constant:
        case distribution_kind::exponential: return value;
        case distribution_kind::pareto:
            return shape > 1.0 ? shape * scale / (shape - 1.0) : unbounded;
        case distribution_kind::lognormal: return std::exp(mu + sigma * sigma / 2.0);
        }
        return 0;
    }

    double second_moment() const {
        switch (kind) {
        case distribution_kind::constant: return value * value;
        case distribution_kind::exponential: return 2.0 * value * value;
        case distribution_kind::pareto:
            return shape > 2.0 ? shape * scale * scale / (shape - 2.0) : unbounded;
        case distribution_kind::lognormal: return std::exp(2.0 * mu + 2.0 * sigma * sigma);
        }
        return 0;
    }

    /// E[1/X]. Infinite for the exponential, whose density is positive at zero.
    double mean_inverse() const {
        switch (kind) {
        case distribution_kind::constant: return 1.0 / value;
        case distribution_kind::exponential: return unbounded;
        case distribution_kind::pareto: return shape / ((shape + 1.0) * scale);
        case distribution_kind::lognormal: return std::exp(-mu + sigma * sigma / 2.0);
        }
        return 0;
    }

    double sample(Rng& rng) const {
        switch (kind) {
        case distribution_kind::constant: return value;
        case distribution_kind::exponential: return rng.exponential(value);
        case distribution_kind::pareto: return scale * std::pow(rng.uniform(), -1.0 / shape);
        case distribution_kind::lognormal: return std::exp(mu + sigma * rng.standard_normal());
        }
        return 0;
    }

    /// Throws config_error(field) unless the parameters give a positive finite mean.
    void validate(const std::string& field) const {
        auto bad = [&](const std::string& what) { throw config_error(field, what); };
        switch (kind) {
        case distribution_kind::constant:
            if (!(value > 0) || !std::isfinite(value)) bad("constant value must be positive");
            break;
        case distribution_kind::exponential:
            if (!(value > 0) || !std::isfinite(value)) bad("exponential mean must be positive");
            break;
        case distribution_kind::pareto:
            if (!(scale > 0) || !std::isfinite(scale)) bad("pareto scale must be positive");
            if (!(shape > 1.0) || !std::isfinite(shape))
                bad("pareto shape must exceed 1 for a finite mean");
            break;
        case distribution_kind::lognormal:
            if (!std::isfinite(mu)) bad("lognormal mu must be finite");
            if (!(sigma >= 0) || !std::isfinite(sigma)) bad("lognormal sigma must be >= 0");
            break;
        }
    }

    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        switch (kind) {
        case distribution_kind::constant: os << "constant value=" << value; break;
        case distribution_kind::exponential: os << "exponential mean=" << value; break;
        case distribution_kind::pareto: os << "pareto shape=" << shape << " scale=" << scale; break;
        case distribution_kind::lognormal: os << "lognormal mu=" << mu << " sigma=" << sigma; break;
        }
        return os.str();
    }
};

struct Impatience {
    bits_per_second min_rate = 0;
    seconds patience = 0;
};

struct SimConfig {
    double lambda = 0;  // flow arrivals per second
    Distribution size;
    Distribution duration;
    seconds horizon = 0;
    seconds sample_interval = 1.0;
    std::uint64_t seed = 0;
    std::optional<bits_per_second> capacity;
    std::optional<Impatience> impatience;
    bool stationary_start = true;
    std::string label = "simulation";
};

inline void validate(const SimConfig& c) {
    if (!(c.lambda > 0) || !std::isfinite(c.lambda)) throw config_error("lambda", "must be positive");
    if (!(c.horizon >= 0) || !std::isfinite(c.horizon))
        throw config_error("horizon", "must be non-negative");
    if (!(c.sample_interval > 0)) throw config_error("interval", "must be positive");
    c.size.validate("size");
    c.duration.validate("duration");
    if (c.capacity && !(*c.capacity > 0)) throw config_error("capacity", "must be positive");
    if (c.impatience) {
        if (!(c.impatience->min_rate >= 0)) throw config_error("min_rate", "must be >= 0");
        if (!(c.impatience->patience >= 0)) throw config_error("patience", "must be >= 0");
    }
}

/// Draws the flow population. Arrivals form a Poisson process of rate lambda on
/// [0, horizon]. With stationary_start, arrivals are also drawn on
/// [-10 E[D], 0) and those still active at t = 0 are clipped to start at 0
/// with their rate unchanged, so the series starts near steady state.
inline std::vector<FlowRecord> generate_flows(const SimConfig& config) {
    validate(config);
    std::vector<FlowRecord> flows;
    if (config.horizon == 0) return flows;

    Rng rng(config.seed);
    const double mean_gap = 1.0 / config.lambda;

    if (config.stationary_start) {
        const seconds warmup = 10.0 * config.duration.mean();
        for (seconds t = -warmup + rng.exponential(mean_gap); t < 0; t += rng.exponential(mean_gap)) {
            const bits s = config.size.sample(rng);
            const seconds d = config.duration.sample(rng);
            const seconds remaining = t + d;
            if (remaining > 0) flows.push_back({0.0, s / d * remaining, remaining});
        }
    }

    for (seconds t = rng.exponential(mean_gap); t <= config.horizon; t += rng.exponential(mean_gap)) {
        const bits s = config.size.sample(rng);
        const seconds d = config.duration.sample(rng);
        flows.push_back({t, s, d});
    }
    return flows;
}

/// Samples N(t) and B(t) at t = k * interval for every k with t <= horizon.
///
/// Each flow contributes to the contiguous range of sample indices inside its
/// closed activity interval, so the sweep is O(flows + samples). The index
/// bounds are nudged with the same `k * interval` comparisons a direct scan
/// would make, which keeps N(t) identical to a brute-force recount.
inline std::vector<TrafficSample> sample_traffic(std::span<const FlowRecord> flows, seconds interval,
                                                 seconds horizon) {
    if (!(interval > 0)) throw error("sample_traffic: interval must be positive");
    if (horizon < 0) return {};

    auto at = [interval](std::int64_t k) { return static_cast<double>(k) * interval; };
    auto last = static_cast<std::int64_t>(std::floor(horizon / interval));
    while (last >= 0 && at(last) > horizon) --last;
    while (at(last + 1) <= horizon) ++last;
    if (last < 0) return {};
    const auto count = static_cast<std::size_t>(last + 1);

    std::vector<std::int64_t> dn(count + 1, 0);
    std::vector<long double> db(count + 1, 0.0L);
    for (const auto& f : flows) {
        const seconds begin = f.arrival_time;
        const seconds end = f.arrival_time + f.duration;
        if (end < 0 || begin > at(last)) continue;

        auto lo = static_cast<std::int64_t>(std::ceil(begin / interval));
        while (lo > 0 && at(lo - 1) >= begin) --lo;
        while (at(lo) < begin) ++lo;
        lo = std::max<std::int64_t>(lo, 0);

        auto hi = static_cast<std::int64_t>(std::floor(end / interval));
        while (at(hi + 1) <= end) ++hi;
        while (hi >= lo && at(hi) > end) --hi;
        hi = std::min(hi, last);
        if (hi < lo) continue;

        const long double r = f.rate();
        dn[static_cast<std::size_t>(lo)] += 1;
        dn[static_cast<std::size_t>(hi) + 1] -= 1;
        db[static_cast<std::size_t>(lo)] += r;
        db[static_cast<std::size_t>(hi) + 1] -= r;
    }

    std::vector<TrafficSample> out;
    out.reserve(count);
    std::int64_t n = 0;
    long double b = 0.0L;
    for (std::size_t k = 0; k < count; ++k) {
        n += dn[k];
        b += db[k];
        // The running sum can leave round-off residue once every flow has left.
        const double rate = n == 0 ? 0.0 : std::max(0.0, static_cast<double>(b));
        if (n == 0) b = 0.0L;
        out.push_back({at(static_cast<std::int64_t>(k)), static_cast<flow_count>(n), rate});
    }
    return out;
}

struct MomentReport {
    bits_per_second mean_rate = 0;
    double var_rate = 0;
    double mean_flows = 0;
    bits mean_size = 0;
    seconds mean_duration = 0;
    double mean_sq_size_over_dur = 0;
    bits_per_second mean_flow_perf = 0;
};

/// Closed-form moments of the uncapped shot-noise process:
/// E[B] = lambda E[S], V[B] = lambda E[S^2/D], E[N] = lambda E[D], using
/// independence of S and D. Infinite entries mean the moment does not exist.
inline MomentReport theoretical_moments(const SimConfig& config) {
    if (config.duration.kind == distribution_kind::pareto && config.duration.shape <= 1.0)
        throw config_error("duration", "pareto shape <= 1 has no finite mean; mean flow count undefined");
    validate(config);

    MomentReport m;
    m.mean_size = config.size.mean();
    m.mean_duration = config.duration.mean();
    m.mean_rate = config.lambda * m.mean_size;
    m.mean_flows = config.lambda * m.mean_duration;
    m.mean_sq_size_over_dur = config.size.second_moment() * config.duration.mean_inverse();
    m.var_rate = config.lambda * m.mean_sq_size_over_dur;
    m.mean_flow_perf = m.mean_size * config.duration.mean_inverse();
    return m;
}

struct OverloadResult {
    std::vector<FlowRecord> flows;  // in input order, minus flows dropped with nothing sent
    std::size_t stretched = 0;
    std::size_t aborted = 0;
    std::size_t dropped = 0;
};

/// Replays the flows through a link of the given capacity.
///
/// Between events every active flow runs at its intrinsic rate S/D scaled by
/// min(1, capacity / demand). A throttled flow whose shared rate stays below
/// impatience.min_rate for impatience.patience seconds aborts and keeps only the
/// bits it sent. Flows never throttled come back unchanged; aborted flows that
/// sent nothing are dropped. The realized flows are rectangular with their
/// average achieved rate. Cost is O(events * active flows).
inline OverloadResult apply_overload(std::span<const FlowRecord> flows, bits_per_second capacity,
                                     std::optional<Impatience> impatience = std::nullopt) {
    if (!(capacity > 0)) throw error("apply_overload: capacity must be positive");

    struct Active {
        std::size_t index;
        bits remaining;
        bits sent;
        bits_per_second rate;
        double abort_at;  // NaN while the flow is not being starved
        bool touched;
    };
    constexpr double never = std::numeric_limits<double>::quiet_NaN();

    std::vector<std::size_t> order(flows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return flows[a].arrival_time < flows[b].arrival_time;
    });

    std::vector<std::optional<FlowRecord>> realized(flows.size());
    OverloadResult result;
    std::vector<Active> active;
    std::size_t next = 0;
    double t = 0;

    auto retire = [&](const Active& a, bool aborted) {
        const FlowRecord& f = flows[a.index];
        if (aborted) {
            ++result.aborted;
            if (a.sent <= 0) {
                ++result.dropped;
                return;
            }
            realized[a.index] = FlowRecord{f.arrival_time, a.sent, t - f.arrival_time, f.shape};
        } else if (!a.touched) {
            realized[a.index] = f;
        } else {
            ++result.stretched;
            realized[a.index] = FlowRecord{f.arrival_time, f.size, t - f.arrival_time, f.shape};
        }
    };

    while (next < order.size() || !active.empty()) {
        if (active.empty()) t = std::max(t, flows[order[next]].arrival_time);
        while (next < order.size() && flows[order[next]].arrival_time <= t) {
            const FlowRecord& f = flows[order[next]];
            active.push_back({order[next], f.size, 0.0, f.rate(), never, false});
            ++next;
        }

        double demand = 0;
        for (const auto& a : active) demand += a.rate;
        const double share = demand > capacity ? capacity / demand : 1.0;
        if (share < 1.0)
            for (auto& a : active) a.touched = true;

        if (impatience) {
            bool any_aborted = false;
            for (auto& a : active) {
                const bool starved = share < 1.0 && a.rate * share < impatience->min_rate;
                if (!starved) a.abort_at = never;
                else if (std::isnan(a.abort_at)) a.abort_at = t + impatience->patience;
            }
            for (auto it = active.begin(); it != active.end();) {
                if (t >= it->abort_at) {
                    retire(*it, true);
                    it = active.erase(it);
                    any_aborted = true;
                } else {
                    ++it;
                }
            }
            if (any_aborted) continue;  // shares change once the aborted flows leave
        }

        // Absolute time of the next event; completions are the only relative ones.
        double t_next = next < order.size() ? flows[order[next]].arrival_time : unbounded;
        std::size_t finishing = active.size();
        for (std::size_t i = 0; i < active.size(); ++i) {
            const double fin = t + active[i].remaining / (active[i].rate * share);
            if (fin < t_next) {
                t_next = fin;
                finishing = i;
            }
            if (active[i].abort_at < t_next) {
                t_next = active[i].abort_at;
                finishing = active.size();
            }
        }
        t_next = std::max(t_next, t);

        const double dt = t_next - t;
        for (auto& a : active) {
            const bits moved = a.rate * share * dt;
            a.sent += moved;
            a.remaining -= moved;
        }
        t = t_next;

        for (std::size_t i = active.size(); i-- > 0;) {
            const Active& a = active[i];
            if (i == finishing || a.remaining <= 1e-12 * flows[a.index].size) {
                retire(a, false);
                active.erase(active.begin() + static_cast<std::ptrdiff_t>(i));
            }
        }
    }

    for (auto& r : realized)
        if (r) result.flows.push_back(*r);
    return result;
}

/// Parses "<kind> key=value ..." as used in configuration files, e.g.
/// "exponential mean=5e4", "pareto shape=2.5 mean=10", "lognormal mean=1 sigma=0.5".
inline Distribution parse_distribution(const std::string& text, const std::string& field) {
    std::istringstream in(text);
    std::string kind;
    in >> kind;
    std::map<std::string, double> params;
    for (std::string tok; in >> tok;) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw config_error(field, "expected key=value, got '" + tok + "'");
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        double v = 0;
        const auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
        if (ec != std::errc{} || p != val.data() + val.size())
            throw config_error(field, "non-numeric parameter '" + tok + "'");
        params[key] = v;
    }
    auto need = [&](const char* key) {
        const auto it = params.find(key);
        if (it == params.end()) throw config_error(field, std::string("missing parameter '") + key + "'");
        return it->second;
    };

    Distribution d;
    if (kind == "constant") d = Distribution::constant(need("value"));
    else if (kind == "exponential") d = Distribution::exponential(need("mean"));
    else if (kind == "pareto") {
        const double shape = need("shape");
        if (params.count("scale")) d = Distribution::pareto(shape, params["scale"]);
        else {
            if (!(shape > 1.0)) throw config_error(field, "pareto shape must exceed 1 for a finite mean");
            d = Distribution::pareto_with_mean(shape, need("mean"));
        }
    } else if (kind == "lognormal") {
        const double sigma = need("sigma");
        if (params.count("mu")) d = Distribution::lognormal(params["mu"], sigma);
        else {
            const double m = need("mean");
            if (!(m > 0)) throw config_error(field, "lognormal mean must be positive");
            d = Distribution::lognormal_with_mean(m, sigma);
        }
    } else {
        throw config_error(field, "unknown distribution '" + kind + "'");
    }
    d.validate(field);
    return d;
}

/// Reads the key = value simulation configuration. Lines starting with '#' are
/// comments. Required keys: lambda, size, duration, horizon. Optional: interval,
/// seed, capacity, min_rate, patience, stationary_start, label.
inline SimConfig parse_sim_config(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw parse_error(lineno, "expected 'key = value'");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    auto number = [&](const std::string& key) -> std::optional<double> {
        const auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        double v = 0;
        const auto& s = it->second;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) throw config_error(key, "not a number: '" + s + "'");
        return v;
    };
    auto required = [&](const std::string& key) {
        if (!kv.count(key)) throw config_error(key, "missing required key");
        return kv[key];
    };

    SimConfig c;
    const auto lambda = number("lambda");
    if (!lambda) throw config_error("lambda", "missing required key");
    c.lambda = *lambda;
    c.size = parse_distribution(required("size"), "size");
    c.duration = parse_distribution(required("duration"), "duration");
    const auto horizon = number("horizon");
    if (!horizon) throw config_error("horizon", "missing required key");
    c.horizon = *horizon;
    if (auto v = number("interval")) c.sample_interval = *v;
    if (kv.count("seed")) {
        const auto& s = kv["seed"];
        std::uint64_t seed = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), seed);
        if (ec != std::errc{} || p != s.data() + s.size()) throw config_error("seed", "not an unsigned integer");
        c.seed = seed;
    }
    if (auto v = number("capacity")) c.capacity = *v;
    const auto min_rate = number("min_rate");
    const auto patience = number("patience");
    if (min_rate || patience) {
        if (!c.capacity) throw config_error("min_rate", "impatience requires a capacity");
        c.impatience = Impatience{min_rate.value_or(0.0), patience.value_or(0.0)};
    }
    if (kv.count("stationary_start")) {
        const auto& s = kv["stationary_start"];
        if (s == "true" || s == "1") c.stationary_start = true;
        else if (s == "false" || s == "0") c.stationary_start = false;
        else throw config_error("stationary_start", "expected true or false");
    }
    if (kv.count("label")) c.label = kv["label"];
    validate(c);
    return c;
}

inline SimConfig load_sim_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_sim_config(ss.str());
}

/// Flows (with the overload transform when a capacity is configured) sampled over the horizon.
inline std::vector<TrafficSample> simulate(const SimConfig& config) {
    auto flows = generate_flows(config);
    if (config.capacity) flows = apply_overload(flows, *config.capacity, config.impatience).flows;
    return sample_traffic(flows, config.sample_interval, config.horizon);
}

}  // namespace flowdiag::sim
