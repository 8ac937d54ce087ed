#pragma once

// Sample files, router summaries and the embedded reference bin tables.
//
// Sample CSV layout (bit-exact):
//
//   # version=1
//   # unit=bps            (or Mbps)
//   # source=<label>
//   timestamp,active_flows,rate
//   1800,17489,113100000
//
// Numbers are written in shortest round-trip form.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "flowdiag/model.hpp"

namespace flowdiag::ingest {

inline constexpr std::string_view csv_header = "timestamp,active_flows,rate";

struct SampleFileHeader {
    int version = 1;
    rate_unit unit = rate_unit::bps;
    std::string source_label;
};

struct SampleFile {
    SampleFileHeader header;
    std::vector<TrafficSample> samples;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

/// Shortest round-trip text; plain decimal notation below 1e15.
inline std::string format_number(double v) {
    char buf[512];
    const auto fmt = std::abs(v) < 1e15 ? std::chars_format::fixed : std::chars_format::general;
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, fmt);
    return std::string(buf, p);
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace detail

inline SampleFile read_samples_csv(std::istream& in) {
    SampleFile file;
    bool have_version = false, have_unit = false, have_header = false;
    std::size_t lineno = 0;

    for (std::string raw; std::getline(in, raw);) {
        ++lineno;
        const auto line = detail::trim(raw);
        if (line.empty()) continue;

        if (!have_header) {
            if (line.front() == '#') {
                const auto body = detail::trim(line.substr(1));
                const auto eq = body.find('=');
                if (eq == std::string_view::npos) continue;  // free-form comment
                const auto key = detail::trim(body.substr(0, eq));
                const auto val = detail::trim(body.substr(eq + 1));
                if (key == "version") {
                    if (!detail::parse_number(val, file.header.version))
                        throw parse_error(lineno, "version is not an integer");
                    if (file.header.version != 1)
                        throw parse_error(lineno, "unsupported version " + std::string(val));
                    have_version = true;
                } else if (key == "unit") {
                    if (val != "bps" && val != "Mbps")
                        throw parse_error(lineno, "unit must be bps or Mbps, got '" + std::string(val) + "'");
                    file.header.unit = parse_unit(val);
                    have_unit = true;
                } else if (key == "source") {
                    file.header.source_label = std::string(val);
                }
                continue;
            }
            if (line != csv_header)
                throw parse_error(lineno, "missing header line '" + std::string(csv_header) + "'");
            if (!have_unit) throw parse_error(lineno, "missing '# unit=' declaration before header");
            if (!have_version) throw parse_error(lineno, "missing '# version=' declaration before header");
            have_header = true;
            continue;
        }

        if (line.front() == '#') continue;
        std::string_view fields[3];
        std::size_t n = 0;
        std::string_view rest = line;
        while (n < 3) {
            const auto comma = rest.find(',');
            fields[n++] = rest.substr(0, comma);
            if (comma == std::string_view::npos) {
                rest = {};
                break;
            }
            rest.remove_prefix(comma + 1);
        }
        if (n != 3 || !rest.empty())
            throw parse_error(lineno, "expected 3 fields timestamp,active_flows,rate");

        TrafficSample s;
        std::int64_t flows = 0;
        double rate = 0;
        if (!detail::parse_number(fields[0], s.timestamp) || !std::isfinite(s.timestamp))
            throw parse_error(lineno, "timestamp is not numeric");
        if (!detail::parse_number(fields[1], flows))
            throw parse_error(lineno, "active_flows is not an integer");
        if (!detail::parse_number(fields[2], rate) || !std::isfinite(rate))
            throw parse_error(lineno, "rate is not numeric");
        if (flows < 0) throw parse_error(lineno, "active_flows must be >= 0");
        if (rate < 0) throw parse_error(lineno, "rate must be >= 0");
        s.active_flows = static_cast<flow_count>(flows);
        s.total_rate = to_bps(rate, file.header.unit);
        file.samples.push_back(s);
    }
    if (!have_header) throw parse_error(lineno, "missing header line '" + std::string(csv_header) + "'");
    return file;
}

inline SampleFile read_sample_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error("cannot open sample file '" + path + "'");
    return read_samples_csv(in);
}

inline std::vector<TrafficSample> read_samples_csv(const std::string& path) {
    return read_sample_file(path).samples;
}

inline void write_samples_csv(std::span<const TrafficSample> samples, std::ostream& out,
                              rate_unit unit = rate_unit::bps, std::string_view source = "") {
    if (unit != rate_unit::bps && unit != rate_unit::mbps)
        throw error("sample files are written in bps or Mbps");
    if (!std::is_sorted(samples.begin(), samples.end(),
                        [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; }))
        throw error("write_samples_csv: samples must be sorted by timestamp");

    out << "# version=1\n# unit=" << unit_name(unit) << "\n# source=" << source << '\n'
        << csv_header << '\n';
    for (const auto& s : samples)
        out << detail::format_number(s.timestamp) << ',' << s.active_flows << ','
            << detail::format_number(from_bps(s.total_rate, unit)) << '\n';
}

inline void write_samples_csv(std::span<const TrafficSample> samples, const std::string& path,
                              rate_unit unit = rate_unit::bps, std::string_view source = "") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot write sample file '" + path + "'");
    write_samples_csv(samples, out, unit, source);
    if (!out) throw error("I/O error writing '" + path + "'");
}

struct RouterSummary {
    flow_count active_flows = 0;
    bits_per_second total_rate = 0;

    TrafficSample at(seconds timestamp) const { return {timestamp, active_flows, total_rate}; }
};

/// Extracts N and B from a router summary:
///
///   summary    = { line } ;
///   line       = active | throughput | other ;
///   active     = "active flows" ":" integer ;
///   throughput = "throughput" ":" number unit ;
///   unit       = "bps" | "Kbps" | "Mbps" | "Gbps" ;
///
/// Keys are case-insensitive, whitespace around tokens is ignored and other lines
/// are skipped. Errors name the missing or malformed field.
inline RouterSummary parse_router_summary(std::string_view text) {
    RouterSummary out;
    bool have_flows = false, have_rate = false;
    std::size_t lineno = 0;
    std::istringstream in{std::string(text)};
    for (std::string raw; std::getline(in, raw);) {
        ++lineno;
        const auto line = detail::trim(raw);
        const auto colon = line.find(':');
        if (colon == std::string_view::npos) continue;
        const auto key = detail::lower(detail::trim(line.substr(0, colon)));
        const auto value = detail::trim(line.substr(colon + 1));

        if (key == "active flows") {
            std::int64_t n = 0;
            if (!detail::parse_number(value, n) || n < 0)
                throw parse_error(lineno, "active flows: expected a non-negative integer");
            out.active_flows = static_cast<flow_count>(n);
            have_flows = true;
        } else if (key == "throughput") {
            const auto space = value.find_first_of(" \t");
            if (space == std::string_view::npos) throw parse_error(lineno, "throughput: missing unit");
            double v = 0;
            if (!detail::parse_number(value.substr(0, space), v) || v < 0)
                throw parse_error(lineno, "throughput: expected a non-negative number");
            try {
                out.total_rate = to_bps(v, parse_unit(detail::trim(value.substr(space))));
            } catch (const error&) {
                throw parse_error(lineno, "throughput: unknown unit");
            }
            have_rate = true;
        }
    }
    if (!have_flows) throw parse_error(0, "missing field: active flows");
    if (!have_rate) throw parse_error(0, "missing field: throughput");
    return out;
}

/// Reference per-bin tables of two backbone routers. Rates are in bits/second.
/// Bin bounds follow the listed flow-count ranges; the 40000-50000 bin of the
/// first table and the 8000-9000 bin of the second are missing from the range
/// lists and were inferred from the row means. Occupancy is unknown.
inline std::vector<BinStats> load_fixture(std::string_view name) {
    auto row = [](std::size_t i, double lo, double hi, double n, double b, double sb, double p,
                  double sp) { return BinStats{i, lo, hi, n, b, sb, p, sp, 0, true}; };
    if (name == "dataset1") {
        return {
            row(1, 15000, 20000, 17489, 113.1e6, 23.1e6, 6784, 1386),
            row(2, 20000, 25000, 23260, 126.0e6, 21.4e6, 5682, 965),
            row(3, 25000, 30000, 27007, 152.0e6, 39.2e6, 5628, 1452),
            row(4, 30000, 40000, 34902, 156.7e6, 26.9e6, 4990, 770),
            row(5, 40000, 50000, 45104, 163.9e6, 33.9e6, 3634, 752),
            row(6, 50000, 60000, 55019, 176.3e6, 33.2e6, 3205, 604),
            row(7, 60000, unbounded, 64778, 215.4e6, 42.2e6, 3325, 652),
        };
    }
    if (name == "dataset2") {
        return {
            row(1, 5000, 6000, 5446, 15.42e6, 2.25e6, 2843, 413),
            row(2, 6000, 7000, 6531, 17.11e6, 2.45e6, 2364, 377),
            row(3, 7000, 8000, 7508, 17.74e6, 2.35e6, 2364, 313),
            row(4, 8000, 9000, 8370, 18.92e6, 2.24e6, 2261, 268),
            row(5, 9000, 10000, 9443, 20.67e6, 3.81e6, 2190, 404),
            row(6, 10000, unbounded, 15495, 28.05e6, 5.40e6, 1811, 349),
        };
    }
    throw error("unknown fixture '" + std::string(name) + "' (expected dataset1 or dataset2)");
}

/// Bin table CSV: bin_index,n_lo,n_hi,mean_n,mean_rate,sigma_rate,mean_perf,sigma_perf,sample_count.
/// mean_rate and sigma_rate are in `unit`, per-flow performance always in bps,
/// an unbounded n_hi is written as "inf".
inline void write_bins_csv(std::span<const BinStats> bins, std::ostream& out,
                           rate_unit unit = rate_unit::bps, std::string_view source = "") {
    out << "# version=1\n# unit=" << unit_name(unit) << "\n# source=" << source << '\n'
        << "bin_index,n_lo,n_hi,mean_n,mean_rate,sigma_rate,mean_perf,sigma_perf,sample_count\n";
    for (const auto& b : bins) {
        out << b.bin_index << ',' << detail::format_number(b.n_lo) << ','
            << (std::isinf(b.n_hi) ? std::string("inf") : detail::format_number(b.n_hi)) << ','
            << detail::format_number(b.mean_n) << ','
            << detail::format_number(from_bps(b.mean_rate, unit)) << ','
            << detail::format_number(from_bps(b.sigma_rate, unit)) << ','
            << detail::format_number(b.mean_perf) << ',' << detail::format_number(b.sigma_perf) << ','
            << b.sample_count << '\n';
    }
}

}  // namespace flowdiag::ingest
