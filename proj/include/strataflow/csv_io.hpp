#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "strataflow/errors.hpp"
#include "strataflow/flow.hpp"
#include "strataflow/point_cloud.hpp"
#include "strataflow/version.hpp"

namespace strataflow {

/// '#'-prefixed header lines stamped on every emitted file: tool version,
/// config hash, seeds. Keeps runs self-describing and byte-reproducible.
struct Provenance {
    std::vector<std::string> lines;

    static Provenance make(std::uint64_t config_hash, std::uint64_t seed) {
        Provenance p;
        p.lines.push_back(std::string("strataflow ") + kVersion);
        p.lines.push_back("config_hash = " + hex64(config_hash));
        p.lines.push_back("seed = " + std::to_string(seed));
        return p;
    }

    void write_to(std::ostream& os) const {
        for (const auto& l : lines) os << "# " << l << "\n";
    }
};

/// Shortest decimal that round-trips the double exactly.
inline std::string format_double(double v) {
    char buf[40];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse number '" + s + "' " + where);
    }
}

} // namespace detail

/// Cloud CSV: '#' provenance lines, then header x0,...,x{d-1}, then one row
/// of d coordinates per point.
inline PointCloud read_cloud(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open cloud file '" + path.string() + "'");
    std::string line;
    int lineno = 0;
    std::string header;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        header = t;
        break;
    }
    if (header.empty()) throw ConfigError("cloud file '" + path.string() + "' has no header");
    const auto cols = detail::split(header, ',');
    const int d = static_cast<int>(cols.size());
    for (int a = 0; a < d; ++a)
        if (detail::trim(cols[a]) != "x" + std::to_string(a))
            throw ConfigError("cloud file '" + path.string() + "': header must be x0,...,x" +
                              std::to_string(d - 1) + " (line " + std::to_string(lineno) + ")");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto parts = detail::split(t, ',');
        if (static_cast<int>(parts.size()) != d)
            throw ConfigError("cloud file '" + path.string() + "': line " +
                              std::to_string(lineno) + " has " + std::to_string(parts.size()) +
                              " columns, expected " + std::to_string(d));
        std::vector<double> row;
        for (const auto& p : parts)
            row.push_back(detail::parse_double(detail::trim(p), "in '" + path.string() +
                                                                    "' line " +
                                                                    std::to_string(lineno)));
        rows.push_back(row);
    }
    if (rows.empty()) throw ConfigError("cloud file '" + path.string() + "' has no points");
    PointCloud q = PointCloud::from_points(rows);
    if (!q.is_finite())
        throw ConfigError("cloud file '" + path.string() + "' contains non-finite coordinates");
    return q;
}

inline void write_cloud(const std::filesystem::path& path, const PointCloud& q,
                        const Provenance& prov) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write cloud file '" + path.string() + "'");
    prov.write_to(out);
    for (int a = 0; a < q.d; ++a) out << (a ? ",x" : "x") << a;
    out << "\n";
    for (int i = 0; i < q.n; ++i) {
        for (int a = 0; a < q.d; ++a) out << (a ? "," : "") << format_double(q.point(i)[a]);
        out << "\n";
    }
}

/// Trajectory CSV: columns t,point_index,x0..x{d-1}, one block per sample
/// time, '#' metadata first.
inline void write_trajectory(const std::filesystem::path& path, const Trajectory& traj,
                             const Provenance& prov) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write trajectory file '" + path.string() + "'");
    prov.write_to(out);
    const int d = traj.samples.front().second.d;
    out << "t,point_index";
    for (int a = 0; a < d; ++a) out << ",x" << a;
    out << "\n";
    for (const auto& [t, cloud] : traj.samples) {
        for (int i = 0; i < cloud.n; ++i) {
            out << format_double(t) << "," << i;
            for (int a = 0; a < d; ++a) out << "," << format_double(cloud.point(i)[a]);
            out << "\n";
        }
    }
}

/// Schedule file: one leg per line, `field_index sign duration`, with the
/// field index 1-based on disk.
inline void write_schedule(const std::filesystem::path& path, const Schedule& schedule,
                           const Provenance& prov) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write schedule file '" + path.string() + "'");
    prov.write_to(out);
    for (const auto& leg : schedule.legs)
        out << (leg.field_index + 1) << " " << (leg.sign > 0 ? "+1" : "-1") << " "
            << format_double(leg.duration) << "\n";
}

inline Schedule read_schedule(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open schedule file '" + path.string() + "'");
    Schedule s;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::istringstream is(t);
        int index = 0, sign = 0;
        double duration = 0.0;
        if (!(is >> index >> sign >> duration))
            throw ConfigError("schedule file '" + path.string() + "': malformed line " +
                              std::to_string(lineno));
        std::string rest;
        if (is >> rest)
            throw ConfigError("schedule file '" + path.string() + "': trailing data on line " +
                              std::to_string(lineno));
        if (index < 1)
            throw ConfigError("schedule file '" + path.string() +
                              "': field index is 1-based (line " + std::to_string(lineno) + ")");
        if (sign != 1 && sign != -1)
            throw ConfigError("schedule file '" + path.string() + "': sign must be +1 or -1 (line " +
                              std::to_string(lineno) + ")");
        s.legs.push_back({index - 1, sign, duration});
    }
    return s;
}

} // namespace strataflow
