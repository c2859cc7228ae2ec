#pragma once

// Text helpers shared by the readers and writers: shortest round-trip number
// formatting and a minimal comma-separated table reader.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "tdgen/error.hpp"

namespace tdgen::fmt {

/// Shortest decimal text that parses back to exactly `v`. Infinities are
/// written as Inf / -Inf, the spelling the case format uses.
inline std::string number(double v) {
    if (std::isnan(v)) return "NaN";
    if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
    if (v == 0.0) return "0";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_number(std::string_view s) {
    if (s.empty()) return std::nullopt;
    bool neg = false;
    std::string_view body = s;
    if (body.front() == '+' || body.front() == '-') {
        neg = body.front() == '-';
        body.remove_prefix(1);
    }
    if (body == "Inf" || body == "inf" || body == "INF")
        return neg ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    if (body == "NaN" || body == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (body.empty() || body.front() == '+' || body.front() == '-') return std::nullopt;
    double v = 0.0;
    auto res = std::from_chars(body.data(), body.data() + body.size(), v);
    if (res.ec != std::errc() || res.ptr != body.data() + body.size()) return std::nullopt;
    return neg ? -v : v;
}

/// Picks a decimal representation of `converted` such that applying `inverse`
/// to it reproduces `original` exactly, preferring short text. Used when a
/// unit conversion sits between the model and the file.
template <class Inverse>
double snap(double converted, double original, Inverse inverse) {
    if (!std::isfinite(converted)) return converted;
    for (int digits = 12; digits <= 17; ++digits) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*g", digits, converted);
        double candidate = std::strtod(buf, nullptr);
        if (inverse(candidate) == original) return candidate;
    }
    double lo = converted, hi = converted;
    for (int step = 0; step < 8; ++step) {
        if (inverse(lo) == original) return lo;
        if (inverse(hi) == original) return hi;
        lo = std::nextafter(lo, -std::numeric_limits<double>::infinity());
        hi = std::nextafter(hi, std::numeric_limits<double>::infinity());
    }
    return converted;
}

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// Reads a headed CSV; blank lines and lines starting with '#' are skipped.
/// Throws ParseError if the header differs from `expected_header` (when
/// given) or a row has the wrong number of fields.
inline CsvTable parse_csv(const std::string& text, const std::vector<std::string>& expected_header = {}) {
    CsvTable table;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        auto trimmed = trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        auto fields = split(trimmed, ',');
        if (!have_header) {
            if (!expected_header.empty() && fields != expected_header)
                throw ParseError("unexpected CSV header '" + trimmed + "'", line_no, 1);
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size())
            throw ParseError("expected " + std::to_string(table.header.size()) + " fields, found " +
                                 std::to_string(fields.size()),
                             line_no, 1);
        table.rows.push_back(std::move(fields));
    }
    if (!have_header && !expected_header.empty()) table.header = expected_header;
    return table;
}

inline double csv_number(const std::string& field, const char* column) {
    auto v = parse_number(field);
    if (!v) throw StructureError(std::string("column '") + column + "': not a number: '" + field + "'");
    return *v;
}

inline int csv_int(const std::string& field, const char* column) {
    double v = csv_number(field, column);
    if (v != std::floor(v)) throw StructureError(std::string("column '") + column + "': not an integer: '" + field + "'");
    return static_cast<int>(v);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << content;
}

}  // namespace tdgen::fmt
