#pragma once

// MATPOWER (version 2) case text: a parser for the declarative subset of the
// format, a deterministic writer, conversion to and from NetworkCase, the
// sidecar files that carry what the format cannot (tap changers, generator
// classes, area names) and the exporter registry.

#include <cctype>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tdgen/error.hpp"
#include "tdgen/format.hpp"
#include "tdgen/netmodel.hpp"

namespace tdgen {

using NumericTable = std::vector<std::vector<double>>;

/// An `mpc.<name> = ...;` assignment this reader does not interpret. The
/// right-hand side is kept as source text.
struct RawEntry {
    std::string name;
    std::string text;

    bool operator==(const RawEntry&) const = default;
};

struct CaseDocument {
    std::string function_name = "mpc_case";
    std::string version = "2";
    double base_mva = 100.0;
    NumericTable bus;
    NumericTable gen;
    NumericTable branch;
    NumericTable gencost;
    std::vector<std::string> bus_names;
    std::vector<RawEntry> extra;

    bool operator==(const CaseDocument&) const = default;
};

namespace col {
// bus
inline constexpr int BUS_I = 0, BUS_TYPE = 1, PD = 2, QD = 3, GS = 4, BS = 5, BUS_AREA = 6, VM = 7, VA = 8,
                     BASE_KV = 9, ZONE = 10, VMAX = 11, VMIN = 12;
// gen
inline constexpr int GEN_BUS = 0, PG = 1, QG = 2, QMAX = 3, QMIN = 4, VG = 5, MBASE = 6, GEN_STATUS = 7, PMAX = 8,
                     PMIN = 9;
// branch
inline constexpr int F_BUS = 0, T_BUS = 1, BR_R = 2, BR_X = 3, BR_B = 4, RATE_A = 5, RATE_B = 6, RATE_C = 7,
                     TAP = 8, SHIFT = 9, BR_STATUS = 10, ANGMIN = 11, ANGMAX = 12;
// gencost
inline constexpr int MODEL = 0, STARTUP = 1, SHUTDOWN = 2, NCOST = 3, COST = 4;
}  // namespace col

inline constexpr std::size_t kBusColumns = 13;
inline constexpr std::size_t kGenColumns = 21;
inline constexpr std::size_t kBranchColumns = 13;

// ---------------------------------------------------------------------------
// Parser

namespace detail {

class CaseLexer {
public:
    explicit CaseLexer(std::string_view text) : text_(text) {}

    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return eof() ? '\0' : text_[pos_]; }
    std::size_t pos() const { return pos_; }
    int line() const { return line_; }
    int column() const { return column_; }

    char get() {
        char c = text_[pos_++];
        if (c == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        return c;
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, line_, column_); }

    void skip_comment() {
        while (!eof() && peek() != '\n') get();
    }

    /// Skips blanks, newlines and comments.
    void skip_space() {
        while (!eof()) {
            char c = peek();
            if (c == '%') {
                skip_comment();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                get();
            } else {
                break;
            }
        }
    }

    void skip_inline_space() {
        while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) get();
    }

    std::string identifier() {
        if (eof() || !(std::isalpha(static_cast<unsigned char>(peek())) || peek() == '_')) fail("expected identifier");
        std::string id;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) id += get();
        return id;
    }

    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        get();
    }

    /// Consumes an optional statement terminator.
    void end_statement() {
        skip_inline_space();
        if (peek() == ';') get();
        skip_inline_space();
        if (peek() == '%') skip_comment();
        if (!eof() && peek() != '\n') fail("unexpected text after statement");
    }

    std::string quoted() {
        expect('\'');
        std::string s;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            char c = get();
            if (c == '\'') {
                if (peek() == '\'') {
                    get();
                    s += '\'';
                    continue;
                }
                break;
            }
            s += c;
        }
        return s;
    }

    std::string_view slice(std::size_t from, std::size_t to) const { return text_.substr(from, to - from); }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int column_ = 1;
};

inline bool is_cell_delim(char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == ',' || c == ';' || c == ']' || c == '%';
}

inline NumericTable parse_matrix(CaseLexer& lx) {
    lx.expect('[');
    NumericTable rows;
    std::vector<double> row;
    int row_line = lx.line(), row_col = lx.column();
    auto finish_row = [&] {
        if (row.empty()) return;
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError("malformed matrix literal: row has " + std::to_string(row.size()) + " columns, expected " +
                                 std::to_string(rows.front().size()),
                             row_line, row_col);
        rows.push_back(std::move(row));
        row.clear();
    };
    while (true) {
        if (lx.eof()) lx.fail("malformed matrix literal: missing ']'");
        char c = lx.peek();
        if (c == ' ' || c == '\t' || c == '\r' || c == ',') {
            lx.get();
        } else if (c == '%') {
            lx.skip_comment();
        } else if (c == '\n' || c == ';') {
            lx.get();
            finish_row();
        } else if (c == ']') {
            lx.get();
            finish_row();
            return rows;
        } else {
            if (row.empty()) {
                row_line = lx.line();
                row_col = lx.column();
            }
            int line = lx.line(), column = lx.column();
            std::size_t start = lx.pos();
            while (!lx.eof() && !is_cell_delim(lx.peek())) lx.get();
            auto token = lx.slice(start, lx.pos());
            auto v = fmt::parse_number(token);
            if (!v) throw ParseError("non-numeric cell '" + std::string(token) + "'", line, column);
            row.push_back(*v);
        }
    }
}

inline std::vector<std::string> parse_string_cells(CaseLexer& lx) {
    lx.expect('{');
    std::vector<std::string> cells;
    while (true) {
        if (lx.eof()) lx.fail("malformed cell array: missing '}'");
        char c = lx.peek();
        if (c == '}') {
            lx.get();
            return cells;
        }
        if (c == '%') {
            lx.skip_comment();
        } else if (std::isspace(static_cast<unsigned char>(c)) || c == ';' || c == ',') {
            lx.get();
        } else if (c == '\'') {
            cells.push_back(lx.quoted());
        } else {
            lx.fail("expected quoted string in cell array");
        }
    }
}

/// Captures an uninterpreted right-hand side up to its terminating ';' (or
/// end of line) at bracket depth zero.
inline std::string capture_raw(CaseLexer& lx) {
    std::size_t start = lx.pos();
    int depth = 0;
    while (!lx.eof()) {
        char c = lx.peek();
        if (c == '\'') {
            lx.quoted();
            continue;
        }
        if (c == '%') {
            lx.skip_comment();
            continue;
        }
        if (c == '[' || c == '{' || c == '(') ++depth;
        if (c == ']' || c == '}' || c == ')') {
            if (--depth < 0) lx.fail("unbalanced bracket");
        }
        if (depth == 0 && (c == ';' || c == '\n')) break;
        lx.get();
    }
    if (depth != 0) lx.fail("unterminated bracket in assignment");
    auto text = fmt::trim(lx.slice(start, lx.pos()));
    if (text.empty()) lx.fail("empty assignment");
    return text;
}

inline void check_table(const NumericTable& t, const char* name, std::size_t min_cols) {
    for (const auto& row : t)
        if (row.size() < min_cols)
            throw StructureError(std::string("mpc.") + name + " rows need at least " + std::to_string(min_cols) +
                                 " columns, found " + std::to_string(row.size()));
}

}  // namespace detail

inline CaseDocument parse_case(std::string_view text) {
    CaseDocument doc;
    detail::CaseLexer lx(text);
    bool have_bus = false, have_gen = false, have_branch = false, have_base = false;

    while (true) {
        lx.skip_space();
        if (lx.eof()) break;
        int line = lx.line(), column = lx.column();
        std::string head = lx.identifier();
        if (head == "function") {
            lx.skip_inline_space();
            if (lx.identifier() != "mpc") lx.fail("expected 'mpc' output in function header");
            lx.skip_inline_space();
            lx.expect('=');
            lx.skip_inline_space();
            doc.function_name = lx.identifier();
            lx.end_statement();
            continue;
        }
        if (head == "end") {
            lx.end_statement();
            continue;
        }
        if (head != "mpc") throw ParseError("unsupported statement '" + head + "'", line, column);
        lx.expect('.');
        std::string field = lx.identifier();
        lx.skip_inline_space();
        lx.expect('=');
        lx.skip_space();

        if (field == "version") {
            if (lx.peek() == '\'') {
                doc.version = lx.quoted();
            } else {
                doc.version = detail::capture_raw(lx);
            }
        } else if (field == "baseMVA") {
            int l = lx.line(), c = lx.column();
            auto raw = detail::capture_raw(lx);
            auto v = fmt::parse_number(raw);
            if (!v) throw ParseError("baseMVA is not a number: '" + raw + "'", l, c);
            doc.base_mva = *v;
            have_base = true;
        } else if (field == "bus" || field == "gen" || field == "branch" || field == "gencost") {
            if (lx.peek() != '[') lx.fail("malformed matrix literal: expected '['");
            auto table = detail::parse_matrix(lx);
            if (field == "bus") {
                doc.bus = std::move(table);
                have_bus = true;
            } else if (field == "gen") {
                doc.gen = std::move(table);
                have_gen = true;
            } else if (field == "branch") {
                doc.branch = std::move(table);
                have_branch = true;
            } else {
                doc.gencost = std::move(table);
            }
        } else if (field == "bus_name") {
            if (lx.peek() != '{') lx.fail("malformed cell array: expected '{'");
            doc.bus_names = detail::parse_string_cells(lx);
        } else {
            doc.extra.push_back({field, detail::capture_raw(lx)});
        }
        lx.end_statement();
    }

    if (!have_bus) throw StructureError("missing mpc.bus table");
    if (!have_gen) throw StructureError("missing mpc.gen table");
    if (!have_branch) throw StructureError("missing mpc.branch table");
    if (!have_base) throw StructureError("missing mpc.baseMVA");

    detail::check_table(doc.bus, "bus", kBusColumns);
    detail::check_table(doc.gen, "gen", 10);
    detail::check_table(doc.branch, "branch", 11);
    for (auto& row : doc.gen)
        if (row.size() < kGenColumns) row.resize(kGenColumns, 0.0);
    for (auto& row : doc.branch) {
        if (row.size() < kBranchColumns) {
            row.resize(kBranchColumns);
            row[col::ANGMIN] = -360.0;
            row[col::ANGMAX] = 360.0;
        }
    }
    for (const auto& row : doc.gencost)
        if (row.size() < 4 || row.size() < 4 + static_cast<std::size_t>(std::max(0.0, row[col::NCOST])))
            throw StructureError("mpc.gencost row shorter than its NCOST field");
    if (!doc.bus_names.empty() && doc.bus_names.size() != doc.bus.size())
        throw StructureError("mpc.bus_name has " + std::to_string(doc.bus_names.size()) + " entries for " +
                             std::to_string(doc.bus.size()) + " buses");
    return doc;
}

// ---------------------------------------------------------------------------
// Writer

namespace detail {

inline void emit_table(std::ostringstream& out, const char* name, const char* header, const NumericTable& t) {
    out << header << '\n';
    out << "mpc." << name << " = [\n";
    for (const auto& row : t) {
        for (std::size_t i = 0; i < row.size(); ++i) out << '\t' << fmt::number(row[i]);
        out << ";\n";
    }
    out << "];\n";
}

inline std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) {
        if (c == '\'') q += '\'';
        q += c;
    }
    return q + "'";
}

}  // namespace detail

inline std::string emit_case(const CaseDocument& doc) {
    std::ostringstream out;
    out << "function mpc = " << doc.function_name << '\n';
    out << "%% MATPOWER case data written by tdgen\n\n";
    out << "%% MATPOWER Case Format : Version " << doc.version << '\n';
    out << "mpc.version = " << detail::quote(doc.version) << ";\n\n";
    out << "%%-----  Power Flow Data  -----%%\n";
    out << "%% system MVA base\n";
    out << "mpc.baseMVA = " << fmt::number(doc.base_mva) << ";\n\n";
    detail::emit_table(out, "bus",
                       "%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin", doc.bus);
    out << '\n';
    detail::emit_table(out, "gen",
                       "%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\tPc1\tPc2\t"
                       "Qc1min\tQc1max\tQc2min\tQc2max\tramp_agc\tramp_10\tramp_30\tramp_q\tapf",
                       doc.gen);
    out << '\n';
    detail::emit_table(out, "branch",
                       "%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\t"
                       "angmax",
                       doc.branch);
    if (!doc.gencost.empty()) {
        out << "\n%%-----  OPF Data  -----%%\n";
        detail::emit_table(out, "gencost",
                           "%% generator cost data\n%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0", doc.gencost);
    }
    if (!doc.bus_names.empty()) {
        out << "\n%% bus names\nmpc.bus_name = {\n";
        for (const auto& n : doc.bus_names) out << '\t' << detail::quote(n) << ";\n";
        out << "};\n";
    }
    for (const auto& e : doc.extra) out << "\nmpc." << e.name << " = " << e.text << ";\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Sidecar files

struct OltcAnnotation {
    std::size_t branch_index = 1;  // 1-based row of the branch table
    BusId controlled_bus = 0;
    double v_set = 1.0;
    double deadband = 0.02;
    int tap = 0;
    int tap_min = -16;
    int tap_max = 16;
    double tap_step = 0.00625;

    bool operator==(const OltcAnnotation&) const = default;
};

using OltcAnnotations = std::vector<OltcAnnotation>;

inline const std::vector<std::string>& oltc_csv_header() {
    static const std::vector<std::string> h{"branch_index", "controlled_bus", "v_set", "deadband",
                                            "tap",          "tap_min",        "tap_max", "tap_step"};
    return h;
}

inline OltcAnnotations parse_oltc_csv(const std::string& text) {
    auto table = fmt::parse_csv(text, oltc_csv_header());
    OltcAnnotations out;
    for (const auto& r : table.rows) {
        OltcAnnotation a;
        int branch = fmt::csv_int(r[0], "branch_index");
        if (branch < 1) throw StructureError("branch_index must be >= 1");
        a.branch_index = static_cast<std::size_t>(branch);
        a.controlled_bus = fmt::csv_int(r[1], "controlled_bus");
        a.v_set = fmt::csv_number(r[2], "v_set");
        a.deadband = fmt::csv_number(r[3], "deadband");
        a.tap = fmt::csv_int(r[4], "tap");
        a.tap_min = fmt::csv_int(r[5], "tap_min");
        a.tap_max = fmt::csv_int(r[6], "tap_max");
        a.tap_step = fmt::csv_number(r[7], "tap_step");
        out.push_back(a);
    }
    return out;
}

inline std::string emit_oltc_csv(const OltcAnnotations& rows) {
    std::ostringstream out;
    const auto& h = oltc_csv_header();
    for (std::size_t i = 0; i < h.size(); ++i) out << (i ? "," : "") << h[i];
    out << '\n';
    for (const auto& a : rows) {
        out << a.branch_index << ',' << a.controlled_bus << ',' << fmt::number(a.v_set) << ','
            << fmt::number(a.deadband) << ',' << a.tap << ',' << a.tap_min << ',' << a.tap_max << ','
            << fmt::number(a.tap_step) << '\n';
    }
    return out.str();
}

/// Template metadata: area names, generator classes and the feeder map.
struct CaseMeta {
    std::map<int, std::string> areas;
    std::map<std::size_t, GenKind> gen_kinds;  // 1-based generator row
    std::map<BusId, int> feeders;

    bool operator==(const CaseMeta&) const = default;
};

inline CaseMeta parse_meta_csv(const std::string& text) {
    auto table = fmt::parse_csv(text, {"kind", "key", "value"});
    CaseMeta meta;
    for (const auto& r : table.rows) {
        if (r[0] == "area") {
            meta.areas[fmt::csv_int(r[1], "key")] = r[2];
        } else if (r[0] == "gen") {
            int idx = fmt::csv_int(r[1], "key");
            if (idx < 1) throw StructureError("generator index must be >= 1");
            meta.gen_kinds[static_cast<std::size_t>(idx)] = gen_kind_from_string(r[2]);
        } else if (r[0] == "feeder") {
            meta.feeders[fmt::csv_int(r[1], "key")] = fmt::csv_int(r[2], "value");
        } else {
            throw StructureError("unknown meta record kind '" + r[0] + "'");
        }
    }
    return meta;
}

inline std::string emit_meta_csv(const CaseMeta& meta) {
    std::ostringstream out;
    out << "kind,key,value\n";
    for (const auto& [id, name] : meta.areas) out << "area," << id << ',' << name << '\n';
    for (const auto& [idx, kind] : meta.gen_kinds) out << "gen," << idx << ',' << to_string(kind) << '\n';
    for (const auto& [bus, feeder] : meta.feeders) out << "feeder," << bus << ',' << feeder << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Document <-> model

namespace detail {

inline double deg_to_rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / std::numbers::pi; }

inline BusKind bus_kind_from_code(double code, bool& in_service) {
    in_service = true;
    switch (static_cast<int>(code)) {
        case 1: return BusKind::PQ;
        case 2: return BusKind::PV;
        case 3: return BusKind::Slack;
        case 4: in_service = false; return BusKind::PQ;
        default: throw StructureError("invalid bus type " + fmt::number(code));
    }
}

inline double bus_kind_code(const Bus& b) {
    if (!b.in_service) return 4;
    switch (b.kind) {
        case BusKind::PQ: return 1;
        case BusKind::PV: return 2;
        case BusKind::Slack: return 3;
    }
    return 1;
}

}  // namespace detail

inline NetworkCase to_network(const CaseDocument& doc, const OltcAnnotations& oltc = {}, const CaseMeta& meta = {}) {
    NetworkCase c;
    const double base = doc.base_mva;
    if (!(base > 0.0)) throw StructureError("baseMVA must be positive");
    c.base_mva = base;
    c.area_names = meta.areas;

    for (std::size_t i = 0; i < doc.bus.size(); ++i) {
        const auto& r = doc.bus[i];
        Bus b;
        b.id = static_cast<BusId>(r[col::BUS_I]);
        b.kind = detail::bus_kind_from_code(r[col::BUS_TYPE], b.in_service);
        b.p_load = r[col::PD] / base;
        b.q_load = r[col::QD] / base;
        b.g_shunt = r[col::GS] / base;
        b.b_shunt = r[col::BS] / base;
        b.area = static_cast<int>(r[col::BUS_AREA]);
        b.v_mag = r[col::VM];
        b.v_ang = detail::deg_to_rad(r[col::VA]);
        b.base_kv = r[col::BASE_KV];
        b.zone = static_cast<int>(r[col::ZONE]);
        b.v_max = r[col::VMAX];
        b.v_min = r[col::VMIN];
        if (!doc.bus_names.empty()) b.name = doc.bus_names[i];
        if (auto f = meta.feeders.find(b.id); f != meta.feeders.end()) b.feeder = f->second;
        c.buses.push_back(std::move(b));
    }

    for (std::size_t i = 0; i < doc.gen.size(); ++i) {
        const auto& r = doc.gen[i];
        Generator g;
        g.bus_id = static_cast<BusId>(r[col::GEN_BUS]);
        g.p = r[col::PG] / base;
        g.q = r[col::QG] / base;
        g.q_max = r[col::QMAX] / base;
        g.q_min = r[col::QMIN] / base;
        g.v_set = r[col::VG];
        g.in_service = r[col::GEN_STATUS] > 0;
        g.p_max = r[col::PMAX] / base;
        g.p_min = r[col::PMIN] / base;
        if (auto it = meta.gen_kinds.find(i + 1); it != meta.gen_kinds.end()) g.kind = it->second;
        g.controllable = g.kind != GenKind::DnPv;
        if (i < doc.gencost.size()) {
            const auto& cr = doc.gencost[i];
            if (cr[col::MODEL] != 2) throw ModelError("generator " + std::to_string(i + 1) + ": only polynomial costs are supported");
            const int n = static_cast<int>(cr[col::NCOST]);
            if (n > 3) throw ModelError("generator " + std::to_string(i + 1) + ": cost polynomial above degree 2");
            double coef[3] = {0.0, 0.0, 0.0};  // c2 c1 c0
            for (int k = 0; k < n; ++k) coef[3 - n + k] = cr[col::COST + k];
            g.cost = {coef[0], coef[1], coef[2]};
        }
        c.generators.push_back(g);
    }

    for (const auto& r : doc.branch) {
        Branch br;
        br.from_bus = static_cast<BusId>(r[col::F_BUS]);
        br.to_bus = static_cast<BusId>(r[col::T_BUS]);
        br.r = r[col::BR_R];
        br.x = r[col::BR_X];
        br.b_charging = r[col::BR_B];
        br.rate_a = r[col::RATE_A] / base;
        br.ratio = r[col::TAP] == 0.0 ? 1.0 : r[col::TAP];
        br.phase_shift = detail::deg_to_rad(r[col::SHIFT]);
        br.in_service = r[col::BR_STATUS] > 0;
        c.branches.push_back(br);
    }

    for (const auto& a : oltc) {
        if (a.branch_index < 1 || a.branch_index > c.branches.size())
            throw ModelError("OLTC annotation references absent branch " + std::to_string(a.branch_index));
        OltcTransformer t;
        t.branch = a.branch_index - 1;
        t.controlled_bus = a.controlled_bus;
        t.v_set = a.v_set;
        t.deadband = a.deadband;
        t.tap = a.tap;
        t.tap_min = a.tap_min;
        t.tap_max = a.tap_max;
        t.tap_step = a.tap_step;
        if (t.tap < t.tap_min || t.tap > t.tap_max)
            throw ModelError("OLTC annotation for branch " + std::to_string(a.branch_index) + ": tap out of range");
        if (!BusLookup(c).find(t.controlled_bus))
            throw ModelError("OLTC annotation controls absent bus " + std::to_string(t.controlled_bus));
        c.branches[t.branch].ratio = t.ratio();
        c.oltcs.push_back(t);
    }
    return c;
}

struct CaseBundle {
    CaseDocument doc;
    OltcAnnotations oltc;
    CaseMeta meta;
};

inline CaseBundle from_network(const NetworkCase& c, const std::string& function_name = "mpc_case") {
    CaseBundle out;
    auto& doc = out.doc;
    doc.function_name = function_name;
    const double base = c.base_mva;
    doc.base_mva = base;
    auto mw = [base](double pu) { return fmt::snap(pu * base, pu, [base](double v) { return v / base; }); };
    auto deg = [](double rad) { return fmt::snap(detail::rad_to_deg(rad), rad, detail::deg_to_rad); };

    bool any_name = false;
    for (const auto& b : c.buses) any_name = any_name || !b.name.empty();
    for (const auto& b : c.buses) {
        doc.bus.push_back({static_cast<double>(b.id), detail::bus_kind_code(b), mw(b.p_load), mw(b.q_load),
                           mw(b.g_shunt), mw(b.b_shunt), static_cast<double>(b.area), b.v_mag, deg(b.v_ang),
                           b.base_kv, static_cast<double>(b.zone), b.v_max, b.v_min});
        if (any_name) doc.bus_names.push_back(b.name);
        if (b.feeder != 0) out.meta.feeders[b.id] = b.feeder;
    }
    for (std::size_t i = 0; i < c.generators.size(); ++i) {
        const auto& g = c.generators[i];
        std::vector<double> row(kGenColumns, 0.0);
        row[col::GEN_BUS] = g.bus_id;
        row[col::PG] = mw(g.p);
        row[col::QG] = mw(g.q);
        row[col::QMAX] = mw(g.q_max);
        row[col::QMIN] = mw(g.q_min);
        row[col::VG] = g.v_set;
        row[col::MBASE] = base;
        row[col::GEN_STATUS] = g.in_service ? 1 : 0;
        row[col::PMAX] = mw(g.p_max);
        row[col::PMIN] = mw(g.p_min);
        doc.gen.push_back(std::move(row));
        doc.gencost.push_back({2, 0, 0, 3, g.cost.c2, g.cost.c1, g.cost.c0});
        if (g.kind != GenKind::TnUnit) out.meta.gen_kinds[i + 1] = g.kind;
    }
    std::vector<bool> has_oltc(c.branches.size(), false);
    for (const auto& t : c.oltcs)
        if (t.branch < has_oltc.size()) has_oltc[t.branch] = true;
    for (std::size_t k = 0; k < c.branches.size(); ++k) {
        const auto& br = c.branches[k];
        const bool plain = br.ratio == 1.0 && !has_oltc[k];
        doc.branch.push_back({static_cast<double>(br.from_bus), static_cast<double>(br.to_bus), br.r, br.x,
                              br.b_charging, mw(br.rate_a), 0.0, 0.0, plain ? 0.0 : br.ratio, deg(br.phase_shift),
                              br.in_service ? 1.0 : 0.0, -360.0, 360.0});
    }
    for (const auto& t : c.oltcs) {
        out.oltc.push_back({t.branch + 1, t.controlled_bus, t.v_set, t.deadband, t.tap, t.tap_min, t.tap_max,
                            t.tap_step});
    }
    out.meta.areas = c.area_names;
    return out;
}

// ---------------------------------------------------------------------------
// Bundles on disk: <dir>/case.m, case.oltc.csv, meta.csv

inline NetworkCase load_bundle(const std::filesystem::path& dir, CaseMeta* meta_out = nullptr) {
    namespace fs = std::filesystem;
    fs::path case_path = dir / "case.m";
    if (!fs::exists(case_path)) throw Error("no case.m in " + dir.string());
    auto doc = parse_case(fmt::read_file(case_path.string()));
    OltcAnnotations oltc;
    if (fs::exists(dir / "case.oltc.csv")) oltc = parse_oltc_csv(fmt::read_file((dir / "case.oltc.csv").string()));
    CaseMeta meta;
    if (fs::exists(dir / "meta.csv")) meta = parse_meta_csv(fmt::read_file((dir / "meta.csv").string()));
    if (meta_out) *meta_out = meta;
    return to_network(doc, oltc, meta);
}

// ---------------------------------------------------------------------------
// Exporters

/// Named output files produced by an exporter.
using FileSet = std::map<std::string, std::string>;

using Exporter = std::function<FileSet(const NetworkCase&)>;

inline FileSet export_matpower(const NetworkCase& c) {
    auto bundle = from_network(c);
    return {{"case.m", emit_case(bundle.doc)},
            {"case.oltc.csv", emit_oltc_csv(bundle.oltc)},
            {"meta.csv", emit_meta_csv(bundle.meta)}};
}

/// Flat CSV bundle in engineering units (MW, Mvar, kV, degrees).
inline FileSet export_flat(const NetworkCase& c) {
    const double base = c.base_mva;
    auto n = [](double v) { return fmt::number(v); };
    std::ostringstream buses, branches, gens, oltc;
    buses << "id,name,type,area,base_kv,p_load_mw,q_load_mvar,g_shunt_mw,b_shunt_mvar,v_pu,v_kv,angle_deg,v_min_pu,"
             "v_max_pu\n";
    for (const auto& b : c.buses) {
        buses << b.id << ',' << b.name << ',' << detail::bus_kind_code(b) << ',' << b.area << ',' << n(b.base_kv) << ','
              << n(b.p_load * base) << ',' << n(b.q_load * base) << ',' << n(b.g_shunt * base) << ','
              << n(b.b_shunt * base) << ',' << n(b.v_mag) << ',' << n(b.v_mag * b.base_kv) << ','
              << n(detail::rad_to_deg(b.v_ang)) << ',' << n(b.v_min) << ',' << n(b.v_max) << '\n';
    }
    branches << "index,from,to,r_pu,x_pu,b_pu,rate_mva,ratio,shift_deg,in_service\n";
    for (std::size_t k = 0; k < c.branches.size(); ++k) {
        const auto& br = c.branches[k];
        branches << k + 1 << ',' << br.from_bus << ',' << br.to_bus << ',' << n(br.r) << ',' << n(br.x) << ','
                 << n(br.b_charging) << ',' << n(br.rate_a * base) << ',' << n(br.ratio) << ','
                 << n(detail::rad_to_deg(br.phase_shift)) << ',' << (br.in_service ? 1 : 0) << '\n';
    }
    gens << "index,bus,class,p_mw,q_mvar,p_min_mw,p_max_mw,q_min_mvar,q_max_mvar,v_set_pu,in_service\n";
    for (std::size_t i = 0; i < c.generators.size(); ++i) {
        const auto& g = c.generators[i];
        gens << i + 1 << ',' << g.bus_id << ',' << to_string(g.kind) << ',' << n(g.p * base) << ',' << n(g.q * base)
             << ',' << n(g.p_min * base) << ',' << n(g.p_max * base) << ',' << n(g.q_min * base) << ','
             << n(g.q_max * base) << ',' << n(g.v_set) << ',' << (g.in_service ? 1 : 0) << '\n';
    }
    BusLookup lookup(c);
    oltc << "branch_index,controlled_bus,v_set_kv,deadband_kv,tap,tap_min,tap_max,tap_step\n";
    for (const auto& t : c.oltcs) {
        const double kv = c.buses[lookup.at(t.controlled_bus)].base_kv;
        oltc << t.branch + 1 << ',' << t.controlled_bus << ',' << n(t.v_set * kv) << ',' << n(t.deadband * kv) << ','
             << t.tap << ',' << t.tap_min << ',' << t.tap_max << ',' << n(t.tap_step) << '\n';
    }
    return {{"buses.csv", buses.str()},
            {"branches.csv", branches.str()},
            {"generators.csv", gens.str()},
            {"oltc.csv", oltc.str()}};
}

class ExporterRegistry {
public:
    /// Registry preloaded with the "matpower" and "flat" exporters.
    static ExporterRegistry with_builtins() {
        ExporterRegistry r;
        r.register_exporter("matpower", export_matpower);
        r.register_exporter("flat", export_flat);
        return r;
    }

    void register_exporter(const std::string& name, Exporter exporter) { exporters_[name] = std::move(exporter); }

    bool contains(const std::string& name) const { return exporters_.count(name) > 0; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [name, _] : exporters_) out.push_back(name);
        return out;
    }

    FileSet run(const NetworkCase& c, const std::string& name) const {
        auto it = exporters_.find(name);
        if (it == exporters_.end()) {
            std::string known;
            for (const auto& n : names()) known += (known.empty() ? "" : ", ") + n;
            throw Error("unknown exporter '" + name + "' (registered: " + known + ")");
        }
        return it->second(c);
    }

private:
    std::map<std::string, Exporter> exporters_;
};

inline void write_files(const FileSet& files, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, content] : files) fmt::write_file((dir / name).string(), content);
}

}  // namespace tdgen
