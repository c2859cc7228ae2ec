#pragma once

// Per-unit steady-state network model shared by every other module.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "tdgen/error.hpp"

namespace tdgen {

using BusId = int;

enum class BusKind { PQ, PV, Slack };

enum class GenKind { TnUnit, DnControllable, DnPv };

struct Bus {
    BusId id = 0;
    BusKind kind = BusKind::PQ;
    double p_load = 0.0;  // pu
    double q_load = 0.0;  // pu
    double g_shunt = 0.0;
    double b_shunt = 0.0;
    double v_mag = 1.0;
    double v_ang = 0.0;  // rad
    double base_kv = 1.0;
    double v_max = 1.1;
    double v_min = 0.9;
    int area = 1;
    int zone = 1;
    int feeder = 0;  // template feeder number, 0 if none
    std::string name;
    bool in_service = true;

    bool operator==(const Bus&) const = default;
};

/// Quadratic cost in money per MW^2, per MW and constant.
struct QuadraticCost {
    double c2 = 0.0;
    double c1 = 0.0;
    double c0 = 0.0;

    double operator()(double p_mw) const { return (c2 * p_mw + c1) * p_mw + c0; }

    bool operator==(const QuadraticCost&) const = default;
};

struct Generator {
    BusId bus_id = 0;
    double p = 0.0;
    double q = 0.0;
    double p_min = 0.0;
    double p_max = 0.0;
    double q_min = 0.0;
    double q_max = 0.0;
    double v_set = 1.0;
    bool controllable = true;
    GenKind kind = GenKind::TnUnit;
    QuadraticCost cost;
    bool in_service = true;

    bool operator==(const Generator&) const = default;
};

struct Branch {
    BusId from_bus = 0;
    BusId to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0;
    double ratio = 1.0;
    double phase_shift = 0.0;  // rad
    double rate_a = 0.0;       // pu, 0 = unlimited
    bool in_service = true;

    bool is_transformer() const { return ratio != 1.0 || phase_shift != 0.0; }

    bool operator==(const Branch&) const = default;
};

/// Discrete tap changer acting on one branch. The branch ratio always equals
/// 1 + tap * tap_step; use set_tap() to move it.
struct OltcTransformer {
    std::size_t branch = 0;
    BusId controlled_bus = 0;
    double v_set = 1.0;
    double deadband = 0.02;
    int tap = 0;
    int tap_min = -16;
    int tap_max = 16;
    double tap_step = 0.00625;

    double ratio() const { return ratio_for(tap); }
    double ratio_for(int position) const { return 1.0 + position * tap_step; }
    double band_low() const { return v_set - deadband / 2.0; }
    double band_high() const { return v_set + deadband / 2.0; }

    bool operator==(const OltcTransformer&) const = default;
};

struct NetworkCase {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Generator> generators;
    std::vector<Branch> branches;
    std::vector<OltcTransformer> oltcs;
    std::map<int, std::string> area_names;

    bool operator==(const NetworkCase&) const = default;
};

/// Id -> position lookup over a case's bus table.
class BusLookup {
public:
    explicit BusLookup(const NetworkCase& c) {
        index_.reserve(c.buses.size());
        for (std::size_t i = 0; i < c.buses.size(); ++i) {
            index_.emplace(c.buses[i].id, i);
            if (!c.buses[i].name.empty()) by_name_.emplace(c.buses[i].name, i);
        }
    }

    std::optional<std::size_t> find(BusId id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t at(BusId id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw ModelError("unknown bus id " + std::to_string(id));
        return it->second;
    }

    std::optional<std::size_t> find_name(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) return std::nullopt;
        return it->second;
    }

private:
    std::unordered_map<BusId, std::size_t> index_;
    std::unordered_map<std::string, std::size_t> by_name_;
};

// ---------------------------------------------------------------------------
// Validation

enum class IssueCode {
    DuplicateBusId,
    MissingSlack,
    MultipleSlack,
    DanglingReference,
    IslandCount,
    VoltageLimits,
    BaseKv,
    ZeroImpedance,
    BranchRatio,
    OltcRange,
    OltcRatioMismatch,
    OltcParameters,
    PvGenerator,
};

struct ValidationIssue {
    IssueCode code;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool ok() const { return issues.empty(); }

    bool has(IssueCode code) const {
        return std::any_of(issues.begin(), issues.end(),
                           [code](const ValidationIssue& i) { return i.code == code; });
    }
};

namespace detail {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t i) {
        while (parent_[i] != i) {
            parent_[i] = parent_[parent_[i]];
            i = parent_[i];
        }
        return i;
    }

    void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace detail

/// Island membership (root index per bus) over in-service buses and branches.
/// Out-of-service buses map to themselves.
inline std::vector<std::size_t> island_roots(const NetworkCase& c) {
    BusLookup lookup(c);
    detail::DisjointSets sets(c.buses.size());
    for (const auto& br : c.branches) {
        if (!br.in_service) continue;
        auto f = lookup.find(br.from_bus);
        auto t = lookup.find(br.to_bus);
        if (!f || !t) continue;
        if (!c.buses[*f].in_service || !c.buses[*t].in_service) continue;
        sets.unite(*f, *t);
    }
    std::vector<std::size_t> roots(c.buses.size());
    for (std::size_t i = 0; i < c.buses.size(); ++i) roots[i] = sets.find(i);
    return roots;
}

inline ValidationReport validate(const NetworkCase& c) {
    ValidationReport report;
    auto add = [&](IssueCode code, std::string msg) { report.issues.push_back({code, std::move(msg)}); };

    std::set<BusId> seen;
    for (const auto& b : c.buses) {
        if (!seen.insert(b.id).second) add(IssueCode::DuplicateBusId, "duplicate bus id " + std::to_string(b.id));
        if (!(b.v_min < b.v_max))
            add(IssueCode::VoltageLimits, "bus " + std::to_string(b.id) + ": v_min must be below v_max");
        if (!(b.base_kv > 0.0)) add(IssueCode::BaseKv, "bus " + std::to_string(b.id) + ": base_kv must be positive");
    }

    BusLookup lookup(c);
    for (std::size_t k = 0; k < c.branches.size(); ++k) {
        const auto& br = c.branches[k];
        for (BusId end : {br.from_bus, br.to_bus}) {
            if (!lookup.find(end))
                add(IssueCode::DanglingReference,
                    "branch " + std::to_string(k + 1) + " references missing bus " + std::to_string(end));
        }
        if (br.in_service && br.x == 0.0 && br.r == 0.0)
            add(IssueCode::ZeroImpedance, "branch " + std::to_string(k + 1) + " has zero impedance");
        if (!(br.ratio > 0.0)) add(IssueCode::BranchRatio, "branch " + std::to_string(k + 1) + " ratio must be positive");
    }
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        const auto& gen = c.generators[g];
        if (!lookup.find(gen.bus_id))
            add(IssueCode::DanglingReference,
                "generator " + std::to_string(g + 1) + " references missing bus " + std::to_string(gen.bus_id));
        if (gen.kind == GenKind::DnPv && (gen.q != 0.0 || gen.controllable))
            add(IssueCode::PvGenerator, "generator " + std::to_string(g + 1) + ": PV units run at unity power factor");
    }
    for (std::size_t k = 0; k < c.oltcs.size(); ++k) {
        const auto& t = c.oltcs[k];
        const std::string tag = "oltc " + std::to_string(k + 1);
        if (t.branch >= c.branches.size()) {
            add(IssueCode::DanglingReference, tag + " references missing branch " + std::to_string(t.branch + 1));
        } else if (std::abs(c.branches[t.branch].ratio - t.ratio()) > 1e-12) {
            add(IssueCode::OltcRatioMismatch, tag + ": branch ratio differs from 1 + tap*tap_step");
        }
        if (!lookup.find(t.controlled_bus))
            add(IssueCode::DanglingReference,
                tag + " controls missing bus " + std::to_string(t.controlled_bus));
        if (t.tap < t.tap_min || t.tap > t.tap_max) add(IssueCode::OltcRange, tag + ": tap outside [tap_min, tap_max]");
        if (!(t.deadband > 0.0) || !(t.tap_step > 0.0))
            add(IssueCode::OltcParameters, tag + ": deadband and tap_step must be positive");
    }

    // Islands and slack buses per island.
    auto roots = island_roots(c);
    std::map<std::size_t, int> slack_per_island;
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        if (!c.buses[i].in_service) continue;
        auto& count = slack_per_island[roots[i]];
        if (c.buses[i].kind == BusKind::Slack) ++count;
    }
    if (slack_per_island.size() > 1)
        add(IssueCode::IslandCount, std::to_string(slack_per_island.size()) + " islands (expected 1)");
    for (const auto& [root, count] : slack_per_island) {
        if (count == 0) add(IssueCode::MissingSlack, "missing slack in island of bus " + std::to_string(c.buses[root].id));
        if (count > 1) add(IssueCode::MultipleSlack, "multiple slack buses in island of bus " + std::to_string(c.buses[root].id));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Aggregates

struct PowerPair {
    double p = 0.0;
    double q = 0.0;
};

inline PowerPair total_load(const NetworkCase& c) {
    PowerPair sum;
    for (const auto& b : c.buses) {
        if (!b.in_service) continue;
        sum.p += b.p_load;
        sum.q += b.q_load;
    }
    return sum;
}

inline bool is_dg(const Generator& g) { return g.kind == GenKind::DnControllable || g.kind == GenKind::DnPv; }

inline double dg_output(const NetworkCase& c) {
    double p = 0.0;
    for (const auto& g : c.generators)
        if (g.in_service && is_dg(g)) p += g.p;
    return p;
}

/// Ratio of distributed-generation active output to active demand.
inline double penetration_level(const NetworkCase& c) {
    const double load = total_load(c).p;
    if (!(load > 0.0)) throw ModelError("undefined penetration: case has no active load");
    return dg_output(c) / load;
}

// ---------------------------------------------------------------------------
// Mutators

inline void set_tap(NetworkCase& c, std::size_t oltc, int tap) {
    auto& t = c.oltcs.at(oltc);
    if (tap < t.tap_min || tap > t.tap_max)
        throw ModelError("tap " + std::to_string(tap) + " outside range of oltc " + std::to_string(oltc + 1));
    t.tap = tap;
    c.branches.at(t.branch).ratio = t.ratio();
}

/// Re-expresses every per-unit quantity on a new system base.
inline void rebase(NetworkCase& c, double new_base_mva) {
    if (!(new_base_mva > 0.0)) throw ModelError("base_mva must be positive");
    const double k = c.base_mva / new_base_mva;  // power scale
    for (auto& b : c.buses) {
        b.p_load *= k;
        b.q_load *= k;
        b.g_shunt *= k;
        b.b_shunt *= k;
    }
    for (auto& g : c.generators) {
        for (double* v : {&g.p, &g.q, &g.p_min, &g.p_max, &g.q_min, &g.q_max}) *v *= k;
    }
    for (auto& br : c.branches) {
        br.r /= k;
        br.x /= k;
        br.b_charging *= k;
        br.rate_a *= k;
    }
    c.base_mva = new_base_mva;
}

inline std::optional<std::size_t> slack_index(const NetworkCase& c) {
    for (std::size_t i = 0; i < c.buses.size(); ++i)
        if (c.buses[i].in_service && c.buses[i].kind == BusKind::Slack) return i;
    return std::nullopt;
}

inline const char* to_string(GenKind k) {
    switch (k) {
        case GenKind::TnUnit: return "tn";
        case GenKind::DnControllable: return "controllable";
        case GenKind::DnPv: return "pv";
    }
    return "tn";
}

inline GenKind gen_kind_from_string(const std::string& s) {
    if (s == "tn") return GenKind::TnUnit;
    if (s == "controllable") return GenKind::DnControllable;
    if (s == "pv") return GenKind::DnPv;
    throw ModelError("unknown generator class '" + s + "'");
}

}  // namespace tdgen
