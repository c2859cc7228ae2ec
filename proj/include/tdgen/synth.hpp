#pragma once

// Combined transmission/distribution synthesis: replaceable-load selection,
// DN hosting capacity, replication count, per-instance customization and
// assembly of the combined case.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tdgen/caseio.hpp"
#include "tdgen/netmodel.hpp"
#include "tdgen/oltc.hpp"
#include "tdgen/opf.hpp"
#include "tdgen/powerflow.hpp"

namespace tdgen {

struct SynthesisConfig {
    double penetration_level = 0.5;
    double generation_split = 0.5;  // share of DG power on controllable units
    bool constant_load = false;
    bool random = false;
    std::uint64_t rng_seed = 1;
    bool large_system = true;
    double oversize = 1.0;
    bool run_opf = false;
    std::string export_format = "matpower";
    std::pair<double, double> dn_v_limits{0.95, 1.05};
    double oltc_v_set = 1.03;

    double capacity_ceiling = 10.0;
    double capacity_tolerance = 1e-3;
    SolverOptions solver;
    int max_regulation_rounds = kDefaultRegulationRounds;
    int opf_rounds = 5;          // relaxation steps K
    double opf_initial_slack = 0.1;
    int jobs = 1;

    /// Throws ConfigError naming the first offending field.
    void validate() const {
        auto finite = [](double v) { return std::isfinite(v); };
        if (!finite(penetration_level) || penetration_level < 0.0)
            throw ConfigError("penetration_level", "must be a finite number >= 0");
        if (!finite(generation_split) || generation_split < 0.0 || generation_split > 1.0)
            throw ConfigError("generation_split", "must lie in [0, 1]");
        if (!finite(oversize) || oversize < 1.0) throw ConfigError("oversize", "must be >= 1.0");
        if (!(dn_v_limits.first < dn_v_limits.second) || dn_v_limits.first < 0.0)
            throw ConfigError("dn_v_limits", "need 0 <= v_min < v_max");
        if (!finite(oltc_v_set) || oltc_v_set <= 0.0) throw ConfigError("oltc_v_set", "must be positive");
        if (!(capacity_ceiling > 0.0) || !finite(capacity_ceiling))
            throw ConfigError("capacity_ceiling", "must be positive");
        if (!(capacity_tolerance > 0.0)) throw ConfigError("capacity_tolerance", "must be positive");
        if (!(solver.tolerance > 0.0)) throw ConfigError("pf_tolerance", "must be positive");
        if (solver.max_iterations < 1) throw ConfigError("pf_max_iterations", "must be >= 1");
        if (max_regulation_rounds < 0) throw ConfigError("max_regulation_rounds", "must be >= 0");
        if (opf_rounds < 1) throw ConfigError("opf_rounds", "must be >= 1");
        if (!(opf_initial_slack >= 0.0)) throw ConfigError("opf_initial_slack", "must be >= 0");
        if (jobs < 1) throw ConfigError("jobs", "must be >= 1");
        if (export_format.empty()) throw ConfigError("export_format", "must not be empty");
    }
};

// ---------------------------------------------------------------------------
// Randomness

/// Uniform stream for one (host bus, copy) pair. Draws are built from raw
/// 64-bit engine output so they do not depend on the standard library's
/// distribution implementation.
class RngStream {
public:
    RngStream(std::uint64_t seed, BusId host, int copy) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(host), static_cast<std::uint32_t>(copy)};
        engine_.seed(seq);
    }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Multiplier uniform on [1 - spread, 1 + spread).
    double perturbation(double spread) { return 1.0 + spread * (2.0 * uniform() - 1.0); }

private:
    std::mt19937_64 engine_;
};

inline constexpr double kRandomSpread = 0.05;

// ---------------------------------------------------------------------------
// Step A: loads to replace

struct ReplaceableLoad {
    BusId bus = 0;
    double p_load = 0.0;
    double q_load = 0.0;
    int area = 0;
};

inline std::optional<int> area_id(const NetworkCase& c, const std::string& name) {
    for (const auto& [id, n] : c.area_names)
        if (n == name) return id;
    return std::nullopt;
}

/// Large system: every load outside the Equiv area; otherwise only loads in
/// the Central area. Only buses with positive active load count.
inline std::vector<ReplaceableLoad> select_replaceable_loads(const NetworkCase& tn, bool large_system) {
    const auto equiv = area_id(tn, "Equiv");
    const auto central = area_id(tn, "Central");
    if (!large_system && !central) throw ModelError("no area named Central in the TN metadata");
    std::vector<ReplaceableLoad> out;
    for (const auto& b : tn.buses) {
        if (!b.in_service || !(b.p_load > 0.0)) continue;
        if (large_system ? (equiv && b.area == *equiv) : b.area != *central) continue;
        out.push_back({b.id, b.p_load, b.q_load, b.area});
    }
    if (out.empty()) throw ModelError("no replaceable loads in the TN");
    return out;
}

// ---------------------------------------------------------------------------
// Step B: hosting capacity and replication count

struct CapacityOptions {
    double ceiling = 10.0;
    double tolerance = 1e-3;
    SolverOptions solver;
    int max_rounds = kDefaultRegulationRounds;
};

struct CapacityResult {
    double max_scale = 0.0;
    BusId binding_bus = 0;    // worst bus just above max_scale; 0 when unbounded
    double p_capacity = 0.0;  // total DN active load at max_scale, pu
    bool unbounded_by_voltage = false;
    int evaluations = 0;

    std::string flag() const { return unbounded_by_voltage ? "unbounded-by-voltage" : ""; }
};

namespace detail {

inline void zero_dgs(NetworkCase& c) {
    for (auto& g : c.generators) {
        if (!is_dg(g)) continue;
        g.p = 0.0;
        g.q = 0.0;
    }
}

inline void set_source_voltage(NetworkCase& c, double v) {
    const auto s = slack_index(c);
    if (!s) throw ModelError("DN template has no slack bus");
    for (auto& g : c.generators)
        if (g.bus_id == c.buses[*s].id && !is_dg(g)) g.v_set = v;
    c.buses[*s].v_mag = v;
}

struct ScaleCheck {
    bool feasible = false;
    BusId worst_bus = 0;
};

/// Scales all loads of `dn` by `s`, regulates and checks voltage limits.
inline ScaleCheck check_scale(const NetworkCase& dn, double s, std::pair<double, double> limits,
                              const CapacityOptions& opts) {
    NetworkCase c = dn;
    for (auto& b : c.buses) {
        b.p_load *= s;
        b.q_load *= s;
    }
    PowerFlowSolution sol;
    try {
        SolverOptions o = opts.solver;
        o.flat_start = true;
        sol = regulate(c, o, opts.max_rounds).solution;
    } catch (const SolverError&) {
        return {false, 0};
    }
    ScaleCheck out{true, 0};
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        if (!c.buses[i].in_service) continue;
        const double v = sol.v_mag[i];
        const double excess = std::max(limits.first - v, v - limits.second);
        if (excess > 0.0) out.feasible = false;
        if (excess > worst) {
            worst = excess;
            out.worst_bus = c.buses[i].id;
        }
    }
    return out;
}

}  // namespace detail

/// Largest uniform load scale (constant power factor, DGs at zero, OLTC
/// regulation active) that keeps every bus voltage inside `v_limits`.
inline CapacityResult dn_max_capacity(const NetworkCase& dn_template, std::pair<double, double> v_limits,
                                      double source_v, const CapacityOptions& opts = {}) {
    NetworkCase base = dn_template;
    detail::zero_dgs(base);
    detail::set_source_voltage(base, source_v);
    const double base_load = total_load(base).p;
    if (!(base_load > 0.0)) throw ModelError("DN template has no active load");

    CapacityResult r;
    auto at_zero = detail::check_scale(base, 0.0, v_limits, opts);
    ++r.evaluations;
    if (!at_zero.feasible)
        throw ModelError("DN voltage limits violated even without load (bus " + std::to_string(at_zero.worst_bus) + ")");
    auto top = detail::check_scale(base, opts.ceiling, v_limits, opts);
    ++r.evaluations;
    if (top.feasible) {
        r.max_scale = opts.ceiling;
        r.unbounded_by_voltage = true;
        r.p_capacity = opts.ceiling * base_load;
        return r;
    }
    double lo = 0.0, hi = opts.ceiling;
    BusId binding = top.worst_bus;
    while (hi - lo > opts.tolerance) {
        const double mid = 0.5 * (lo + hi);
        auto chk = detail::check_scale(base, mid, v_limits, opts);
        ++r.evaluations;
        if (chk.feasible) {
            lo = mid;
        } else {
            hi = mid;
            binding = chk.worst_bus;
        }
    }
    r.max_scale = lo;
    r.binding_bus = binding;
    r.p_capacity = lo * base_load;
    return r;
}

/// ceil(load / capacity), at least one. Quotients within rounding noise of
/// an integer are not bumped to the next one.
inline int dn_count(double tn_p_load, double dn_capacity) {
    if (!(dn_capacity > 0.0)) throw ModelError("DN capacity must be positive");
    const double q = tn_p_load / dn_capacity;
    const double nearest = std::round(q);
    double n = std::abs(q - nearest) <= 1e-9 * std::max(1.0, q) ? nearest : std::ceil(q);
    return std::max(1, static_cast<int>(n));
}

// ---------------------------------------------------------------------------
// Step C: customization

struct DnInstance {
    NetworkCase network;  // customized replica, solved in isolation
    BusId host_tn_bus = 0;
    int copy_index = 0;
    double load_scale = 1.0;  // multiplier on the template loads
    int import_matching_iterations = 0;
    double base_load = 0.0;  // active load before any constant-load addition
    double penetration_used = 0.0;
    double split_used = 0.0;
    double realized_penetration = 0.0;
    std::vector<double> dg_allocation;  // per generator of `network`, pu
    double load_addition = 0.0;         // constant-load active increase, pu
    int constant_load_iterations = 0;
    double boundary_import = 0.0;  // active power drawn from the source, pu
    RegulationReport regulation;
};

inline std::size_t source_generator(const NetworkCase& dn) {
    const auto s = slack_index(dn);
    if (!s) throw ModelError("DN has no slack bus");
    for (std::size_t g = 0; g < dn.generators.size(); ++g)
        if (dn.generators[g].bus_id == dn.buses[*s].id && !is_dg(dn.generators[g])) return g;
    throw ModelError("DN slack bus has no source generator");
}

namespace detail {

inline double source_import(const NetworkCase& c, const PowerFlowSolution& sol) {
    const auto s = *slack_index(c);
    return sol.p_inj[s] + c.buses[s].p_load;
}

}  // namespace detail

/// Scales a DN so that, DGs off, it imports `target_p` from a source held at
/// `source_v`; places DGs per the configured penetration and split;
/// optionally raises the load to hold that import; regulates.
inline DnInstance customize_dn(const NetworkCase& dn, double target_p, const SynthesisConfig& cfg, RngStream& rng,
                               double source_v = 1.0) {
    DnInstance inst;
    inst.network = dn;
    auto& c = inst.network;
    detail::zero_dgs(c);
    detail::set_source_voltage(c, source_v);
    for (auto& t : c.oltcs) t.v_set = cfg.oltc_v_set;

    const double template_load = total_load(c).p;
    if (!(template_load > 0.0)) throw ModelError("DN template has no active load");
    if (!(target_p > 0.0)) throw ModelError("DN target load must be positive");

    // Scale loads (constant power factor) until the DN, DGs off, draws
    // target_p from its source: the host sees the aggregated load it replaces.
    SolverOptions opts = cfg.solver;
    opts.flat_start = true;
    std::vector<std::pair<double, double>> template_pq;
    for (const auto& b : c.buses) template_pq.emplace_back(b.p_load, b.q_load);
    auto apply_scale = [&](double s) {
        for (std::size_t i = 0; i < c.buses.size(); ++i) {
            c.buses[i].p_load = template_pq[i].first * s;
            c.buses[i].q_load = template_pq[i].second * s;
        }
    };
    double scale = target_p / template_load;
    constexpr int kMaxMatchIterations = 50;
    const double match_tol = 10.0 * cfg.solver.tolerance;  // imports are only as exact as the solve
    for (int it = 1;; ++it) {
        apply_scale(scale);
        auto r = regulate(c, opts, cfg.max_regulation_rounds);
        opts.flat_start = false;
        const double import = detail::source_import(c, r.solution);
        inst.import_matching_iterations = it;
        if (std::abs(import - target_p) <= match_tol) break;
        if (it == kMaxMatchIterations || !(import > 0.0))
            throw ModelError("could not scale the DN to import " + fmt::number(target_p) + " pu (last " +
                             fmt::number(import) + " pu)");
        scale *= target_p / import;
    }
    inst.load_scale = scale;
    inst.base_load = total_load(c).p;

    double pl = cfg.penetration_level, split = cfg.generation_split;
    if (cfg.random) {
        pl *= rng.perturbation(kRandomSpread);
        split = std::clamp(split * rng.perturbation(kRandomSpread), 0.0, 1.0);
    }
    inst.penetration_used = pl;
    inst.split_used = split;
    const double dg_total = pl * inst.base_load;

    std::vector<std::size_t> controllable, pv;
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        if (!c.generators[g].in_service) continue;
        if (c.generators[g].kind == GenKind::DnControllable) controllable.push_back(g);
        if (c.generators[g].kind == GenKind::DnPv) pv.push_back(g);
    }
    if (dg_total > 0.0 && controllable.empty() && pv.empty()) throw ModelError("DN template has no DG units");
    double to_controllable = split * dg_total;
    if (controllable.empty()) to_controllable = 0.0;
    if (pv.empty()) to_controllable = dg_total;
    const double to_pv = dg_total - to_controllable;
    for (auto g : controllable) c.generators[g].p = to_controllable / static_cast<double>(controllable.size());
    for (auto g : pv) c.generators[g].p = to_pv / static_cast<double>(pv.size());
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        const auto& gen = c.generators[g];
        if (is_dg(gen) && gen.p > gen.p_max * (1.0 + 1e-12))
            throw ModelError("DG allocation " + fmt::number(gen.p * c.base_mva) + " MW exceeds p_max " +
                             fmt::number(gen.p_max * c.base_mva) + " MW of generator " + std::to_string(g + 1) +
                             " at bus " + std::to_string(gen.bus_id));
    }
    inst.dg_allocation.resize(c.generators.size());
    for (std::size_t g = 0; g < c.generators.size(); ++g)
        inst.dg_allocation[g] = is_dg(c.generators[g]) ? c.generators[g].p : 0.0;
    inst.realized_penetration = dg_output(c) / inst.base_load;

    if (!cfg.constant_load) {
        auto r = regulate(c, opts, cfg.max_regulation_rounds);
        inst.regulation = std::move(r.report);
        inst.boundary_import = detail::source_import(c, r.solution);
        return inst;
    }

    // Raise active loads in proportion until the import is back at its pre-DG value.
    std::vector<double> base_p;
    for (const auto& b : c.buses) base_p.push_back(b.p_load);
    const double ref = target_p;
    double delta = dg_total;
    double import = 0.0;
    constexpr int kMaxIterations = 50;
    for (int it = 1; it <= kMaxIterations; ++it) {
        for (std::size_t i = 0; i < c.buses.size(); ++i) c.buses[i].p_load = base_p[i] * (1.0 + delta / inst.base_load);
        auto r = regulate(c, opts, cfg.max_regulation_rounds);
        opts.flat_start = false;
        import = detail::source_import(c, r.solution);
        inst.regulation = std::move(r.report);
        inst.constant_load_iterations = it;
        inst.load_addition = delta;
        inst.boundary_import = import;
        if (std::abs(import - ref) <= 1e-6 * ref) return inst;
        delta += ref - import;
    }
    if (std::abs(import - ref) > 0.005 * ref)
        throw ModelError("constant-load adjustment did not converge: import " + fmt::number(import) + " pu vs " +
                         fmt::number(ref) + " pu");
    return inst;
}

// ---------------------------------------------------------------------------
// Step D: assembly

struct BoundaryTie {
    std::size_t branch = 0;  // index in the combined case
    BusId host_tn_bus = 0;
    std::size_t instance = 0;
};

struct AssemblyOptions {
    SolverOptions solver;
    int max_rounds = kDefaultRegulationRounds;
    double tie_reactance = 1e-4;
};

struct AssemblyResult {
    NetworkCase network;
    std::optional<PowerFlowSolution> solution;  // empty when no instance was attached
    RegulationReport regulation;
    std::vector<BoundaryTie> ties;
    std::size_t tn_bus_count = 0;
};

inline std::string tn_bus_name(BusId id) { return "tn:" + std::to_string(id); }

inline std::string dn_bus_name(BusId host, int copy, BusId local) {
    return "dn:" + std::to_string(host) + ":" + std::to_string(copy) + ":" + std::to_string(local);
}

/// TN bus a combined-case bus belongs to: itself for TN buses, the host for
/// DN buses.
inline BusId owning_tn_bus(const AssemblyResult& a, std::size_t bus_index) {
    if (bus_index < a.tn_bus_count) return a.network.buses[bus_index].id;
    const auto& name = a.network.buses[bus_index].name;
    const auto first = name.find(':'), second = name.find(':', first + 1);
    return std::stoi(name.substr(first + 1, second - first - 1));
}

/// Replaces host aggregated loads with the solved DN instances (angles
/// shifted by the host angle, DN source removed, tie branch to the host)
/// and regulates the combined case. `tn` should carry its solved state.
inline AssemblyResult assemble_detailed(const NetworkCase& tn, const std::vector<DnInstance>& instances,
                                        const AssemblyOptions& opts = {}) {
    AssemblyResult out;
    out.network = tn;
    out.tn_bus_count = tn.buses.size();
    if (instances.empty()) return out;

    auto& c = out.network;
    BusLookup tn_lookup(tn);
    BusId tn_max = 0, dn_max = 0;
    for (const auto& b : tn.buses) tn_max = std::max(tn_max, b.id);
    for (const auto& inst : instances)
        for (const auto& b : inst.network.buses) dn_max = std::max(dn_max, b.id);
    BusId block = 1;
    while (block <= dn_max) block *= 10;
    const BusId start = (tn_max / block + 1) * block;

    for (auto& b : c.buses)
        if (b.name.empty()) b.name = tn_bus_name(b.id);

    for (std::size_t k = 0; k < instances.size(); ++k) {
        const auto& inst = instances[k];
        const auto& dn = inst.network;
        const auto host = tn_lookup.find(inst.host_tn_bus);
        if (!host) throw ModelError("instance host bus " + std::to_string(inst.host_tn_bus) + " is not in the TN");
        auto& host_bus = c.buses[*host];
        host_bus.p_load = 0.0;
        host_bus.q_load = 0.0;
        const double shift = host_bus.v_ang;
        const int host_area = host_bus.area;
        const BusId offset = start + static_cast<BusId>(k) * block;
        const auto dn_slack = slack_index(dn);
        if (!dn_slack) throw ModelError("DN instance has no slack bus");
        const BusId dn_root = dn.buses[*dn_slack].id;

        for (const auto& b : dn.buses) {
            Bus nb = b;
            nb.id = offset + b.id;
            nb.name = dn_bus_name(inst.host_tn_bus, inst.copy_index, b.id);
            nb.area = host_area;
            nb.v_ang = b.v_ang + shift;
            if (nb.kind == BusKind::Slack) nb.kind = BusKind::PQ;
            c.buses.push_back(std::move(nb));
        }
        for (const auto& g : dn.generators) {
            if (g.bus_id == dn_root && !is_dg(g)) continue;
            Generator ng = g;
            ng.bus_id = offset + g.bus_id;
            c.generators.push_back(std::move(ng));
        }
        const std::size_t branch0 = c.branches.size();
        for (const auto& br : dn.branches) {
            Branch nb = br;
            nb.from_bus = offset + br.from_bus;
            nb.to_bus = offset + br.to_bus;
            c.branches.push_back(std::move(nb));
        }
        for (const auto& t : dn.oltcs) {
            OltcTransformer nt = t;
            nt.branch = branch0 + t.branch;
            nt.controlled_bus = offset + t.controlled_bus;
            c.oltcs.push_back(nt);
        }
        Branch tie;
        tie.from_bus = inst.host_tn_bus;
        tie.to_bus = offset + dn_root;
        tie.x = opts.tie_reactance;
        out.ties.push_back({c.branches.size(), inst.host_tn_bus, k});
        c.branches.push_back(tie);
    }

    const auto report = validate(c);
    if (!report.ok()) throw ModelError("combined case is invalid: " + report.issues.front().message);

    try {
        auto r = regulate(c, opts.solver, opts.max_rounds);
        out.solution = std::move(r.solution);
        out.regulation = std::move(r.report);
    } catch (const RegulationError& e) {
        auto probe = solve(c, opts.solver);
        const BusId where = owning_tn_bus(out, probe.worst_bus);
        throw SolverError(std::string("combined power flow diverged (") + e.what() + "); largest mismatch near TN bus " +
                          std::to_string(where));
    }
    return out;
}

inline NetworkCase assemble(const NetworkCase& tn, const std::vector<DnInstance>& instances) {
    return assemble_detailed(tn, instances).network;
}

/// Net active power delivered from each host TN bus into its DNs, keyed by
/// host bus id (sum over that bus's ties).
inline std::map<BusId, double> host_imports(const AssemblyResult& a) {
    std::map<BusId, double> out;
    if (!a.solution) return out;
    for (const auto& t : a.ties) out[t.host_tn_bus] += a.solution->branch_flows[t.branch].p_from;
    return out;
}

// ---------------------------------------------------------------------------
// Full pipeline

struct HostSummary {
    BusId bus = 0;
    int area = 0;
    double p_load = 0.0;
    double q_load = 0.0;
    int count = 0;
};

struct SynthesisResult {
    NetworkCase tn;  // TN with its master solve applied
    PowerFlowSolution tn_solution;
    CapacityResult capacity;
    std::vector<HostSummary> hosts;
    std::vector<DnInstance> instances;
    AssemblyResult assembly;
    std::optional<RelaxationResult> opf;  // solution and per-round trace
    std::size_t dn_template_buses = 0;

    const NetworkCase& network() const { return assembly.network; }
};

namespace detail {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

/// Runs `work(i)` for i in [0, n) on up to `jobs` threads. The first
/// exception (lowest index) is rethrown after all workers stop.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& work) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                work(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

inline SynthesisResult generate(const NetworkCase& tn_in, const NetworkCase& dn_in, const SynthesisConfig& cfg) {
    cfg.validate();
    SynthesisResult res;
    res.dn_template_buses = dn_in.buses.size();

    // A: master solve of the TN
    res.tn = tn_in;
    detail::stage("tn-solve", [&] {
        SolverOptions o = cfg.solver;
        o.flat_start = true;
        res.tn_solution = solve(res.tn, o);
        if (!res.tn_solution.converged) throw SolverError("TN power flow did not converge");
        apply_solution(res.tn, res.tn_solution);
    });
    const auto loads = detail::stage("select-loads", [&] { return select_replaceable_loads(res.tn, cfg.large_system); });

    // B: capacity and counts
    NetworkCase dn = dn_in;
    for (auto& t : dn.oltcs) t.v_set = cfg.oltc_v_set;
    res.capacity = detail::stage("capacity", [&] {
        CapacityOptions o;
        o.ceiling = cfg.capacity_ceiling;
        o.tolerance = cfg.capacity_tolerance;
        o.solver = cfg.solver;
        o.max_rounds = cfg.max_regulation_rounds;
        const auto s = slack_index(dn);
        if (!s) throw ModelError("DN template has no slack bus");
        return dn_max_capacity(dn, cfg.dn_v_limits, dn.generators[source_generator(dn)].v_set, o);
    });
    detail::stage("count", [&] {
        const double divisor = res.capacity.p_capacity * cfg.oversize;
        for (const auto& l : loads) res.hosts.push_back({l.bus, l.area, l.p_load, l.q_load, dn_count(l.p_load, divisor)});
    });

    // C: customize every replica (independent, may run in parallel)
    struct Job {
        BusId host;
        int copy;
        double target;
        double source_v;
    };
    std::vector<Job> jobs;
    BusLookup tn_lookup(res.tn);
    for (const auto& h : res.hosts)
        for (int k = 0; k < h.count; ++k)
            jobs.push_back({h.bus, k, h.p_load / h.count, res.tn_solution.v_mag[tn_lookup.at(h.bus)]});
    res.instances.resize(jobs.size());
    detail::stage("customize", [&] {
        detail::parallel_for(jobs.size(), cfg.jobs, [&](std::size_t i) {
            const auto& j = jobs[i];
            RngStream rng(cfg.rng_seed, j.host, j.copy);
            try {
                auto inst = customize_dn(dn, j.target, cfg, rng, j.source_v);
                inst.host_tn_bus = j.host;
                inst.copy_index = j.copy;
                res.instances[i] = std::move(inst);
            } catch (const Error& e) {
                throw Error("DN " + std::to_string(j.copy) + " at TN bus " + std::to_string(j.host) + ": " + e.what());
            }
        });
    });

    // D: assembly, combined solve and regulation
    res.assembly = detail::stage("assemble", [&] {
        AssemblyOptions o;
        o.solver = cfg.solver;
        o.max_rounds = cfg.max_regulation_rounds;
        return assemble_detailed(res.tn, res.instances, o);
    });

    // E: optional OPF
    if (cfg.run_opf) {
        res.opf = detail::stage("opf", [&] {
            OpfProblem prob(res.assembly.network);
            RelaxationSchedule sched;
            sched.rounds = cfg.opf_rounds;
            sched.initial_slack = cfg.opf_initial_slack;
            auto r = solve_with_relaxation_traced(prob, sched);
            apply_opf(res.assembly.network, r.solution);
            return r;
        });
    }
    return res;
}

inline SynthesisResult generate(const std::filesystem::path& tn_path, const std::filesystem::path& dn_path,
                                const SynthesisConfig& cfg) {
    const auto tn = detail::stage("load-tn", [&] { return load_bundle(tn_path); });
    const auto dn = detail::stage("load-dn", [&] { return load_bundle(dn_path); });
    return generate(tn, dn, cfg);
}

}  // namespace tdgen
