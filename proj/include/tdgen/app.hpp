#pragma once

// Batch front end: flat key=value configuration, the generate run that
// writes an output bundle, and inspection of an existing bundle.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdgen/caseio.hpp"
#include "tdgen/error.hpp"
#include "tdgen/format.hpp"
#include "tdgen/synth.hpp"

namespace tdgen {

/// Everything a config file can set: the synthesis parameters plus the
/// template bundle names and the run id.
struct RunConfig {
    SynthesisConfig synthesis;
    std::string tn_template = "mini-tn";
    std::string dn_template = "mini-dn";
    std::string run_id = "default";
};

namespace detail {

inline double config_number(const std::string& key, const std::string& value) {
    auto v = fmt::parse_number(value);
    if (!v) throw ConfigError(key, "expected a number, got '" + value + "'");
    return *v;
}

inline long long config_integer(const std::string& key, const std::string& value) {
    const double v = config_number(key, value);
    if (v != std::floor(v) || std::abs(v) > 9.0e15) throw ConfigError(key, "expected an integer, got '" + value + "'");
    return static_cast<long long>(v);
}

inline bool config_bool(const std::string& key, const std::string& value) {
    std::string v = value;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw ConfigError(key, "expected true or false, got '" + value + "'");
}

inline std::string config_name(const std::string& key, const std::string& value) {
    if (value.empty()) throw ConfigError(key, "must not be empty");
    return value;
}

using FieldSetter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

inline const std::map<std::string, FieldSetter>& config_fields() {
    static const std::map<std::string, FieldSetter> fields = {
        {"penetration_level",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.penetration_level = config_number(k, v); }},
        {"generation_split",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.generation_split = config_number(k, v); }},
        {"constant_load",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.constant_load = config_bool(k, v); }},
        {"random", [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.random = config_bool(k, v); }},
        {"rng_seed",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             const auto s = config_integer(k, v);
             if (s < 0) throw ConfigError(k, "must be >= 0");
             c.synthesis.rng_seed = static_cast<std::uint64_t>(s);
         }},
        {"large_system",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.large_system = config_bool(k, v); }},
        {"oversize", [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.oversize = config_number(k, v); }},
        {"run_opf", [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.run_opf = config_bool(k, v); }},
        {"export_format",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.export_format = config_name(k, v); }},
        {"dn_v_min",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.dn_v_limits.first = config_number(k, v); }},
        {"dn_v_max",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.dn_v_limits.second = config_number(k, v); }},
        {"oltc_v_set",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.oltc_v_set = config_number(k, v); }},
        {"capacity_ceiling",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.capacity_ceiling = config_number(k, v); }},
        {"capacity_tolerance",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.capacity_tolerance = config_number(k, v); }},
        {"pf_tolerance",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.solver.tolerance = config_number(k, v); }},
        {"pf_max_iterations",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.synthesis.solver.max_iterations = static_cast<int>(config_integer(k, v));
         }},
        {"enforce_q_limits",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.solver.enforce_q_limits = config_bool(k, v); }},
        {"max_regulation_rounds",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.synthesis.max_regulation_rounds = static_cast<int>(config_integer(k, v));
         }},
        {"opf_rounds",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.synthesis.opf_rounds = static_cast<int>(config_integer(k, v));
         }},
        {"opf_initial_slack",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.opf_initial_slack = config_number(k, v); }},
        {"jobs",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.synthesis.jobs = static_cast<int>(config_integer(k, v)); }},
        {"tn_template", [](RunConfig& c, const std::string& k, const std::string& v) { c.tn_template = config_name(k, v); }},
        {"dn_template", [](RunConfig& c, const std::string& k, const std::string& v) { c.dn_template = config_name(k, v); }},
        {"run_id", [](RunConfig& c, const std::string& k, const std::string& v) { c.run_id = config_name(k, v); }},
    };
    return fields;
}

}  // namespace detail

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, repeated
/// keys and malformed values throw ConfigError naming the field.
inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    const auto& fields = detail::config_fields();
    std::map<std::string, int> seen;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = fmt::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no), "expected key = value");
        const std::string key = fmt::trim(std::string_view(line).substr(0, eq));
        const std::string value = fmt::trim(std::string_view(line).substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "missing key");
        auto it = fields.find(key);
        if (it == fields.end()) throw ConfigError(key, "unknown field (line " + std::to_string(line_no) + ")");
        if (seen.count(key))
            throw ConfigError(key, "set twice (lines " + std::to_string(seen[key]) + " and " + std::to_string(line_no) + ")");
        seen[key] = line_no;
        it->second(cfg, key, value);
    }
    return cfg;
}

inline nlohmann::ordered_json config_json(const RunConfig& rc) {
    const auto& c = rc.synthesis;
    nlohmann::ordered_json j;
    j["penetration_level"] = c.penetration_level;
    j["generation_split"] = c.generation_split;
    j["constant_load"] = c.constant_load;
    j["random"] = c.random;
    j["rng_seed"] = c.rng_seed;
    j["large_system"] = c.large_system;
    j["oversize"] = c.oversize;
    j["run_opf"] = c.run_opf;
    j["export_format"] = c.export_format;
    j["dn_v_min"] = c.dn_v_limits.first;
    j["dn_v_max"] = c.dn_v_limits.second;
    j["oltc_v_set"] = c.oltc_v_set;
    j["capacity_ceiling"] = c.capacity_ceiling;
    j["capacity_tolerance"] = c.capacity_tolerance;
    j["pf_tolerance"] = c.solver.tolerance;
    j["pf_max_iterations"] = c.solver.max_iterations;
    j["enforce_q_limits"] = c.solver.enforce_q_limits;
    j["max_regulation_rounds"] = c.max_regulation_rounds;
    j["opf_rounds"] = c.opf_rounds;
    j["opf_initial_slack"] = c.opf_initial_slack;
    j["tn_template"] = rc.tn_template;
    j["dn_template"] = rc.dn_template;
    j["run_id"] = rc.run_id;
    return j;
}

// ---------------------------------------------------------------------------
// Summary

struct RunSummary {
    std::size_t buses = 0, branches = 0, generators = 0, oltcs = 0;
    std::size_t tn_buses = 0;
    double dn_capacity_mw = 0.0;
    std::string capacity_flag;
    std::map<std::string, int> dn_per_area;
    std::size_t instances = 0;
    double penetration_min = 0.0, penetration_mean = 0.0, penetration_max = 0.0;
    int combined_oltc_rounds = 0;
    int max_instance_oltc_rounds = 0;
    double tn_to_dn_mw = 0.0;
    std::optional<double> opf_objective;
    std::optional<bool> opf_feasible;
    int opf_rounds = 0;
};

inline RunSummary summarize(const SynthesisResult& r) {
    RunSummary s;
    const auto& c = r.network();
    s.buses = c.buses.size();
    s.branches = c.branches.size();
    s.generators = c.generators.size();
    s.oltcs = c.oltcs.size();
    s.tn_buses = r.tn.buses.size();
    s.dn_capacity_mw = r.capacity.p_capacity * c.base_mva;
    s.capacity_flag = r.capacity.flag();
    for (const auto& h : r.hosts) {
        auto it = r.tn.area_names.find(h.area);
        const std::string area = it != r.tn.area_names.end() ? it->second : std::to_string(h.area);
        s.dn_per_area[area] += h.count;
    }
    s.instances = r.instances.size();
    if (!r.instances.empty()) {
        s.penetration_min = std::numeric_limits<double>::infinity();
        s.penetration_max = -std::numeric_limits<double>::infinity();
        double sum = 0.0;
        for (const auto& inst : r.instances) {
            s.penetration_min = std::min(s.penetration_min, inst.realized_penetration);
            s.penetration_max = std::max(s.penetration_max, inst.realized_penetration);
            sum += inst.realized_penetration;
            s.max_instance_oltc_rounds = std::max(s.max_instance_oltc_rounds, inst.regulation.rounds);
        }
        s.penetration_mean = sum / static_cast<double>(r.instances.size());
    }
    s.combined_oltc_rounds = r.assembly.regulation.rounds;
    for (const auto& [bus, p] : host_imports(r.assembly)) s.tn_to_dn_mw += p * c.base_mva;
    if (r.opf) {
        s.opf_objective = r.opf->solution.objective;
        s.opf_feasible = r.opf->solution.feasible;
        s.opf_rounds = r.opf->solution.relaxation_rounds;
    }
    return s;
}

inline nlohmann::ordered_json summary_json(const RunSummary& s) {
    nlohmann::ordered_json j;
    j["buses"] = s.buses;
    j["branches"] = s.branches;
    j["generators"] = s.generators;
    j["oltc_transformers"] = s.oltcs;
    j["tn_buses"] = s.tn_buses;
    j["dn_capacity_mw"] = s.dn_capacity_mw;
    if (!s.capacity_flag.empty()) j["capacity_flag"] = s.capacity_flag;
    j["dn_instances"] = s.instances;
    j["dn_per_area"] = s.dn_per_area;
    j["realized_penetration"] = {{"min", s.penetration_min}, {"mean", s.penetration_mean}, {"max", s.penetration_max}};
    j["oltc_rounds"] = {{"combined", s.combined_oltc_rounds}, {"max_instance", s.max_instance_oltc_rounds}};
    j["tn_to_dn_mw"] = s.tn_to_dn_mw;
    if (s.opf_objective) {
        j["opf"] = {{"objective", *s.opf_objective}, {"feasible", *s.opf_feasible}, {"rounds", s.opf_rounds}};
    }
    return j;
}

inline void print_summary(const RunSummary& s, std::ostream& out) {
    out << "buses " << s.buses << " (TN " << s.tn_buses << "), branches " << s.branches << ", generators "
        << s.generators << ", OLTCs " << s.oltcs << "\n";
    out << "DN capacity " << fmt::number(s.dn_capacity_mw) << " MW";
    if (!s.capacity_flag.empty()) out << " [" << s.capacity_flag << "]";
    out << "\n";
    out << "DN instances " << s.instances << ":";
    for (const auto& [area, n] : s.dn_per_area) out << " " << area << "=" << n;
    out << "\n";
    out << "realized penetration min " << fmt::number(s.penetration_min) << " mean " << fmt::number(s.penetration_mean)
        << " max " << fmt::number(s.penetration_max) << "\n";
    out << "OLTC rounds: combined " << s.combined_oltc_rounds << ", per DN max " << s.max_instance_oltc_rounds << "\n";
    out << "TN to DN active transfer " << fmt::number(s.tn_to_dn_mw) << " MW\n";
    if (s.opf_objective)
        out << "OPF objective " << fmt::number(*s.opf_objective) << " (" << (*s.opf_feasible ? "feasible" : "infeasible")
            << ", " << s.opf_rounds << " rounds)\n";
}

inline nlohmann::ordered_json manifest_json(const RunConfig& rc, const SynthesisResult& r, const FileSet& files) {
    nlohmann::ordered_json j;
    j["tool"] = "tdgen";
    j["config"] = config_json(rc);
    j["seed"] = rc.synthesis.rng_seed;
    j["capacity"] = {{"max_scale", r.capacity.max_scale},
                     {"binding_bus", r.capacity.binding_bus},
                     {"p_capacity_pu", r.capacity.p_capacity},
                     {"unbounded_by_voltage", r.capacity.unbounded_by_voltage}};
    auto hosts = nlohmann::ordered_json::array();
    for (const auto& h : r.hosts)
        hosts.push_back({{"bus", h.bus}, {"area", h.area}, {"p_load_pu", h.p_load}, {"q_load_pu", h.q_load}, {"count", h.count}});
    j["hosts"] = hosts;
    auto instances = nlohmann::ordered_json::array();
    for (const auto& inst : r.instances) {
        std::vector<int> taps;
        for (const auto& t : inst.network.oltcs) taps.push_back(t.tap);
        instances.push_back({{"host_tn_bus", inst.host_tn_bus},
                             {"copy_index", inst.copy_index},
                             {"load_scale", inst.load_scale},
                             {"base_load_pu", inst.base_load},
                             {"penetration_used", inst.penetration_used},
                             {"generation_split_used", inst.split_used},
                             {"realized_penetration", inst.realized_penetration},
                             {"load_addition_pu", inst.load_addition},
                             {"boundary_import_pu", inst.boundary_import},
                             {"oltc_rounds", inst.regulation.rounds},
                             {"taps", taps}});
    }
    j["instances"] = instances;
    std::vector<std::string> names;
    for (const auto& [name, _] : files) names.push_back(name);
    j["files"] = names;
    return j;
}

// ---------------------------------------------------------------------------
// Commands

struct RunOptions {
    std::filesystem::path config_path;
    std::filesystem::path templates_dir = "templates";
    std::filesystem::path out_dir = "output";
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
};

/// Reads the config, generates, writes `<out>/<run_id>/`. Exit status: 0 ok,
/// 1 pipeline failure (stage tagged), 2 configuration error (field named).
inline int run(const RunOptions& opts, std::ostream& out, std::ostream& err,
               const ExporterRegistry& exporters = ExporterRegistry::with_builtins()) {
    RunConfig rc;
    try {
        if (!std::filesystem::exists(opts.config_path))
            throw ConfigError("config", "file not found: " + opts.config_path.string());
        rc = parse_config(fmt::read_file(opts.config_path.string()));
        if (opts.seed) rc.synthesis.rng_seed = *opts.seed;
        if (opts.jobs) rc.synthesis.jobs = *opts.jobs;
        rc.synthesis.validate();
        if (!exporters.contains(rc.synthesis.export_format))
            throw ConfigError("export_format", "no exporter named '" + rc.synthesis.export_format + "'");
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    }

    const auto run_dir = opts.out_dir / rc.run_id;
    try {
        auto result = generate(opts.templates_dir / rc.tn_template, opts.templates_dir / rc.dn_template, rc.synthesis);
        auto files = detail::stage("export", [&] { return exporters.run(result.network(), rc.synthesis.export_format); });
        const auto summary = summarize(result);
        FileSet extra = files;
        if (result.opf) extra["opf_trace.csv"] = emit_opf_trace(result.opf->trace);
        extra["summary.json"] = summary_json(summary).dump(2) + "\n";
        extra["manifest.json"] = manifest_json(rc, result, extra).dump(2) + "\n";
        detail::stage("write", [&] { write_files(extra, run_dir); });
        print_summary(summary, out);
        out << "wrote " << run_dir.string() << "\n";
    } catch (const StageError& e) {
        err << "error " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error [internal] " << e.what() << "\n";
        return 1;
    }
    return 0;
}

struct BoundaryTransfer {
    std::size_t branch = 0;  // OLTC branch index
    BusId hv_bus = 0, lv_bus = 0;
    std::string name;  // LV bus name when known
    double p_mw = 0.0, q_mvar = 0.0;
};

struct InspectReport {
    ValidationReport validation;
    bool solved = false;
    int iterations = 0;
    double v_min = 0.0, v_max = 0.0;
    BusId v_min_bus = 0, v_max_bus = 0;
    double p_load_mw = 0.0, q_load_mvar = 0.0;
    double dg_mw = 0.0;
    double penetration = 0.0;
    std::vector<BoundaryTransfer> transfers;
};

/// Validates and solves a bundle from its stored state. Transfers are the
/// active/reactive flows into each OLTC at its HV side.
inline InspectReport inspect_case(const NetworkCase& c, const SolverOptions& opts = {}) {
    InspectReport r;
    r.validation = validate(c);
    const auto load = total_load(c);
    r.p_load_mw = load.p * c.base_mva;
    r.q_load_mvar = load.q * c.base_mva;
    r.dg_mw = dg_output(c) * c.base_mva;
    r.penetration = load.p > 0.0 ? dg_output(c) / load.p : 0.0;
    if (!r.validation.ok()) return r;
    const auto sol = solve(c, opts);
    r.solved = sol.converged;
    r.iterations = sol.iterations;
    if (!sol.converged) return r;
    r.v_min = std::numeric_limits<double>::infinity();
    r.v_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        if (!c.buses[i].in_service) continue;
        if (sol.v_mag[i] < r.v_min) {
            r.v_min = sol.v_mag[i];
            r.v_min_bus = c.buses[i].id;
        }
        if (sol.v_mag[i] > r.v_max) {
            r.v_max = sol.v_mag[i];
            r.v_max_bus = c.buses[i].id;
        }
    }
    BusLookup lookup(c);
    for (const auto& t : c.oltcs) {
        const auto& br = c.branches[t.branch];
        BoundaryTransfer b;
        b.branch = t.branch;
        b.hv_bus = br.from_bus;
        b.lv_bus = br.to_bus;
        b.name = c.buses[lookup.at(br.to_bus)].name;
        b.p_mw = sol.branch_flows[t.branch].p_from * c.base_mva;
        b.q_mvar = sol.branch_flows[t.branch].q_from * c.base_mva;
        r.transfers.push_back(b);
    }
    return r;
}

inline void print_inspect(const InspectReport& r, std::ostream& out) {
    if (r.validation.ok()) {
        out << "validate: ok\n";
    } else {
        out << "validate: " << r.validation.issues.size() << " issue(s)\n";
        for (const auto& i : r.validation.issues) out << "  " << i.message << "\n";
    }
    out << "total load " << fmt::number(r.p_load_mw) << " MW, " << fmt::number(r.q_load_mvar) << " Mvar\n";
    out << "DG output " << fmt::number(r.dg_mw) << " MW, penetration " << fmt::number(r.penetration) << "\n";
    if (!r.validation.ok()) return;
    if (!r.solved) {
        out << "power flow: did not converge\n";
        return;
    }
    out << "power flow: converged in " << r.iterations << " iterations\n";
    out << "voltage min " << fmt::number(r.v_min) << " pu (bus " << r.v_min_bus << "), max " << fmt::number(r.v_max)
        << " pu (bus " << r.v_max_bus << ")\n";
    if (!r.transfers.empty()) {
        out << "transfers through OLTCs (HV side, + means towards the LV side):\n";
        double total = 0.0;
        for (const auto& t : r.transfers) {
            out << "  branch " << t.branch + 1 << " " << t.hv_bus << "->" << t.lv_bus;
            if (!t.name.empty()) out << " (" << t.name << ")";
            out << ": " << fmt::number(t.p_mw) << " MW, " << fmt::number(t.q_mvar) << " Mvar\n";
            total += t.p_mw;
        }
        out << "  total " << fmt::number(total) << " MW\n";
    }
}

/// Exit status: 0 solved, 1 unreadable, invalid or divergent.
inline int inspect(const std::filesystem::path& dir, std::ostream& out, std::ostream& err) {
    NetworkCase c;
    try {
        c = load_bundle(dir);
    } catch (const std::exception& e) {
        err << "error [load] " << e.what() << "\n";
        return 1;
    }
    InspectReport r;
    try {
        r = inspect_case(c);
    } catch (const std::exception& e) {
        err << "error [solve] " << e.what() << "\n";
        return 1;
    }
    print_inspect(r, out);
    return r.validation.ok() && r.solved ? 0 : 1;
}

}  // namespace tdgen
