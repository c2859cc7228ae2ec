#pragma once

// Shared fixtures for the test binaries: small hand-built cases, a random
// case generator and an independent power-mismatch evaluator.

#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "tdgen/caseio.hpp"
#include "tdgen/netmodel.hpp"
#include "tdgen/powerflow.hpp"

namespace tdgen::test {

inline std::string template_dir(const std::string& name) { return std::string(TDGEN_TEMPLATE_DIR) + "/" + name; }

/// Slack bus 1 (1.0 pu, 0 rad) feeding PQ bus 2 over one line.
inline NetworkCase two_bus(double p_load, double q_load, double x, double r = 0.0) {
    NetworkCase c;
    c.base_mva = 100.0;
    Bus b1;
    b1.id = 1;
    b1.kind = BusKind::Slack;
    Bus b2;
    b2.id = 2;
    b2.p_load = p_load;
    b2.q_load = q_load;
    c.buses = {b1, b2};
    Generator g;
    g.bus_id = 1;
    g.p_max = 10.0;
    g.q_min = -10.0;
    g.q_max = 10.0;
    g.v_set = 1.0;
    c.generators = {g};
    Branch br;
    br.from_bus = 1;
    br.to_bus = 2;
    br.r = r;
    br.x = x;
    c.branches = {br};
    return c;
}

/// Connected random case with `n` buses: bus 1 slack, a few PV buses,
/// transformers with off-nominal ratio and phase shift, shunts and charging.
inline NetworkCase random_case(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    NetworkCase c;
    for (int i = 1; i <= n; ++i) {
        Bus b;
        b.id = i;
        b.kind = i == 1 ? BusKind::Slack : (u(rng) < 0.25 ? BusKind::PV : BusKind::PQ);
        b.p_load = i == 1 ? 0.0 : 0.05 + 0.3 * u(rng);
        b.q_load = i == 1 ? 0.0 : -0.05 + 0.15 * u(rng);
        b.g_shunt = u(rng) < 0.2 ? 0.01 * u(rng) : 0.0;
        b.b_shunt = u(rng) < 0.2 ? 0.05 * u(rng) : 0.0;
        b.v_mag = 0.95 + 0.1 * u(rng);
        b.v_ang = 0.1 * (u(rng) - 0.5);
        c.buses.push_back(b);
        if (b.kind != BusKind::PQ) {
            Generator g;
            g.bus_id = i;
            g.p = b.kind == BusKind::Slack ? 0.0 : 0.2 + 0.3 * u(rng);
            g.p_max = 5.0;
            g.q_min = -5.0;
            g.q_max = 5.0;
            g.v_set = 0.98 + 0.06 * u(rng);
            c.generators.push_back(g);
        }
    }
    auto add_branch = [&](int f, int t) {
        Branch br;
        br.from_bus = f;
        br.to_bus = t;
        br.r = 0.005 + 0.03 * u(rng);
        br.x = 0.02 + 0.1 * u(rng);
        br.b_charging = 0.05 * u(rng);
        if (u(rng) < 0.3) {
            br.ratio = 0.95 + 0.1 * u(rng);
            br.phase_shift = u(rng) < 0.5 ? 0.05 * (u(rng) - 0.5) : 0.0;
        }
        c.branches.push_back(br);
    };
    for (int i = 2; i <= n; ++i) add_branch(1 + static_cast<int>(u(rng) * (i - 1)), i);
    for (int extra = 0; extra < n / 3; ++extra) {
        int f = 1 + static_cast<int>(u(rng) * n), t = 1 + static_cast<int>(u(rng) * n);
        if (f != t) add_branch(f, t);
    }
    return c;
}

/// Complex bus injections from a dense admittance matrix assembled directly
/// from the branch data. Shares no code with the solver.
inline std::vector<std::complex<double>> dense_injections(const NetworkCase& c, const std::vector<double>& vm,
                                                          const std::vector<double>& va) {
    using C = std::complex<double>;
    const std::size_t n = c.buses.size();
    std::vector<std::vector<C>> y(n, std::vector<C>(n, C{}));
    auto pos = [&](BusId id) {
        for (std::size_t i = 0; i < n; ++i)
            if (c.buses[i].id == id) return i;
        throw std::runtime_error("bus");
    };
    for (const auto& br : c.branches) {
        if (!br.in_service) continue;
        const std::size_t f = pos(br.from_bus), t = pos(br.to_bus);
        const C ys = C(1.0, 0.0) / C(br.r, br.x);
        const C a = br.ratio * C(std::cos(br.phase_shift), std::sin(br.phase_shift));
        y[f][f] += (ys + C(0.0, br.b_charging / 2.0)) / std::norm(a);
        y[t][t] += ys + C(0.0, br.b_charging / 2.0);
        y[f][t] -= ys / std::conj(a);
        y[t][f] -= ys / a;
    }
    for (std::size_t i = 0; i < n; ++i) y[i][i] += C(c.buses[i].g_shunt, c.buses[i].b_shunt);
    std::vector<C> v(n), s(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);
    for (std::size_t i = 0; i < n; ++i) {
        C current{};
        for (std::size_t k = 0; k < n; ++k) current += y[i][k] * v[k];
        s[i] = v[i] * std::conj(current);
    }
    return s;
}

/// Largest |S_calc - S_spec| component at PV (P only) and PQ (P and Q) buses,
/// using the bus types the solver ended with.
inline double independent_max_mismatch(const NetworkCase& c, const PowerFlowSolution& sol) {
    const auto s = dense_injections(c, sol.v_mag, sol.v_ang);
    std::vector<double> p_spec(c.buses.size()), q_spec(c.buses.size());
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        p_spec[i] = -c.buses[i].p_load;
        q_spec[i] = -c.buses[i].q_load;
    }
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        for (std::size_t i = 0; i < c.buses.size(); ++i) {
            if (c.buses[i].id != c.generators[g].bus_id || !c.generators[g].in_service) continue;
            p_spec[i] += c.generators[g].p;
            q_spec[i] += sol.gen_q[g];
        }
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        if (!c.buses[i].in_service || sol.bus_kinds[i] == BusKind::Slack) continue;
        worst = std::max(worst, std::abs(s[i].real() - p_spec[i]));
        if (sol.bus_kinds[i] == BusKind::PQ) worst = std::max(worst, std::abs(s[i].imag() - q_spec[i]));
    }
    return worst;
}

/// Values that stress number formatting: zeros, integers, tiny, huge,
/// infinities and neighbours of round numbers.
inline double awkward(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, 7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    switch (pick(rng)) {
        case 0: return 0.0;
        case 1: return std::round(u(rng) * 1000.0);
        case 2: return u(rng);
        case 3: return u(rng) * 1e-300;
        case 4: return u(rng) * 1e300;
        case 5: return 0.1 * std::round(u(rng) * 100.0);
        case 6: return std::numeric_limits<double>::infinity() * (u(rng) < 0 ? -1 : 1);
        default: return std::nextafter(u(rng), 2.0);
    }
}

inline NumericTable random_table(std::mt19937_64& rng, std::size_t cols, int max_rows, int min_rows = 0) {
    std::uniform_int_distribution<int> rows(min_rows, max_rows);
    NumericTable t(static_cast<std::size_t>(rows(rng)), std::vector<double>(cols));
    for (auto& r : t)
        for (auto& v : r) v = awkward(rng);
    return t;
}

/// Random case document covering every table, names and raw entries.
inline CaseDocument random_document(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CaseDocument d;
    d.function_name = u(rng) < 0.5 ? "mpc_case" : "case_x" + std::to_string(static_cast<int>(u(rng) * 100));
    d.base_mva = u(rng) < 0.7 ? 100.0 : 1.0 + 999.0 * u(rng);
    d.bus = random_table(rng, kBusColumns, 6, 1);
    d.gen = random_table(rng, kGenColumns, 4);
    d.branch = random_table(rng, kBranchColumns, 6);
    if (u(rng) < 0.6) {
        d.gencost = random_table(rng, 7, 4);
        for (auto& r : d.gencost) r[col::NCOST] = 3;
    }
    if (u(rng) < 0.4)
        for (std::size_t i = 0; i < d.bus.size(); ++i) d.bus_names.push_back("bus 'n" + std::to_string(i) + "'");
    if (u(rng) < 0.4) d.extra.push_back({"areas", "[1 5; 2 7]"});
    if (u(rng) < 0.3) d.extra.push_back({"notes", "{ 'a; b', 'c' }"});
    return d;
}

}  // namespace tdgen::test
