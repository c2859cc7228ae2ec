#pragma once

// Full Newton-Raphson AC power flow in polar coordinates.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "tdgen/acpower.hpp"
#include "tdgen/netmodel.hpp"

namespace tdgen {

struct SolverOptions {
    double tolerance = 1e-8;  // pu mismatch
    int max_iterations = 20;
    bool flat_start = false;
    bool enforce_q_limits = false;
};

struct PowerFlowSolution {
    std::vector<double> v_mag;
    std::vector<double> v_ang;
    std::vector<double> p_inj;
    std::vector<double> q_inj;
    std::vector<BranchFlow> branch_flows;
    std::vector<double> gen_p;  // per generator, after slack/PV allocation
    std::vector<double> gen_q;
    std::vector<BusKind> bus_kinds;  // after any PV -> PQ switching
    bool converged = false;
    /// Newton passes, counting the final evaluation that met the tolerance.
    int iterations = 0;
    double max_mismatch = 0.0;
    std::size_t worst_bus = 0;  // bus-table position of the largest mismatch
};

/// Residual and Jacobian of the power-flow equations for fixed bus types.
/// The state vector is [theta at PV and PQ buses; V at PQ buses].
class PowerFlowProblem {
public:
    PowerFlowProblem(const NetworkCase& c, const std::vector<BusKind>& kinds, const std::vector<double>& q_fixed_extra)
        : ybus_(build_ybus(c)), kinds_(kinds) {
        const auto n = c.buses.size();
        p_spec_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        q_spec_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        BusLookup lookup(c);
        for (std::size_t i = 0; i < n; ++i) {
            p_spec_[static_cast<Eigen::Index>(i)] = -c.buses[i].p_load;
            q_spec_[static_cast<Eigen::Index>(i)] = -c.buses[i].q_load + q_fixed_extra[i];
        }
        for (const auto& g : c.generators) {
            if (!g.in_service) continue;
            const auto i = static_cast<Eigen::Index>(lookup.at(g.bus_id));
            p_spec_[i] += g.p;
            q_spec_[i] += g.q;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!c.buses[i].in_service) continue;
            if (kinds_[i] == BusKind::PV) pv_.push_back(i);
            if (kinds_[i] == BusKind::PQ) pq_.push_back(i);
        }
        pvpq_ = pv_;
        pvpq_.insert(pvpq_.end(), pq_.begin(), pq_.end());
        std::sort(pvpq_.begin(), pvpq_.end());
        theta_col_.assign(n, -1);
        v_col_.assign(n, -1);
        for (std::size_t j = 0; j < pvpq_.size(); ++j) theta_col_[pvpq_[j]] = static_cast<Eigen::Index>(j);
        for (std::size_t j = 0; j < pq_.size(); ++j) v_col_[pq_[j]] = static_cast<Eigen::Index>(pvpq_.size() + j);
    }

    Eigen::Index size() const { return static_cast<Eigen::Index>(pvpq_.size() + pq_.size()); }
    const SparseComplex& ybus() const { return ybus_; }
    const std::vector<std::size_t>& pvpq() const { return pvpq_; }
    const std::vector<std::size_t>& pq() const { return pq_; }

    /// Writes state `x` into full voltage vectors.
    void scatter(const Eigen::VectorXd& x, Eigen::VectorXd& vm, Eigen::VectorXd& va) const {
        for (std::size_t j = 0; j < pvpq_.size(); ++j) va[static_cast<Eigen::Index>(pvpq_[j])] = x[static_cast<Eigen::Index>(j)];
        for (std::size_t j = 0; j < pq_.size(); ++j)
            vm[static_cast<Eigen::Index>(pq_[j])] = x[static_cast<Eigen::Index>(pvpq_.size() + j)];
    }

    Eigen::VectorXd gather(const Eigen::VectorXd& vm, const Eigen::VectorXd& va) const {
        Eigen::VectorXd x(size());
        for (std::size_t j = 0; j < pvpq_.size(); ++j) x[static_cast<Eigen::Index>(j)] = va[static_cast<Eigen::Index>(pvpq_[j])];
        for (std::size_t j = 0; j < pq_.size(); ++j)
            x[static_cast<Eigen::Index>(pvpq_.size() + j)] = vm[static_cast<Eigen::Index>(pq_[j])];
        return x;
    }

    /// [P_calc - P_spec at PV/PQ; Q_calc - Q_spec at PQ].
    Eigen::VectorXd residual(const Eigen::VectorXd& vm, const Eigen::VectorXd& va) const {
        const auto s = injections(ybus_, vm, va);
        Eigen::VectorXd f(size());
        for (std::size_t j = 0; j < pvpq_.size(); ++j) {
            const auto i = static_cast<Eigen::Index>(pvpq_[j]);
            f[static_cast<Eigen::Index>(j)] = s.p[i] - p_spec_[i];
        }
        for (std::size_t j = 0; j < pq_.size(); ++j) {
            const auto i = static_cast<Eigen::Index>(pq_[j]);
            f[static_cast<Eigen::Index>(pvpq_.size() + j)] = s.q[i] - q_spec_[i];
        }
        return f;
    }

    Eigen::SparseMatrix<double> jacobian(const Eigen::VectorXd& vm, const Eigen::VectorXd& va) const {
        const auto n = ybus_.rows();
        const auto s = injections(ybus_, vm, va);
        Triplets full;
        full.reserve(static_cast<std::size_t>(ybus_.nonZeros()) * 4);
        injection_jacobian(ybus_, vm, va, s, full);
        Triplets sub;
        sub.reserve(full.size());
        for (const auto& t : full) {
            Eigen::Index row = -1, col = -1;
            const auto r = t.row(), c = t.col();
            if (r < n) {
                row = theta_col_[static_cast<std::size_t>(r)];  // P rows follow the theta ordering
            } else if (v_col_[static_cast<std::size_t>(r - n)] >= 0) {
                row = v_col_[static_cast<std::size_t>(r - n)];
            }
            if (c < n) {
                col = theta_col_[static_cast<std::size_t>(c)];
            } else {
                col = v_col_[static_cast<std::size_t>(c - n)];
            }
            if (row >= 0 && col >= 0) sub.emplace_back(row, col, t.value());
        }
        Eigen::SparseMatrix<double> j(size(), size());
        j.setFromTriplets(sub.begin(), sub.end());
        j.makeCompressed();
        return j;
    }

private:
    SparseComplex ybus_;
    std::vector<BusKind> kinds_;
    Eigen::VectorXd p_spec_, q_spec_;
    std::vector<std::size_t> pv_, pq_, pvpq_;
    std::vector<Eigen::Index> theta_col_, v_col_;
};

namespace detail {

inline void check_solvable(const NetworkCase& c) {
    int slack = 0;
    for (const auto& b : c.buses)
        if (b.in_service && b.kind == BusKind::Slack) ++slack;
    if (slack != 1) throw ModelError("power flow needs exactly one slack bus, found " + std::to_string(slack));
    auto roots = island_roots(c);
    std::optional<std::size_t> root;
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        if (!c.buses[i].in_service) continue;
        if (root && *root != roots[i]) throw ModelError("power flow needs a connected network");
        root = roots[i];
    }
}

/// Distributes solved slack P and PV/slack Q over the generators at each bus.
inline void allocate_generation(const NetworkCase& c, const std::vector<BusKind>& kinds, const Eigen::VectorXd& p_calc,
                                const Eigen::VectorXd& q_calc, PowerFlowSolution& sol) {
    const auto n = c.buses.size();
    BusLookup lookup(c);
    sol.gen_p.resize(c.generators.size());
    sol.gen_q.resize(c.generators.size());
    std::vector<std::vector<std::size_t>> at_bus(n);
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        const auto& gen = c.generators[g];
        sol.gen_p[g] = gen.in_service ? gen.p : 0.0;
        sol.gen_q[g] = gen.in_service ? gen.q : 0.0;
        if (gen.in_service) at_bus[lookup.at(gen.bus_id)].push_back(g);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (at_bus[i].empty()) continue;
        if (kinds[i] == BusKind::Slack) {
            double other = 0.0;
            std::optional<std::size_t> taker;
            for (auto g : at_bus[i]) {
                if (!taker && c.generators[g].kind != GenKind::DnPv) {
                    taker = g;
                    continue;
                }
                other += c.generators[g].p;
            }
            if (taker) sol.gen_p[*taker] = p_calc[ii] + c.buses[i].p_load - other;
        }
        if (kinds[i] == BusKind::Slack || kinds[i] == BusKind::PV) {
            double fixed = 0.0, range = 0.0;
            std::vector<std::size_t> sharing;
            for (auto g : at_bus[i]) {
                if (c.generators[g].kind == GenKind::DnPv) {
                    fixed += c.generators[g].q;
                } else {
                    sharing.push_back(g);
                    range += std::max(0.0, c.generators[g].q_max - c.generators[g].q_min);
                }
            }
            const double q_total = q_calc[ii] + c.buses[i].q_load - fixed;
            for (auto g : sharing) {
                const double w = range > 0.0 ? std::max(0.0, c.generators[g].q_max - c.generators[g].q_min) / range
                                             : 1.0 / static_cast<double>(sharing.size());
                sol.gen_q[g] = q_total * w;
            }
        }
    }
}

}  // namespace detail

/// Solves the AC power flow. Never mutates `c`. Returns converged=false if
/// the tolerance is not met within max_iterations; throws SolverError on a
/// singular Jacobian and ModelError on an unsolvable topology.
inline PowerFlowSolution solve(const NetworkCase& c, const SolverOptions& opts = {}) {
    if (!(opts.tolerance > 0.0)) throw ModelError("tolerance must be positive");
    detail::check_solvable(c);
    const auto n = c.buses.size();
    const auto nn = static_cast<Eigen::Index>(n);
    BusLookup lookup(c);

    std::vector<BusKind> kinds(n);
    std::vector<bool> has_gen(n, false);
    for (const auto& g : c.generators)
        if (g.in_service && g.kind != GenKind::DnPv) has_gen[lookup.at(g.bus_id)] = true;
    for (std::size_t i = 0; i < n; ++i) {
        kinds[i] = c.buses[i].kind;
        if (kinds[i] == BusKind::PV && !has_gen[i]) kinds[i] = BusKind::PQ;
    }

    const std::size_t slack = *slack_index(c);
    Eigen::VectorXd vm(nn), va(nn);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        vm[ii] = opts.flat_start ? 1.0 : c.buses[i].v_mag;
        va[ii] = opts.flat_start ? c.buses[slack].v_ang : c.buses[i].v_ang;
    }
    for (const auto& g : c.generators) {
        if (!g.in_service || g.kind == GenKind::DnPv) continue;
        const auto i = lookup.at(g.bus_id);
        if (kinds[i] != BusKind::PQ) vm[static_cast<Eigen::Index>(i)] = g.v_set;
    }
    va[static_cast<Eigen::Index>(slack)] = c.buses[slack].v_ang;

    std::vector<double> q_extra(n, 0.0);
    std::vector<double> q_fixed_gen(c.generators.size(), std::numeric_limits<double>::quiet_NaN());
    PowerFlowSolution sol;
    int total_passes = 0;

    while (true) {
        PowerFlowProblem prob(c, kinds, q_extra);
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        bool analyzed = false;
        sol.converged = false;
        int passes = 0;
        while (true) {
            ++passes;
            const auto f = prob.residual(vm, va);
            Eigen::Index worst = 0;
            sol.max_mismatch = f.size() ? f.cwiseAbs().maxCoeff(&worst) : 0.0;
            if (f.size()) {
                const auto col = static_cast<std::size_t>(worst);
                sol.worst_bus = col < prob.pvpq().size() ? prob.pvpq()[col] : prob.pq()[col - prob.pvpq().size()];
            }
            if (!std::isfinite(sol.max_mismatch)) break;
            if (sol.max_mismatch <= opts.tolerance) {
                sol.converged = true;
                break;
            }
            if (passes > opts.max_iterations) break;
            auto j = prob.jacobian(vm, va);
            if (!analyzed) {
                lu.analyzePattern(j);
                analyzed = true;
            }
            lu.factorize(j);
            if (lu.info() != Eigen::Success) throw SolverError("singular Jacobian in power flow");
            Eigen::VectorXd dx = lu.solve(-f);
            Eigen::VectorXd x = prob.gather(vm, va) + dx;
            prob.scatter(x, vm, va);
        }
        total_passes += passes;
        if (!sol.converged || !opts.enforce_q_limits) break;

        // PV -> PQ switching for generators outside their reactive range.
        const auto s = injections(prob.ybus(), vm, va);
        detail::allocate_generation(c, kinds, s.p, s.q, sol);
        bool switched = false;
        for (std::size_t g = 0; g < c.generators.size(); ++g) {
            const auto& gen = c.generators[g];
            if (!gen.in_service || gen.kind == GenKind::DnPv) continue;
            const auto i = lookup.at(gen.bus_id);
            if (kinds[i] != BusKind::PV) continue;
            const double q = sol.gen_q[g];
            const double limit = q > gen.q_max ? gen.q_max : (q < gen.q_min ? gen.q_min : q);
            if (limit == q) continue;
            // All generators at the bus are fixed at their share clamped to limits.
            double q_fix = 0.0;
            for (std::size_t h = 0; h < c.generators.size(); ++h) {
                const auto& other = c.generators[h];
                if (!other.in_service || other.kind == GenKind::DnPv || lookup.at(other.bus_id) != i) continue;
                q_fixed_gen[h] = std::clamp(sol.gen_q[h], other.q_min, other.q_max);
                q_fix += q_fixed_gen[h] - other.q;
            }
            q_extra[i] = q_fix;
            kinds[i] = BusKind::PQ;
            switched = true;
        }
        if (!switched) break;
    }

    sol.iterations = total_passes;
    const auto ybus = build_ybus(c);
    const auto s = injections(ybus, vm, va);
    sol.v_mag.assign(vm.data(), vm.data() + nn);
    sol.v_ang.assign(va.data(), va.data() + nn);
    sol.p_inj.assign(s.p.data(), s.p.data() + nn);
    sol.q_inj.assign(s.q.data(), s.q.data() + nn);
    sol.branch_flows = branch_flows(c, vm, va);
    sol.bus_kinds = kinds;
    detail::allocate_generation(c, kinds, s.p, s.q, sol);
    for (std::size_t g = 0; g < c.generators.size(); ++g)
        if (!std::isnan(q_fixed_gen[g])) sol.gen_q[g] = q_fixed_gen[g];
    return sol;
}

/// Stores a solved operating point (voltages and generator outputs) in `c`.
inline void apply_solution(NetworkCase& c, const PowerFlowSolution& sol) {
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        c.buses[i].v_mag = sol.v_mag[i];
        c.buses[i].v_ang = sol.v_ang[i];
    }
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        if (!c.generators[g].in_service) continue;
        c.generators[g].p = sol.gen_p[g];
        c.generators[g].q = sol.gen_q[g];
    }
}

}  // namespace tdgen
