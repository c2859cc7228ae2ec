#pragma once

// AC optimal power flow with quadratic generator costs. The continuous
// problem (taps fixed) is solved by a primal-dual interior point method;
// discrete taps are handled by alternating continuous solves with
// single-step tap updates while the voltage limits are tightened.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "tdgen/acpower.hpp"
#include "tdgen/format.hpp"
#include "tdgen/netmodel.hpp"
#include "tdgen/oltc.hpp"

namespace tdgen {

using VoltageLimits = std::vector<std::pair<double, double>>;  // per bus, pu

struct OpfProblem {
    NetworkCase network;
    std::vector<std::size_t> dispatchable;  // generator indices
    VoltageLimits v_limits_final;

    /// TN units and controllable DGs are dispatchable; PV units stay fixed.
    explicit OpfProblem(NetworkCase c) : network(std::move(c)) {
        for (std::size_t g = 0; g < network.generators.size(); ++g) {
            const auto& gen = network.generators[g];
            if (!gen.in_service || gen.kind == GenKind::DnPv) continue;
            dispatchable.push_back(g);
        }
        for (const auto& b : network.buses) v_limits_final.emplace_back(b.v_min, b.v_max);
        check();
    }

    void check() const {
        for (const auto& b : network.buses)
            if (!b.in_service) throw ModelError("OPF needs every bus in service (bus " + std::to_string(b.id) + ")");
        if (v_limits_final.size() != network.buses.size()) throw ModelError("one voltage limit pair per bus required");
        for (auto g : dispatchable) {
            const auto& gen = network.generators[g];
            const bool finite = std::isfinite(gen.p_min) && std::isfinite(gen.p_max) && std::isfinite(gen.q_min) &&
                                std::isfinite(gen.q_max);
            if (!finite || gen.p_min > gen.p_max || gen.q_min > gen.q_max)
                throw ModelError("dispatchable generator " + std::to_string(g + 1) + " needs finite ordered bounds");
            if (gen.cost.c2 < 0.0) throw ModelError("generator " + std::to_string(g + 1) + " cost is not convex");
        }
    }

    /// Total cost of the dispatchable units at the given per-unit outputs.
    double cost(const std::vector<double>& gen_p) const {
        double total = 0.0;
        for (auto g : dispatchable) total += network.generators[g].cost(gen_p[g] * network.base_mva);
        return total;
    }

    double current_cost() const {
        std::vector<double> p;
        for (const auto& g : network.generators) p.push_back(g.p);
        return cost(p);
    }
};

struct OpfOptions {
    double tolerance = 1e-8;  // on the scaled feasibility/stationarity/complementarity measures
    int max_iterations = 150;
    double sigma = 0.1;         // centering parameter
    double step_fraction = 0.99995;
    double cost_scale = 1e-4;  // internal objective multiplier; keeps multipliers O(1)
};

struct OpfSolution {
    std::vector<double> gen_p, gen_q;  // every generator; fixed units unchanged
    std::vector<double> v_mag, v_ang;
    std::vector<int> taps;
    double objective = 0.0;
    bool converged = false;  // interior point met its tolerances
    bool feasible = false;   // against the limits it was judged on
    double kkt_residual = std::numeric_limits<double>::infinity();
    double max_violation = 0.0;
    int iterations = 0;
    int relaxation_rounds = 0;
    int tap_moves = 0;
};

namespace detail {

struct BoxBound {
    Eigen::Index var;
    double sign;  // +1: x - bound <= 0, -1: bound - x <= 0
    double bound;
};

class OpfModel {
public:
    OpfModel(const OpfProblem& p, const VoltageLimits& limits, double cost_scale = 1.0)
        : p_(p), ybus_(build_ybus(p.network)), cost_scale_(cost_scale) {
        const auto& c = p.network;
        n_ = static_cast<Eigen::Index>(c.buses.size());
        nd_ = static_cast<Eigen::Index>(p.dispatchable.size());
        BusLookup lookup(c);
        pd_ = Eigen::VectorXd::Zero(n_);
        qd_ = Eigen::VectorXd::Zero(n_);
        for (Eigen::Index i = 0; i < n_; ++i) {
            pd_[i] = c.buses[static_cast<std::size_t>(i)].p_load;
            qd_[i] = c.buses[static_cast<std::size_t>(i)].q_load;
        }
        std::vector<bool> is_disp(c.generators.size(), false);
        for (auto g : p.dispatchable) is_disp[g] = true;
        for (std::size_t g = 0; g < c.generators.size(); ++g) {
            const auto& gen = c.generators[g];
            if (!gen.in_service || is_disp[g]) continue;
            const auto i = static_cast<Eigen::Index>(lookup.at(gen.bus_id));
            pd_[i] -= gen.p;
            qd_[i] -= gen.q;
        }
        for (auto g : p.dispatchable) gen_bus_.push_back(static_cast<Eigen::Index>(lookup.at(c.generators[g].bus_id)));
        ref_ = static_cast<Eigen::Index>(*slack_index(c));
        ref_angle_ = c.buses[static_cast<std::size_t>(ref_)].v_ang;

        for (Eigen::Index i = 0; i < n_; ++i) {
            const auto [lo, hi] = limits[static_cast<std::size_t>(i)];
            bounds_.push_back({vi(i), +1.0, hi});
            bounds_.push_back({vi(i), -1.0, lo});
        }
        for (Eigen::Index k = 0; k < nd_; ++k) {
            const auto& gen = c.generators[p.dispatchable[static_cast<std::size_t>(k)]];
            bounds_.push_back({pg(k), +1.0, gen.p_max});
            bounds_.push_back({pg(k), -1.0, gen.p_min});
            bounds_.push_back({qg(k), +1.0, gen.q_max});
            bounds_.push_back({qg(k), -1.0, gen.q_min});
        }
    }

    Eigen::Index nvars() const { return 2 * n_ + 2 * nd_; }
    Eigen::Index neq() const { return 2 * n_ + 1; }
    Eigen::Index nineq() const { return static_cast<Eigen::Index>(bounds_.size()); }
    Eigen::Index th(Eigen::Index i) const { return i; }
    Eigen::Index vi(Eigen::Index i) const { return n_ + i; }
    Eigen::Index pg(Eigen::Index k) const { return 2 * n_ + k; }
    Eigen::Index qg(Eigen::Index k) const { return 2 * n_ + nd_ + k; }
    const std::vector<BoxBound>& bounds() const { return bounds_; }

    Eigen::VectorXd start_point() const {
        const auto& c = p_.network;
        Eigen::VectorXd x(nvars());
        for (Eigen::Index i = 0; i < n_; ++i) {
            x[th(i)] = c.buses[static_cast<std::size_t>(i)].v_ang;
            x[vi(i)] = c.buses[static_cast<std::size_t>(i)].v_mag;
        }
        x[th(ref_)] = ref_angle_;
        for (Eigen::Index k = 0; k < nd_; ++k) {
            const auto& gen = c.generators[p_.dispatchable[static_cast<std::size_t>(k)]];
            x[pg(k)] = gen.p;
            x[qg(k)] = gen.q;
        }
        // Pull bounded variables strictly inside their box.
        for (std::size_t b = 0; b + 1 < bounds_.size(); b += 2) {
            const auto var = bounds_[b].var;
            const double hi = bounds_[b].bound, lo = bounds_[b + 1].bound;
            const double margin = std::min(0.01, 0.25 * (hi - lo));
            if (hi - lo <= 0.0) {
                x[var] = lo;
            } else {
                x[var] = std::clamp(x[var], lo + margin, hi - margin);
            }
        }
        return x;
    }

    void split(const Eigen::VectorXd& x, Eigen::VectorXd& vm, Eigen::VectorXd& va) const {
        va = x.segment(0, n_);
        vm = x.segment(n_, n_);
    }

    double objective(const Eigen::VectorXd& x) const {
        const double base = p_.network.base_mva;
        double f = 0.0;
        for (Eigen::Index k = 0; k < nd_; ++k)
            f += p_.network.generators[p_.dispatchable[static_cast<std::size_t>(k)]].cost(x[pg(k)] * base);
        return f;
    }

    Eigen::VectorXd objective_gradient(const Eigen::VectorXd& x) const {
        const double base = p_.network.base_mva;
        Eigen::VectorXd df = Eigen::VectorXd::Zero(nvars());
        for (Eigen::Index k = 0; k < nd_; ++k) {
            const auto& cost = p_.network.generators[p_.dispatchable[static_cast<std::size_t>(k)]].cost;
            df[pg(k)] = (2.0 * cost.c2 * x[pg(k)] * base + cost.c1) * base * cost_scale_;
        }
        return df;
    }

    Eigen::VectorXd equalities(const Eigen::VectorXd& x) const {
        Eigen::VectorXd vm, va;
        split(x, vm, va);
        const auto s = injections(ybus_, vm, va);
        Eigen::VectorXd g(neq());
        g.segment(0, n_) = s.p + pd_;
        g.segment(n_, n_) = s.q + qd_;
        for (Eigen::Index k = 0; k < nd_; ++k) {
            g[gen_bus_[static_cast<std::size_t>(k)]] -= x[pg(k)];
            g[n_ + gen_bus_[static_cast<std::size_t>(k)]] -= x[qg(k)];
        }
        g[2 * n_] = x[th(ref_)] - ref_angle_;
        return g;
    }

    /// Equality Jacobian (neq x nvars).
    Eigen::SparseMatrix<double> equality_jacobian(const Eigen::VectorXd& x) const {
        Eigen::VectorXd vm, va;
        split(x, vm, va);
        Triplets t;
        injection_jacobian(ybus_, vm, va, injections(ybus_, vm, va), t);
        for (Eigen::Index k = 0; k < nd_; ++k) {
            t.emplace_back(gen_bus_[static_cast<std::size_t>(k)], pg(k), -1.0);
            t.emplace_back(n_ + gen_bus_[static_cast<std::size_t>(k)], qg(k), -1.0);
        }
        t.emplace_back(2 * n_, th(ref_), 1.0);
        Eigen::SparseMatrix<double> j(neq(), nvars());
        j.setFromTriplets(t.begin(), t.end());
        return j;
    }

    /// Hessian of the Lagrangian (objective plus lam' g); bounds are linear.
    void lagrangian_hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& lam, Triplets& out) const {
        Eigen::VectorXd vm, va;
        split(x, vm, va);
        const Eigen::VectorXd lp = lam.segment(0, n_), lq = lam.segment(n_, n_);
        injection_hessian(ybus_, vm, va, lp, lq, out);
        const double base = p_.network.base_mva;
        for (Eigen::Index k = 0; k < nd_; ++k) {
            const auto& cost = p_.network.generators[p_.dispatchable[static_cast<std::size_t>(k)]].cost;
            out.emplace_back(pg(k), pg(k), 2.0 * cost.c2 * base * base * cost_scale_);
        }
    }

    Eigen::VectorXd inequalities(const Eigen::VectorXd& x) const {
        Eigen::VectorXd h(nineq());
        for (Eigen::Index k = 0; k < nineq(); ++k) {
            const auto& b = bounds_[static_cast<std::size_t>(k)];
            h[k] = b.sign * (x[b.var] - b.bound);
        }
        return h;
    }

    OpfSolution to_solution(const Eigen::VectorXd& x) const {
        const auto& c = p_.network;
        OpfSolution s;
        for (const auto& g : c.generators) {
            s.gen_p.push_back(g.in_service ? g.p : 0.0);
            s.gen_q.push_back(g.in_service ? g.q : 0.0);
        }
        for (Eigen::Index k = 0; k < nd_; ++k) {
            s.gen_p[p_.dispatchable[static_cast<std::size_t>(k)]] = x[pg(k)];
            s.gen_q[p_.dispatchable[static_cast<std::size_t>(k)]] = x[qg(k)];
        }
        for (Eigen::Index i = 0; i < n_; ++i) {
            s.v_ang.push_back(x[th(i)]);
            s.v_mag.push_back(x[vi(i)]);
        }
        for (const auto& t : c.oltcs) s.taps.push_back(t.tap);
        s.objective = p_.cost(s.gen_p);
        return s;
    }

private:
    const OpfProblem& p_;
    SparseComplex ybus_;
    double cost_scale_ = 1.0;
    Eigen::Index n_ = 0, nd_ = 0, ref_ = 0;
    double ref_angle_ = 0.0;
    Eigen::VectorXd pd_, qd_;  // demand net of fixed generation
    std::vector<Eigen::Index> gen_bus_;
    std::vector<BoxBound> bounds_;
};

inline double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace detail

/// Worst violation of power-balance, generator and the given voltage limits
/// by an operating point, re-evaluated from the network equations.
inline double opf_max_violation(const OpfProblem& p, const OpfSolution& s, const VoltageLimits& limits) {
    detail::OpfModel m(p, limits);
    Eigen::VectorXd x(m.nvars());
    const auto n = static_cast<Eigen::Index>(s.v_mag.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        x[m.th(i)] = s.v_ang[static_cast<std::size_t>(i)];
        x[m.vi(i)] = s.v_mag[static_cast<std::size_t>(i)];
    }
    for (std::size_t k = 0; k < p.dispatchable.size(); ++k) {
        x[m.pg(static_cast<Eigen::Index>(k))] = s.gen_p[p.dispatchable[k]];
        x[m.qg(static_cast<Eigen::Index>(k))] = s.gen_q[p.dispatchable[k]];
    }
    const auto g = m.equalities(x);
    const auto h = m.inequalities(x);
    double worst = detail::inf_norm(g.head(g.size() - 1));
    if (h.size()) worst = std::max(worst, h.maxCoeff());
    return std::max(worst, 0.0);
}

/// Minimizes total quadratic cost with taps held at their current ratios.
inline OpfSolution solve_continuous(const OpfProblem& p, const VoltageLimits& v_limits, const OpfOptions& opts = {}) {
    p.check();
    if (v_limits.size() != p.network.buses.size()) throw ModelError("one voltage limit pair per bus required");
    detail::OpfModel m(p, v_limits, opts.cost_scale);
    const auto nx = m.nvars(), ne = m.neq(), ni = m.nineq();
    const auto& bounds = m.bounds();

    Eigen::VectorXd x = m.start_point();
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(ne);
    Eigen::VectorXd h = m.inequalities(x);
    Eigen::VectorXd z = Eigen::VectorXd::Ones(ni), mu = Eigen::VectorXd::Ones(ni);
    double gamma = 1.0;
    for (Eigen::Index k = 0; k < ni; ++k) {
        if (h[k] < -1.0) z[k] = -h[k];
        if (gamma / z[k] > 1.0) mu[k] = gamma / z[k];
    }

    OpfSolution best;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    int it = 0;
    double kkt = std::numeric_limits<double>::infinity();
    bool converged = false;
    while (true) {
        const Eigen::VectorXd g = m.equalities(x);
        h = m.inequalities(x);
        const auto jg = m.equality_jacobian(x);
        Eigen::VectorXd lx = m.objective_gradient(x) + jg.transpose() * lam;
        for (Eigen::Index k = 0; k < ni; ++k) lx[bounds[static_cast<std::size_t>(k)].var] += bounds[static_cast<std::size_t>(k)].sign * mu[k];

        const double xnorm = detail::inf_norm(x), znorm = detail::inf_norm(z);
        const double lnorm = std::max(detail::inf_norm(lam), detail::inf_norm(mu));
        const double feas = std::max(detail::inf_norm(g), ni ? std::max(0.0, h.maxCoeff()) : 0.0) /
                            (1.0 + std::max(xnorm, znorm));
        const double grad = detail::inf_norm(lx) / (1.0 + lnorm);
        const double comp = ni ? z.dot(mu) / (1.0 + xnorm) : 0.0;
        kkt = std::max({feas, grad, comp});
        if (!std::isfinite(kkt)) break;
        if (feas <= opts.tolerance && grad <= opts.tolerance && comp <= opts.tolerance) {
            converged = true;
            break;
        }
        if (it >= opts.max_iterations) break;
        ++it;

        // Reduced KKT system [M J'; J 0] [dx; dlam] = [-N; -g]
        Triplets t;
        m.lagrangian_hessian(x, lam, t);
        Eigen::VectorXd rhs_x = -lx;
        for (Eigen::Index k = 0; k < ni; ++k) {
            const auto& b = bounds[static_cast<std::size_t>(k)];
            t.emplace_back(b.var, b.var, mu[k] / z[k]);
            rhs_x[b.var] -= b.sign * (gamma + mu[k] * h[k]) / z[k];
        }
        for (int outer = 0; outer < jg.outerSize(); ++outer) {
            for (Eigen::SparseMatrix<double>::InnerIterator e(jg, outer); e; ++e) {
                t.emplace_back(nx + e.row(), e.col(), e.value());
                t.emplace_back(e.col(), nx + e.row(), e.value());
            }
        }
        Eigen::SparseMatrix<double> kkt_matrix(nx + ne, nx + ne);
        kkt_matrix.setFromTriplets(t.begin(), t.end());
        kkt_matrix.makeCompressed();
        lu.compute(kkt_matrix);
        if (lu.info() != Eigen::Success) break;
        Eigen::VectorXd rhs(nx + ne);
        rhs << rhs_x, -g;
        const Eigen::VectorXd d = lu.solve(rhs);
        if (!d.allFinite()) break;
        const Eigen::VectorXd dx = d.head(nx), dlam = d.tail(ne);

        Eigen::VectorXd dz(ni), dmu(ni);
        for (Eigen::Index k = 0; k < ni; ++k) {
            const auto& b = bounds[static_cast<std::size_t>(k)];
            dz[k] = -h[k] - z[k] - b.sign * dx[b.var];
            dmu[k] = -mu[k] + (gamma - mu[k] * dz[k]) / z[k];
        }
        double alpha_p = 1.0, alpha_d = 1.0;
        for (Eigen::Index k = 0; k < ni; ++k) {
            if (dz[k] < 0.0) alpha_p = std::min(alpha_p, opts.step_fraction * -z[k] / dz[k]);
            if (dmu[k] < 0.0) alpha_d = std::min(alpha_d, opts.step_fraction * -mu[k] / dmu[k]);
        }
        x += alpha_p * dx;
        z += alpha_p * dz;
        lam += alpha_d * dlam;
        mu += alpha_d * dmu;
        if (ni) gamma = opts.sigma * z.dot(mu) / static_cast<double>(ni);
    }

    OpfSolution s = m.to_solution(x);
    s.iterations = it;
    s.converged = converged;
    s.kkt_residual = kkt;
    s.max_violation = opf_max_violation(p, s, v_limits);
    s.feasible = converged && s.max_violation <= 1e-6;
    return s;
}

// ---------------------------------------------------------------------------
// Iterative relaxation with discrete taps

struct RelaxationSchedule {
    int rounds = 5;               // K: steps from the relaxed to the final limits
    double initial_slack = 0.1;   // pu added on both sides in the first round
    int max_extra_rounds = kDefaultRegulationRounds;  // at final limits, waiting for tap quiescence
    OpfOptions solver;

    /// Slack used in round r (1-based): initial_slack at r = 1, zero from r = K on.
    double slack(int round) const {
        if (rounds <= 1 || round >= rounds) return 0.0;
        return initial_slack * static_cast<double>(rounds - round) / static_cast<double>(rounds - 1);
    }
};

struct OpfTraceRow {
    int round = 0;
    double slack = 0.0;
    double objective = 0.0;
    double max_violation = 0.0;  // against the final limits
    int taps_moved = 0;
    std::vector<int> taps;  // after this round's update
};

struct RelaxationResult {
    OpfSolution solution;
    std::vector<OpfTraceRow> trace;
    std::vector<bool> frozen;
};

inline VoltageLimits widen(const VoltageLimits& final, double slack) {
    VoltageLimits out = final;
    for (auto& [lo, hi] : out) {
        lo -= slack;
        hi += slack;
    }
    return out;
}

/// Continuous solve at relaxed limits, single-step tap update from the
/// resulting voltages, tighten, repeat. Stops once taps are quiescent and
/// either the final limits are reached or the relaxed optimum already
/// satisfies them.
inline RelaxationResult solve_with_relaxation_traced(const OpfProblem& problem, const RelaxationSchedule& sched) {
    if (sched.rounds < 1) throw ModelError("relaxation schedule needs at least one round");
    OpfProblem p = problem;
    RelaxationResult out;
    const auto n_oltc = p.network.oltcs.size();
    out.frozen.assign(n_oltc, false);
    std::vector<int> last_dir(n_oltc, 0);
    BusLookup lookup(p.network);
    int total_moves = 0;

    for (int round = 1;; ++round) {
        const double slack = sched.slack(round);
        const auto limits = widen(p.v_limits_final, slack);
        OpfSolution sol = solve_continuous(p, limits, sched.solver);
        if (!sol.converged) {
            std::ostringstream msg;
            msg << "continuous OPF failed in relaxation round " << round << " with voltage limits widened by "
                << fmt::number(slack) << " pu (max violation " << fmt::number(sol.max_violation) << ")";
            throw SolverError(msg.str());
        }
        int moved = 0;
        for (std::size_t k = 0; k < n_oltc; ++k) {
            if (out.frozen[k]) continue;
            const auto& t = p.network.oltcs[k];
            int d = tap_update(t, sol.v_mag[lookup.at(t.controlled_bus)]);
            if (d != 0 && last_dir[k] == -d) {
                out.frozen[k] = true;
                d = 0;
            }
            if (d == 0) continue;
            set_tap(p.network, k, t.tap + d);
            last_dir[k] = d;
            ++moved;
        }
        total_moves += moved;
        const double final_violation = opf_max_violation(p, sol, p.v_limits_final);
        std::vector<int> taps;
        for (const auto& t : p.network.oltcs) taps.push_back(t.tap);
        out.trace.push_back({round, slack, sol.objective, final_violation, moved, taps});

        // Warm start the next round from this operating point.
        for (std::size_t i = 0; i < p.network.buses.size(); ++i) {
            p.network.buses[i].v_mag = sol.v_mag[i];
            p.network.buses[i].v_ang = sol.v_ang[i];
        }
        for (auto g : p.dispatchable) {
            p.network.generators[g].p = sol.gen_p[g];
            p.network.generators[g].q = sol.gen_q[g];
        }

        const bool at_final = slack == 0.0 || final_violation <= 1e-6;
        const bool give_up = round >= sched.rounds + sched.max_extra_rounds;
        if ((moved == 0 && at_final) || give_up) {
            sol.relaxation_rounds = round;
            sol.tap_moves = total_moves;
            sol.taps.clear();
            for (const auto& t : p.network.oltcs) sol.taps.push_back(t.tap);
            if (moved != 0) {
                // Taps changed after the last solve: the returned point no
                // longer matches them, so re-judge it with the new ratios.
                sol.converged = false;
            }
            sol.max_violation = opf_max_violation(p, sol, p.v_limits_final);
            sol.feasible = sol.converged && sol.max_violation <= 1e-6;
            out.solution = std::move(sol);
            return out;
        }
    }
}

inline OpfSolution solve_with_relaxation(const OpfProblem& problem, const RelaxationSchedule& sched = {}) {
    return solve_with_relaxation_traced(problem, sched).solution;
}

/// Writes an OPF result into the case: dispatch, voltages, setpoints and taps.
inline void apply_opf(NetworkCase& c, const OpfSolution& s) {
    for (std::size_t g = 0; g < c.generators.size(); ++g) {
        if (!c.generators[g].in_service) continue;
        c.generators[g].p = s.gen_p[g];
        c.generators[g].q = s.gen_q[g];
    }
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        c.buses[i].v_mag = s.v_mag[i];
        c.buses[i].v_ang = s.v_ang[i];
    }
    // Voltage setpoints follow the optimum so a power flow reproduces it.
    BusLookup lookup(c);
    for (auto& g : c.generators)
        if (g.in_service && g.kind != GenKind::DnPv) g.v_set = s.v_mag[lookup.at(g.bus_id)];
    for (std::size_t k = 0; k < s.taps.size() && k < c.oltcs.size(); ++k) set_tap(c, k, s.taps[k]);
}

inline std::string emit_opf_trace(const std::vector<OpfTraceRow>& rows) {
    std::ostringstream out;
    out << "round,slack,objective,max_violation,taps_moved\n";
    for (const auto& r : rows)
        out << r.round << ',' << fmt::number(r.slack) << ',' << fmt::number(r.objective) << ','
            << fmt::number(r.max_violation) << ',' << r.taps_moved << '\n';
    return out.str();
}

}  // namespace tdgen
