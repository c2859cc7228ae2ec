#pragma once

// Bus admittance matrix and the polar-form AC injection equations with their
// first and second derivatives. Both the power-flow and the OPF solvers are
// built on these.

#include <complex>
#include <vector>

#include <Eigen/Sparse>

#include "tdgen/netmodel.hpp"

namespace tdgen {

using Complex = std::complex<double>;
using SparseComplex = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;
using Triplets = std::vector<Eigen::Triplet<double>>;

/// Pi-model branch admittances (from/to blocks of the two-port).
struct BranchAdmittance {
    Complex ff, ft, tf, tt;
};

inline BranchAdmittance branch_admittance(const Branch& br) {
    if (br.r == 0.0 && br.x == 0.0) throw ModelError("branch with zero impedance");
    const Complex y = 1.0 / Complex(br.r, br.x);
    const Complex charging(0.0, br.b_charging / 2.0);
    const Complex tap = std::polar(br.ratio, br.phase_shift);
    return {(y + charging) / (br.ratio * br.ratio), -y / std::conj(tap), -y / tap, y + charging};
}

/// N x N bus admittance matrix in the bus-table order of `c`.
inline SparseComplex build_ybus(const NetworkCase& c) {
    const auto n = static_cast<Eigen::Index>(c.buses.size());
    BusLookup lookup(c);
    std::vector<Eigen::Triplet<Complex>> t;
    t.reserve(c.branches.size() * 4 + c.buses.size());
    for (std::size_t k = 0; k < c.branches.size(); ++k) {
        const auto& br = c.branches[k];
        if (!br.in_service) continue;
        auto f = lookup.find(br.from_bus), to = lookup.find(br.to_bus);
        if (!f || !to) throw ModelError("branch " + std::to_string(k + 1) + " references a missing bus");
        if (br.r == 0.0 && br.x == 0.0)
            throw ModelError("branch " + std::to_string(k + 1) + " is in service with zero impedance");
        const auto a = branch_admittance(br);
        const auto fi = static_cast<Eigen::Index>(*f), ti = static_cast<Eigen::Index>(*to);
        t.emplace_back(fi, fi, a.ff);
        t.emplace_back(fi, ti, a.ft);
        t.emplace_back(ti, fi, a.tf);
        t.emplace_back(ti, ti, a.tt);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& b = c.buses[static_cast<std::size_t>(i)];
        // Diagonal entry always present so every bus has a structural nonzero.
        t.emplace_back(i, i, Complex(b.g_shunt, b.b_shunt));
    }
    SparseComplex y(n, n);
    y.setFromTriplets(t.begin(), t.end());
    y.makeCompressed();
    return y;
}

struct BusInjections {
    Eigen::VectorXd p;
    Eigen::VectorXd q;
};

/// Net injections P_i + jQ_i = V_i * conj(sum_k Y_ik V_k) in polar form.
inline BusInjections injections(const SparseComplex& y, const Eigen::VectorXd& vm, const Eigen::VectorXd& va) {
    const auto n = y.rows();
    BusInjections s{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (SparseComplex::InnerIterator it(y, i); it; ++it) {
            const auto k = it.col();
            const double g = it.value().real(), b = it.value().imag();
            const double d = va[i] - va[k];
            const double c = std::cos(d), sn = std::sin(d);
            s.p[i] += vm[i] * vm[k] * (g * c + b * sn);
            s.q[i] += vm[i] * vm[k] * (g * sn - b * c);
        }
    }
    return s;
}

/// Full Jacobian of [P; Q] (2N rows) with respect to [theta; V] (2N columns),
/// appended to `out` with the given row/column offsets.
inline void injection_jacobian(const SparseComplex& y, const Eigen::VectorXd& vm, const Eigen::VectorXd& va,
                               const BusInjections& s, Triplets& out, Eigen::Index row0 = 0, Eigen::Index col0 = 0) {
    const auto n = y.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto rp = row0 + i, rq = row0 + n + i;
        for (SparseComplex::InnerIterator it(y, i); it; ++it) {
            const auto k = it.col();
            const double g = it.value().real(), b = it.value().imag();
            if (k == i) {
                out.emplace_back(rp, col0 + i, -s.q[i] - b * vm[i] * vm[i]);
                out.emplace_back(rp, col0 + n + i, s.p[i] / vm[i] + g * vm[i]);
                out.emplace_back(rq, col0 + i, s.p[i] - g * vm[i] * vm[i]);
                out.emplace_back(rq, col0 + n + i, s.q[i] / vm[i] - b * vm[i]);
                continue;
            }
            const double d = va[i] - va[k];
            const double c = std::cos(d), sn = std::sin(d);
            const double gc_bs = g * c + b * sn, gs_bc = g * sn - b * c;
            out.emplace_back(rp, col0 + k, vm[i] * vm[k] * gs_bc);
            out.emplace_back(rp, col0 + n + k, vm[i] * gc_bs);
            out.emplace_back(rq, col0 + k, -vm[i] * vm[k] * gc_bs);
            out.emplace_back(rq, col0 + n + k, vm[i] * gs_bc);
        }
    }
}

/// Hessian of sum_i (lam_p[i] P_i + lam_q[i] Q_i) with respect to [theta; V],
/// appended to `out` (duplicates are summed by setFromTriplets).
inline void injection_hessian(const SparseComplex& y, const Eigen::VectorXd& vm, const Eigen::VectorXd& va,
                              const Eigen::VectorXd& lam_p, const Eigen::VectorXd& lam_q, Triplets& out,
                              Eigen::Index offset = 0) {
    const auto n = y.rows();
    auto th = [&](Eigen::Index i) { return offset + i; };
    auto v = [&](Eigen::Index i) { return offset + n + i; };
    for (Eigen::Index i = 0; i < n; ++i) {
        for (SparseComplex::InnerIterator it(y, i); it; ++it) {
            const auto k = it.col();
            const double g = it.value().real(), b = it.value().imag();
            // term = V_i V_k f(theta_i - theta_k), f = alpha cos + beta sin
            const double alpha = lam_p[i] * g - lam_q[i] * b;
            const double beta = lam_p[i] * b + lam_q[i] * g;
            if (k == i) {
                out.emplace_back(v(i), v(i), 2.0 * alpha);
                continue;
            }
            const double d = va[i] - va[k];
            const double c = std::cos(d), sn = std::sin(d);
            const double f = alpha * c + beta * sn;
            const double df = -alpha * sn + beta * c;
            const double vv = vm[i] * vm[k];
            // theta-theta (f'' = -f)
            out.emplace_back(th(i), th(i), -vv * f);
            out.emplace_back(th(k), th(k), -vv * f);
            out.emplace_back(th(i), th(k), vv * f);
            out.emplace_back(th(k), th(i), vv * f);
            // theta-V
            const double a_ii = vm[k] * df, a_ik = vm[i] * df;
            out.emplace_back(th(i), v(i), a_ii);
            out.emplace_back(v(i), th(i), a_ii);
            out.emplace_back(th(i), v(k), a_ik);
            out.emplace_back(v(k), th(i), a_ik);
            out.emplace_back(th(k), v(i), -a_ii);
            out.emplace_back(v(i), th(k), -a_ii);
            out.emplace_back(th(k), v(k), -a_ik);
            out.emplace_back(v(k), th(k), -a_ik);
            // V-V
            out.emplace_back(v(i), v(k), f);
            out.emplace_back(v(k), v(i), f);
        }
    }
}

struct BranchFlow {
    double p_from = 0.0, q_from = 0.0, p_to = 0.0, q_to = 0.0;

    double loss_p() const { return p_from + p_to; }
};

inline std::vector<BranchFlow> branch_flows(const NetworkCase& c, const Eigen::VectorXd& vm,
                                            const Eigen::VectorXd& va) {
    BusLookup lookup(c);
    std::vector<BranchFlow> flows(c.branches.size());
    for (std::size_t k = 0; k < c.branches.size(); ++k) {
        const auto& br = c.branches[k];
        if (!br.in_service) continue;
        const auto f = lookup.at(br.from_bus), t = lookup.at(br.to_bus);
        const auto a = branch_admittance(br);
        const Complex vf = std::polar(vm[static_cast<Eigen::Index>(f)], va[static_cast<Eigen::Index>(f)]);
        const Complex vt = std::polar(vm[static_cast<Eigen::Index>(t)], va[static_cast<Eigen::Index>(t)]);
        const Complex sf = vf * std::conj(a.ff * vf + a.ft * vt);
        const Complex st = vt * std::conj(a.tf * vf + a.tt * vt);
        flows[k] = {sf.real(), sf.imag(), st.real(), st.imag()};
    }
    return flows;
}

}  // namespace tdgen
