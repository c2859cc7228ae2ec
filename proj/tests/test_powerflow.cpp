#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tdgen/caseio.hpp"
#include "tdgen/powerflow.hpp"

using namespace tdgen;

namespace {

// Lossless line of reactance x from a 1.0 pu slack to a load P + j0. Reactive
// balance at the load gives V2 = cos(d), active balance V2 sin(d) / x = P,
// so sin(2d) = 2 P x.
struct TwoBusExact {
    long double v2, theta2;
};

TwoBusExact two_bus_exact(long double p, long double x) {
    const long double d = std::asin(2.0L * p * x) / 2.0L;
    return {std::cos(d), -d};
}

Eigen::VectorXd as_vec(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())); }

std::vector<BusKind> kinds_of(const NetworkCase& c) {
    std::vector<BusKind> k;
    for (const auto& b : c.buses) k.push_back(b.kind);
    return k;
}

}  // namespace

TEST(Ybus, SingleLine) {
    auto c = test::two_bus(0.0, 0.0, 0.1);
    auto y = Eigen::MatrixXcd(build_ybus(c));
    EXPECT_NEAR(std::abs(y(0, 0) - Complex(0, -10)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(y(0, 1) - Complex(0, 10)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(y(1, 0) - Complex(0, 10)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(y(1, 1) - Complex(0, -10)), 0.0, 1e-12);
}

TEST(Ybus, OutOfServiceBranchContributesNothing) {
    auto c = test::two_bus(0.0, 0.0, 0.1);
    c.branches.push_back(c.branches[0]);
    c.branches[1].in_service = false;
    c.branches[1].x = 0.02;
    EXPECT_TRUE(Eigen::MatrixXcd(build_ybus(c)).isApprox(Eigen::MatrixXcd(build_ybus(test::two_bus(0, 0, 0.1)))));
}

TEST(Ybus, ZeroImpedanceInServiceThrows) {
    auto c = test::two_bus(0.0, 0.0, 0.1);
    c.branches[0].x = 0.0;
    EXPECT_THROW(build_ybus(c), ModelError);
}

TEST(Ybus, MiniTnRowSumsAreHalfCharging) {
    auto c = load_bundle(test::template_dir("mini-tn"));
    auto y = Eigen::MatrixXcd(build_ybus(c));
    BusLookup lookup(c);
    for (std::size_t i = 0; i < c.buses.size(); ++i) {
        double half_b = 0.0;
        for (const auto& br : c.branches)
            if (lookup.at(br.from_bus) == i || lookup.at(br.to_bus) == i) half_b += br.b_charging / 2.0;
        const Complex sum = y.row(static_cast<Eigen::Index>(i)).sum();
        EXPECT_NEAR(sum.real(), 0.0, 1e-9) << "bus " << c.buses[i].id;
        EXPECT_NEAR(sum.imag(), half_b, 1e-9) << "bus " << c.buses[i].id;
    }
}

TEST(Solve, TwoBusClosedForm) {
    auto c = test::two_bus(0.1, 0.0, 0.1);
    SolverOptions opts;
    opts.tolerance = 1e-13;
    auto sol = solve(c, opts);
    ASSERT_TRUE(sol.converged);
    const auto exact = two_bus_exact(0.1L, 0.1L);
    EXPECT_NEAR(sol.v_mag[1], static_cast<double>(exact.v2), 1e-10);
    EXPECT_NEAR(sol.v_ang[1], static_cast<double>(exact.theta2), 1e-10);
    // Hand-evaluated golden values of the same closed form.
    EXPECT_NEAR(sol.v_mag[1], 0.999949993748687164748760349327, 1e-10);
    EXPECT_NEAR(sol.v_ang[1], -0.0100006667866952458753074931049, 1e-10);
    EXPECT_NEAR(sol.gen_p[0], 0.1, 1e-10);
}

TEST(Solve, TwoBusClosedFormAcrossLoads) {
    for (double p : {0.01, 0.5, 1.0, 2.0, 4.5}) {
        auto c = test::two_bus(p, 0.0, 0.1);
        SolverOptions opts;
        opts.tolerance = 1e-12;
        opts.flat_start = true;
        auto sol = solve(c, opts);
        ASSERT_TRUE(sol.converged) << p;
        const auto exact = two_bus_exact(p, 0.1L);
        EXPECT_NEAR(sol.v_mag[1], static_cast<double>(exact.v2), 1e-10) << p;
        EXPECT_NEAR(sol.v_ang[1], static_cast<double>(exact.theta2), 1e-10) << p;
    }
}

TEST(Solve, ZeroLoadIsFlatInOneIteration) {
    auto c = test::two_bus(0.0, 0.0, 0.1, 0.01);
    auto sol = solve(c, {.flat_start = true});
    ASSERT_TRUE(sol.converged);
    EXPECT_EQ(sol.iterations, 1);
    EXPECT_EQ(sol.v_mag[1], 1.0);
    EXPECT_EQ(sol.v_ang[1], 0.0);
    EXPECT_EQ(sol.branch_flows[0].p_from, 0.0);
    EXPECT_EQ(sol.branch_flows[0].q_to, 0.0);
}

TEST(Solve, SlackAngleAndPvSetpointsHeld) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        auto c = test::random_case(rng, 8);
        c.buses[0].v_ang = 0.1 * trial - 0.3;
        auto sol = solve(c, {.flat_start = true});
        ASSERT_TRUE(sol.converged);
        EXPECT_EQ(sol.v_ang[0], c.buses[0].v_ang);
        for (std::size_t g = 0; g < c.generators.size(); ++g) {
            const auto i = BusLookup(c).at(c.generators[g].bus_id);
            EXPECT_EQ(sol.v_mag[i], c.generators[g].v_set);
        }
    }
}

TEST(Solve, IndependentMismatchAgrees) {
    std::mt19937_64 rng(99);
    int converged = 0;
    for (int trial = 0; trial < 40; ++trial) {
        auto c = test::random_case(rng, 2 + trial % 9);
        auto sol = solve(c);
        if (!sol.converged) continue;
        ++converged;
        EXPECT_LE(sol.max_mismatch, 1e-8);
        EXPECT_NEAR(test::independent_max_mismatch(c, sol), sol.max_mismatch, 1e-12) << trial;
    }
    EXPECT_GE(converged, 35);
}

TEST(Solve, PowerBalance) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto c = test::random_case(rng, 3 + trial % 8);
        auto sol = solve(c);
        ASSERT_TRUE(sol.converged);
        double gen = 0.0, load = 0.0, losses = 0.0;
        for (double p : sol.gen_p) gen += p;
        for (std::size_t i = 0; i < c.buses.size(); ++i)
            load += c.buses[i].p_load + c.buses[i].g_shunt * sol.v_mag[i] * sol.v_mag[i];
        for (const auto& f : sol.branch_flows) losses += f.loss_p();
        EXPECT_NEAR(gen - load - losses, 0.0, 1e-7) << trial;
    }
}

TEST(Solve, ScalingInvariance) {
    auto doc = parse_case(fmt::read_file(test::template_dir("mini-tn") + "/case.m"));
    auto base = solve(to_network(doc), {.flat_start = true});
    ASSERT_TRUE(base.converged);
    for (double k : {0.5, 10.0, 1000.0}) {
        auto scaled = doc;
        scaled.base_mva *= k;
        for (auto& r : scaled.bus)
            for (int c : {col::PD, col::QD, col::GS, col::BS}) r[c] *= k;
        for (auto& r : scaled.gen)
            for (int c : {col::PG, col::QG, col::QMAX, col::QMIN, col::PMAX, col::PMIN}) r[c] *= k;
        auto sol = solve(to_network(scaled), {.flat_start = true});
        ASSERT_TRUE(sol.converged);
        for (std::size_t i = 0; i < sol.v_mag.size(); ++i) {
            EXPECT_NEAR(sol.v_mag[i], base.v_mag[i], 1e-12);
            EXPECT_NEAR(sol.v_ang[i], base.v_ang[i], 1e-12);
        }
    }
}

TEST(Solve, QLimitSwitching) {
    auto c = test::two_bus(0.5, 0.3, 0.1);
    Bus b3;
    b3.id = 3;
    b3.kind = BusKind::PV;
    c.buses.push_back(b3);
    Generator g;
    g.bus_id = 3;
    g.p = 0.2;
    g.q_min = -0.05;
    g.q_max = 0.05;
    g.v_set = 1.05;
    c.generators.push_back(g);
    Branch br;
    br.from_bus = 2;
    br.to_bus = 3;
    br.x = 0.1;
    c.branches.push_back(br);

    auto free = solve(c);
    ASSERT_TRUE(free.converged);
    EXPECT_GT(free.gen_q[1], 0.05);
    auto limited = solve(c, {.enforce_q_limits = true});
    ASSERT_TRUE(limited.converged);
    EXPECT_EQ(limited.bus_kinds[2], BusKind::PQ);
    EXPECT_EQ(limited.gen_q[1], 0.05);
    EXPECT_LT(limited.v_mag[2], 1.05);
    EXPECT_NEAR(test::independent_max_mismatch(c, limited), limited.max_mismatch, 1e-12);
}

TEST(Solve, DivergenceIsReportedNotSilent) {
    auto c = test::two_bus(10.0, 0.0, 0.1);
    auto sol = solve(c, {.flat_start = true});
    EXPECT_FALSE(sol.converged);
    EXPECT_GT(sol.max_mismatch, 1e-8);
    EXPECT_EQ(sol.iterations, 21);
}

TEST(Solve, SingularJacobianThrows) {
    // A 5 pu shunt capacitor against a 10 pu line zeroes dQ/dV at the flat start.
    auto c = test::two_bus(0.0, 0.0, 0.1);
    c.buses[1].b_shunt = 5.0;
    c.buses[1].p_load = 0.1;
    EXPECT_THROW(solve(c, {.flat_start = true}), SolverError);
}

TEST(Solve, TopologyPreconditions) {
    auto c = test::two_bus(0.1, 0.0, 0.1);
    c.buses[0].kind = BusKind::PQ;
    EXPECT_THROW(solve(c), ModelError);
    auto d = test::two_bus(0.1, 0.0, 0.1);
    d.branches[0].in_service = false;
    EXPECT_THROW(solve(d), ModelError);
}

TEST(Jacobian, MatchesCentralDifferences) {
    std::mt19937_64 rng(31337);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        auto c = test::random_case(rng, 2 + trial % 9);
        PowerFlowProblem prob(c, kinds_of(c), std::vector<double>(c.buses.size(), 0.0));
        Eigen::VectorXd vm(c.buses.size()), va(c.buses.size());
        for (std::size_t i = 0; i < c.buses.size(); ++i) {
            vm[static_cast<Eigen::Index>(i)] = 1.0 + 0.05 * u(rng);
            va[static_cast<Eigen::Index>(i)] = 0.2 * u(rng);
        }
        const Eigen::MatrixXd j = Eigen::MatrixXd(prob.jacobian(vm, va));
        const auto x0 = prob.gather(vm, va);
        const double h = 1e-6;
        for (Eigen::Index col = 0; col < x0.size(); ++col) {
            Eigen::VectorXd vp = vm, ap = va, vmn = vm, amn = va;
            Eigen::VectorXd xp = x0, xm = x0;
            xp[col] += h;
            xm[col] -= h;
            prob.scatter(xp, vp, ap);
            prob.scatter(xm, vmn, amn);
            const Eigen::VectorXd fd = (prob.residual(vp, ap) - prob.residual(vmn, amn)) / (2.0 * h);
            for (Eigen::Index row = 0; row < fd.size(); ++row) {
                const double a = j(row, col), b = fd[row];
                EXPECT_LE(std::abs(a - b), 1e-6 * std::max(1.0, std::abs(a)))
                    << "trial " << trial << " J(" << row << "," << col << ") " << a << " vs " << b;
            }
        }
    }
}

TEST(Jacobian, FullInjectionJacobianMatchesDifferences) {
    std::mt19937_64 rng(4);
    auto c = test::random_case(rng, 7);
    auto y = build_ybus(c);
    const auto n = static_cast<Eigen::Index>(c.buses.size());
    Eigen::VectorXd vm = Eigen::VectorXd::Constant(n, 1.0), va = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        vm[i] += 0.01 * static_cast<double>(i);
        va[i] = -0.03 * static_cast<double>(i);
    }
    Triplets t;
    injection_jacobian(y, vm, va, injections(y, vm, va), t);
    Eigen::SparseMatrix<double> js(2 * n, 2 * n);
    js.setFromTriplets(t.begin(), t.end());
    const Eigen::MatrixXd j(js);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < 2 * n; ++k) {
        Eigen::VectorXd vp = vm, ap = va, vmn = vm, amn = va;
        if (k < n) {
            ap[k] += h;
            amn[k] -= h;
        } else {
            vp[k - n] += h;
            vmn[k - n] -= h;
        }
        auto sp = injections(y, vp, ap), sm = injections(y, vmn, amn);
        Eigen::VectorXd fd(2 * n);
        fd << (sp.p - sm.p) / (2 * h), (sp.q - sm.q) / (2 * h);
        for (Eigen::Index r = 0; r < 2 * n; ++r)
            EXPECT_LE(std::abs(j(r, k) - fd[r]), 1e-6 * std::max(1.0, std::abs(j(r, k))));
    }
}

TEST(Solve, WarmStartReusesStoredState) {
    auto c = load_bundle(test::template_dir("mini-tn"));
    auto cold = solve(c, {.flat_start = true});
    ASSERT_TRUE(cold.converged);
    apply_solution(c, cold);
    auto warm = solve(c);
    ASSERT_TRUE(warm.converged);
    EXPECT_LE(warm.iterations, 2);
    EXPECT_LT(warm.iterations, cold.iterations);
}
