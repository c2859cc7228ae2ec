#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "tdgen/caseio.hpp"
#include "tdgen/netmodel.hpp"

using namespace tdgen;

TEST(Validate, WellFormedTwoBusCaseIsClean) {
    auto c = test::two_bus(0.5, 0.1, 0.1);
    EXPECT_TRUE(validate(c).ok());
}

TEST(Validate, ReportsMissingSlack) {
    auto c = test::two_bus(0.5, 0.1, 0.1);
    c.buses[0].kind = BusKind::PV;
    auto report = validate(c);
    EXPECT_TRUE(report.has(IssueCode::MissingSlack));
}

TEST(Validate, ReportsDanglingBranchReference) {
    auto c = test::two_bus(0.5, 0.1, 0.1);
    c.branches[0].to_bus = 99;
    auto report = validate(c);
    EXPECT_TRUE(report.has(IssueCode::DanglingReference));
}

TEST(Validate, ReportsDuplicatesIslandsAndBadLimits) {
    auto c = test::two_bus(0.5, 0.1, 0.1);
    Bus extra;
    extra.id = 2;
    extra.v_min = 1.1;
    extra.v_max = 0.9;
    c.buses.push_back(extra);
    Bus lonely;
    lonely.id = 7;
    c.buses.push_back(lonely);
    auto report = validate(c);
    EXPECT_TRUE(report.has(IssueCode::DuplicateBusId));
    EXPECT_TRUE(report.has(IssueCode::VoltageLimits));
    EXPECT_TRUE(report.has(IssueCode::IslandCount));
    EXPECT_TRUE(report.has(IssueCode::MissingSlack));
}

TEST(Validate, ReportsOltcRatioDrift) {
    auto c = test::two_bus(0.5, 0.1, 0.1);
    OltcTransformer t;
    t.branch = 0;
    t.controlled_bus = 2;
    t.tap = 2;
    t.tap_step = 0.01;
    c.oltcs.push_back(t);
    EXPECT_TRUE(validate(c).has(IssueCode::OltcRatioMismatch));
    set_tap(c, 0, 2);
    EXPECT_DOUBLE_EQ(c.branches[0].ratio, 1.02);
    EXPECT_TRUE(validate(c).ok());
    EXPECT_THROW(set_tap(c, 0, 17), ModelError);
}

TEST(TotalLoad, SumsInServiceBuses) {
    auto c = test::two_bus(0.5, 0.2, 0.1);
    c.buses[0].p_load = 0.3;
    auto load = total_load(c);
    EXPECT_DOUBLE_EQ(load.p, 0.8);
    EXPECT_DOUBLE_EQ(load.q, 0.2);
    c.buses[0].in_service = false;
    EXPECT_DOUBLE_EQ(total_load(c).p, 0.5);
}

TEST(TotalLoad, EmptyCaseIsZero) {
    NetworkCase c;
    auto load = total_load(c);
    EXPECT_EQ(load.p, 0.0);
    EXPECT_EQ(load.q, 0.0);
}

TEST(TotalLoad, MiniDnTemplateMatchesHandSum) {
    // Sum of the PD column of templates/mini-dn/case.m divided by baseMVA.
    auto c = load_bundle(test::template_dir("mini-dn"));
    EXPECT_NEAR(total_load(c).p, 0.1, 1e-15);
    EXPECT_NEAR(total_load(c).q, 0.04, 1e-15);
}

TEST(TotalLoad, AdditiveUnderDisjointUnion) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = test::random_case(rng, 5);
        auto b = test::random_case(rng, 6);
        NetworkCase u = a;
        for (auto bus : b.buses) {
            bus.id += 100;
            u.buses.push_back(bus);
        }
        EXPECT_NEAR(total_load(u).p, total_load(a).p + total_load(b).p, 1e-12);
        EXPECT_NEAR(total_load(u).q, total_load(a).q + total_load(b).q, 1e-12);
    }
}

namespace {

NetworkCase with_dgs(double load, std::vector<double> dg) {
    auto c = test::two_bus(load, 0.0, 0.1);
    for (double p : dg) {
        Generator g;
        g.bus_id = 2;
        g.p = p;
        g.kind = GenKind::DnPv;
        g.controllable = false;
        c.generators.push_back(g);
    }
    return c;
}

}  // namespace

TEST(Penetration, RatioOfDgToLoad) {
    EXPECT_DOUBLE_EQ(penetration_level(with_dgs(1.0, {0.2, 0.3})), 0.5);
    EXPECT_EQ(penetration_level(with_dgs(1.0, {})), 0.0);
    EXPECT_DOUBLE_EQ(penetration_level(with_dgs(1.0, {1.15})), 1.15);
}

TEST(Penetration, TnUnitsDoNotCount) {
    auto c = with_dgs(1.0, {0.25});
    c.generators[0].p = 3.0;  // slack unit
    EXPECT_DOUBLE_EQ(penetration_level(c), 0.25);
}

TEST(Penetration, ZeroLoadIsUndefined) {
    EXPECT_THROW(penetration_level(with_dgs(0.0, {0.1})), ModelError);
}

TEST(Penetration, HomogeneousOfDegreeZero) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        auto c = with_dgs(u(rng), {u(rng), u(rng)});
        const double before = penetration_level(c);
        const double k = u(rng);
        for (auto& b : c.buses) b.p_load *= k;
        for (auto& g : c.generators) g.p *= k;
        EXPECT_NEAR(penetration_level(c), before, 1e-12 * before);
    }
}

TEST(Rebase, PreservesPhysicalQuantities) {
    auto c = test::two_bus(0.5, 0.2, 0.1, 0.02);
    rebase(c, 10.0);
    EXPECT_DOUBLE_EQ(c.buses[1].p_load, 5.0);
    EXPECT_DOUBLE_EQ(c.branches[0].x, 0.01);
    EXPECT_DOUBLE_EQ(c.branches[0].r, 0.002);
}
