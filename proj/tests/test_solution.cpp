#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <blowlab/solution.hpp>

using namespace blowlab;

namespace {

ScatteringProfile standard() { return build_profile(ProfileKind::unbounded(0.25), 1.0, 0.0, {}); }
ScatteringProfile second_derivative_blowup() {
    return build_profile(ProfileKind::derivative_blowup(2, 0.2), 1.0, 0.0, {});
}

// int_Y^Z of the j=1 tail integrand over both rays on fixed panels, plus the pure power-law
// remainder f(Z) Z/(-decay-1) when the integrand decays like y^decay without oscillation
cplx tail_reference(const ScatteringProfile& p, double x, double t, int q1, int q2, double Y, double Z, bool geometric,
                    double width, double decay = 0.0) {
    using gk = boost::math::quadrature::gauss_kronrod<double, 61>;
    cplx total = 0.0;
    for (Branch br : {Branch::B2, Branch::B5}) {
        auto f = [&](double y) {
            const auto mu = multipliers(y, br);
            return kernel_F1(p, x, t, y, br) * std::pow(mu.a, q1 + 1) * std::pow(mu.b, q2) * ray_direction(br);
        };
        for (double a = Y; a < Z;) {
            const double b = std::min(Z, geometric ? a * 1.1 : a + width);
            total += cplx(gk::integrate([&](double y) { return f(y).real(); }, a, b, 0),
                          gk::integrate([&](double y) { return f(y).imag(); }, a, b, 0));
            a = b;
        }
        if (decay < -1.0) total += f(Z) * Z / (-decay - 1.0);
    }
    return total;
}

}  // namespace

TEST(Orders, EnumeratesWeightedOrders) {
    const auto o = orders_up_to(4);
    EXPECT_EQ(o.size(), 9u);
    for (auto [q1, q2] : o) EXPECT_LE(q1 + 2 * q2, 4);
    EXPECT_EQ(orders_up_to(0), (std::vector<Order>{{0, 0}}));
}

TEST(Prediction, ReferenceValues) {
    EXPECT_NEAR(asymptotic_prediction(standard(), 1.0 - 1e-4, 0, 0), 3.53359555995217990133239044353, 1e-13);
    const auto p = second_derivative_blowup();
    EXPECT_NEAR(asymptotic_prediction(p, 1.0 - 1e-4, 1, 1), -0.570290207650217476305371326136, 1e-13);
    EXPECT_NEAR(asymptotic_prediction(p, 1.0 - 1e-4, 3, 0), 0.570290207650217476305371326136, 1e-13);
    EXPECT_THROW(asymptotic_prediction(p, 1.0, 3, 0), ParamError);
    EXPECT_THROW(asymptotic_prediction(p, 0.5, 2, 0), ParamError);
    EXPECT_THROW(asymptotic_prediction(standard(), 0.5, 1, 0), ParamError);
}

TEST(Evaluate, RealFiniteWithBudgets) {
    const auto p = standard();
    const auto s = u_eval(p, 0.4, 0.6, 4);
    EXPECT_EQ(s.derivs.size(), 9u);
    EXPECT_TRUE(s.verified);
    EXPECT_GT(s.nodes, 0u);
    EXPECT_LE(s.norm_est, 1.0 / p.M);
    for (auto& [o, v] : s.derivs) {
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GT(s.err.at(o).total(), 0.0);
        EXPECT_LT(s.err.at(o).total(), 1e-9 * std::max(1.0, std::abs(v)));
    }
    EXPECT_THROW(s.value(5, 0), ParamError);
}

TEST(Evaluate, BudgetCoversTighterSolve) {
    const auto p = standard();
    EvalOptions loose;
    loose.tol = 1e-6;
    loose.mode = SeriesMode::neumann(2);
    EvalOptions tight;
    tight.tol = 1e-13;
    const auto a = u_eval(p, -0.8, 0.7, 2, loose);
    const auto b = u_eval(p, -0.8, 0.7, 2, tight);
    for (auto& [o, v] : b.derivs) {
        const double diff = std::abs(a.value(o.first, o.second) - v);
        EXPECT_LE(diff, a.err.at(o).total() + b.err.at(o).total() + 1e-13 * std::abs(v)) << o.first << o.second;
    }
}

TEST(Evaluate, SelfConvergence) {
    const auto p = standard();
    EvalOptions a, b;
    a.tol = 1e-8;
    b.tol = 1e-12;
    const double ua = u_eval(p, 1.1, 0.9, 0, a).value(0, 0), ub = u_eval(p, 1.1, 0.9, 0, b).value(0, 0);
    EXPECT_LT(std::abs(ua - ub), 1e-8);
}

TEST(Evaluate, LeadingTermDominates) {
    const auto p = standard();
    EvalOptions o;
    o.want_leading = true;
    const auto s = u_eval(p, 0.2, 0.8, 2, o);
    for (auto& [ord, v] : s.derivs) EXPECT_LE(std::abs(v - s.leading.at(ord)), 2.0 / p.M * std::abs(v) + 1e-12);
}

TEST(Evaluate, NullProfileGivesZeros) {
    const auto p = null_profile();
    EvalOptions o;
    o.want_leading = true;
    const auto s = u_eval(p, 3.0, 0.5, 4, o);
    for (auto& [ord, v] : s.derivs) {
        EXPECT_EQ(v, 0.0);
        EXPECT_EQ(s.err.at(ord).total(), 0.0);
        EXPECT_EQ(s.leading.at(ord), 0.0);
    }
    EXPECT_EQ(u_eval(p, 0.0, 1.0, 6).value(6, 0), 0.0);
}

TEST(Evaluate, DomainChecks) {
    const auto p = standard();
    EXPECT_THROW(u_eval(p, 25.0, 0.5, 0), WindowError);
    EvalOptions o;
    o.enforce_window = false;
    EXPECT_FALSE(u_eval(p, 25.0, 0.5, 0, o).verified);
    EXPECT_THROW(u_eval(p, 0.0, -0.1, 0), ParamError);
    EXPECT_THROW(u_eval(p, 0.0, 1.1, 0), ParamError);
    EXPECT_THROW(u_eval(p, 0.0, 0.5, -1), ParamError);
    EXPECT_THROW(u_eval(p, 0.0, 1.0, 0), IntegrabilityError);
    EXPECT_THROW(u_eval(second_derivative_blowup(), 0.0, 1.0, 3), IntegrabilityError);
}

TEST(BlowupTime, FiniteAndApproachedFromBelow) {
    const auto p = second_derivative_blowup();
    const auto atT = u_eval(p, p.x0, 1.0, 2);
    for (auto& [o, v] : atT.derivs) {
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_LT(atT.err.at(o).total(), 1e-6);
    }
    double prev = std::numeric_limits<double>::infinity();
    for (double tau : {1e-2, 1e-3, 1e-4}) {
        const double gap = std::abs(u_eval(p, p.x0, 1.0 - tau, 0).value(0, 0) - atT.value(0, 0));
        EXPECT_LT(gap, prev);
        prev = gap;
    }
    EXPECT_LT(prev, 1e-3);
}

TEST(BlowupTime, ClosedFormTailOnTheLine) {
    const auto p = second_derivative_blowup();
    const double Y = 50.0;
    const cplx tail = j1_tail(p, p.x0, 1.0, 0, 0, Y);
    const cplx ref = tail_reference(p, p.x0, 1.0, 0, 0, Y, 1e8, true, 0.0, -3.6);
    EXPECT_NEAR(std::abs(tail - ref), 0.0, 1e-11 * std::abs(ref));
    const cplx t11 = j1_tail(p, p.x0, 1.0, 0, 1, 500.0);
    const cplx r11 = tail_reference(p, p.x0, 1.0, 0, 1, 500.0, 1e12, true, 0.0, -1.6);
    EXPECT_NEAR(std::abs(t11 - r11), 0.0, 1e-9 * std::abs(r11));
}

TEST(BlowupTime, ClosedFormTailOffTheLine) {
    const auto p = second_derivative_blowup();
    const double Y = 50.0, x = p.x0 + 0.8;
    const cplx tail = j1_tail(p, x, 1.0, 0, 0, Y);
    // the oscillating remainder beyond 2e4 is of order 2e4^{-3.6}/0.4
    const cplx ref = tail_reference(p, x, 1.0, 0, 0, Y, 2e4, false, 4.0 * pi / 0.8 / 2.0);
    EXPECT_NEAR(std::abs(tail - ref), 0.0, 1e-9 * std::abs(ref));
    EXPECT_EQ(j1_tail(null_profile(), x, 1.0, 0, 0, Y), cplx(0.0));
}

TEST(Grid, RecordsErrorsPerCell) {
    const auto p = standard();
    const auto cells = u_grid(p, {0.0, 30.0}, {0.5, 1.0}, 0);
    ASSERT_EQ(cells.size(), 4u);
    EXPECT_TRUE(cells[0].sample.has_value());
    EXPECT_EQ(cells[1].error_kind, "IntegrabilityError");
    EXPECT_FALSE(cells[1].sample.has_value());
    ASSERT_TRUE(cells[2].sample.has_value());
    EXPECT_EQ(cells[2].x, 30.0);
    EXPECT_FALSE(cells[2].sample->verified);
    EXPECT_EQ(cells[3].error_kind, "IntegrabilityError");
    EXPECT_DOUBLE_EQ(cells[0].sample->value(0, 0), u_eval(p, 0.0, 0.5, 0).value(0, 0));
}

TEST(Jump, AssembledRowMatchesPointValues) {
    const auto p = standard();
    const auto op = assemble(p, build_grid(p, 0.5, 1e-10, 1), 0.2, 0.5);
    const auto sol = solve_nodes(op);
    const cplx k(0.7, 2.3);
    const auto n = n_assemble(op, sol, k);
    EXPECT_EQ(n[0], m_at(op, sol, omega * k).value);
    EXPECT_EQ(n[1], m_at(op, sol, omega2 * k).value);
    EXPECT_EQ(n[2], m_at(op, sol, k).value);
    for (auto z : n_assemble(op, cplx(1e7, 3.0))) EXPECT_NEAR(std::abs(z - 1.0), 0.0, 1e-8);
}
