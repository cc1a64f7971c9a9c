#include <gtest/gtest.h>

#include <blowlab/series.hpp>

using namespace blowlab;

namespace {

ScatteringProfile standard() { return build_profile(ProfileKind::unbounded(0.25), 1.0, 0.0, {}); }

struct Fixture {
    ScatteringProfile p = standard();
    std::shared_ptr<const Discretization> disc = discretize(build_grid(p, 0.5, 1e-10, 4));
    KernelOperator op(double x = 0.3, double t = 0.5) const { return assemble(p, disc, x, t); }
};

}  // namespace

TEST(Series, NeumannAgreesWithDirectSolve) {
    const Fixture f;
    const auto op = f.op();
    const auto direct = m1_series(op, SeriesMode::direct());
    EXPECT_TRUE(direct.direct());
    const auto full = m1_series(op, SeriesMode::neumann(40));
    EXPECT_EQ(full.j_used, 40);
    EXPECT_NEAR(std::abs(full.value - direct.value), 0.0, 1e-15 * std::abs(direct.value));
    // the truncation bound excludes roundoff, which scales with the l1 mass of the terms
    double mass = 0.0;
    for (auto z : op.F1w) mass += std::abs(z);
    for (int J : {1, 2, 3, 5}) {
        const auto part = m1_series(op, SeriesMode::neumann(J));
        EXPECT_LE(std::abs(part.value - direct.value), part.trunc_bound + 1e-14 * mass) << J;
        EXPECT_GT(part.trunc_bound, 0.0);
    }
}

TEST(Series, AutomaticModeStopsAtRequestedAccuracy) {
    const Fixture f;
    const auto op = assemble(f.p, discretize(f.disc->grid, 0), 0.3, 0.5);
    const auto r = m1_series(op, SeriesMode::automatic(1e-12));
    EXPECT_FALSE(r.direct());
    EXPECT_LE(r.trunc_bound, 1e-12 * std::abs(r.value));
    EXPECT_LT(r.j_used, 20);
    EXPECT_THROW(m1_series(op, SeriesMode::direct()), BudgetError);
}

TEST(Series, TermsDecayGeometrically) {
    const Fixture f;
    const auto sups = term_sups(f.op(), 8);
    ASSERT_EQ(sups.size(), 8u);
    for (int j = 1; j <= 8; ++j) {
        EXPECT_LE(sups[j - 1], std::pow(f.p.M, -j) * 1.01);
        if (j > 1) EXPECT_LT(sups[j - 1], sups[j - 2]);
    }
}

TEST(Series, DivergenceGuard) {
    const Fixture f;
    auto op = f.op();
    op.norm_est = 1.5;
    EXPECT_THROW(m1_series(op), DivergenceGuard);
    EXPECT_THROW(solve_nodes(op), DivergenceGuard);
    EXPECT_THROW(derivative_table(op, 1, 0), DivergenceGuard);
}

TEST(Jump, ReproducesNodeValuesAndNormalisation) {
    const Fixture f;
    const auto op = f.op();
    const auto sol = solve_nodes(op);
    for (std::size_t i : {std::size_t(3), op.size() / 2 + 5}) {
        const auto m = m_at(op, sol, op.disc->k[i]);
        EXPECT_NEAR(std::abs(m.value - sol.X[i]), 0.0, 1e-14);
    }
    // k (m(k) - 1) tends to the first moment; averaging k and -k cancels the 1/k correction
    const cplx m1 = m1_series(op).value;
    const cplx big = std::polar(1e4, 0.3);
    const cplx lim = 0.5 * big * (m_at(op, sol, big).value - m_at(op, sol, -big).value);
    EXPECT_NEAR(std::abs(lim - m1), 0.0, 1e-6 * std::abs(m1));
    double prev = 1.0;
    for (double R : {1e2, 1e4, 1e6}) {
        const double dev = std::abs(m_at(op, sol, std::polar(R, 1.0)).value - 1.0);
        EXPECT_LT(dev, prev);
        prev = dev;
    }
    EXPECT_LT(prev, 1e-5);
}

TEST(Jump, NeumannNodeSolveAgreesWithDirect) {
    const Fixture f;
    const auto op = f.op();
    const auto a = solve_nodes(op, SeriesMode::direct());
    const auto b = solve_nodes(op, SeriesMode::neumann(4));
    for (std::size_t i = 0; i < op.size(); ++i) EXPECT_LE(std::abs(a.X[i] - b.X[i]), b.trunc_bound + 1e-14);
}

TEST(TailBound, DecreasesWithTermCount) {
    const Fixture f;
    for (auto [q1, q2] : std::vector<std::pair<int, int>>{{0, 0}, {2, 0}, {1, 1}}) {
        double prev = std::numeric_limits<double>::infinity();
        for (int J : {1, 3, 6, 10, 20}) {
            const double b = tail_bound(f.p, f.disc->grid, 0.5, q1, q2, J);
            EXPECT_LT(b, prev);
            prev = b;
        }
        EXPECT_LT(prev, 1e-15);
    }
    EXPECT_EQ(tail_bound(null_profile(), f.disc->grid, 0.5, 2, 0, 1), 0.0);
}

TEST(Derivatives, ZeroOrderIsTheFirstMoment) {
    const Fixture f;
    const auto op = f.op();
    const auto tab = derivative_table(op, 0, 0);
    EXPECT_NEAR(std::abs(tab.at(0, 0).value - m1_series(op).value), 0.0, 1e-16);
}

TEST(Derivatives, DirectAndNeumannAgree) {
    const Fixture f;
    const auto op = f.op();
    const auto d = derivative_table(op, 3, 1, SeriesMode::direct(), &f.p);
    const auto n = derivative_table(op, 3, 1, SeriesMode::automatic(1e-14), &f.p);
    const auto rough = derivative_table(op, 3, 1, SeriesMode::neumann(3), &f.p);
    for (auto& [o, e] : d.entries) {
        const cplx ref = e.value;
        EXPECT_NEAR(std::abs(n.at(o.first, o.second).value - ref), 0.0, 1e-12 * std::abs(ref)) << o.first << o.second;
        const auto& r = rough.at(o.first, o.second);
        EXPECT_LE(std::abs(r.value - ref), r.trunc_bound + 1e-12 * std::abs(ref)) << o.first << o.second;
    }
}

TEST(Derivatives, MatchFiniteDifferences) {
    const Fixture f;
    const auto tab = derivative_table(f.op(), 2, 1);
    const double h = 1e-3;
    auto m1 = [&](double x, double t) { return m1_series(f.op(x, t)).value; };
    auto d5 = [&](auto g) { return (8.0 * (g(h) - g(-h)) - (g(2 * h) - g(-2 * h))) / (12.0 * h); };
    const cplx dx = d5([&](double e) { return m1(0.3 + e, 0.5); });
    const cplx dt = d5([&](double e) { return m1(0.3, 0.5 + e); });
    const cplx dxx = (m1(0.3 + h, 0.5) - 2.0 * m1(0.3, 0.5) + m1(0.3 - h, 0.5)) / (h * h);
    EXPECT_NEAR(std::abs(dx - tab.at(1, 0).value), 0.0, 1e-7 * std::abs(dx));
    EXPECT_NEAR(std::abs(dxx - tab.at(2, 0).value), 0.0, 1e-5 * std::abs(dxx));
    EXPECT_NEAR(std::abs(dt - tab.at(0, 1).value), 0.0, 1e-7 * std::abs(dt));
}

TEST(Derivatives, WeightCapKeepsLowerOrdersExact) {
    const Fixture f;
    const auto op = f.op();
    const auto full = derivative_table(op, 3, 1);
    const auto capped = derivative_table(op, 3, 1, SeriesMode::automatic(), nullptr, 2);
    EXPECT_THROW(capped.at(3, 0), ParamError);
    EXPECT_THROW(capped.at(1, 1), ParamError);
    for (auto o : std::vector<std::pair<int, int>>{{0, 0}, {1, 0}, {2, 0}, {0, 1}})
        EXPECT_EQ(capped.at(o.first, o.second).value, full.at(o.first, o.second).value);
    EXPECT_THROW(derivative_table(op, -1, 0), ParamError);
}

TEST(Derivatives, IntegrabilityAtBlowupTime) {
    const auto p = build_profile(ProfileKind::derivative_blowup(2, 0.2), 1.0, 0.0, {});
    const auto op = assemble(p, build_grid(p, 1.0, 1e-8, 3), p.x0, 1.0);
    EXPECT_THROW(derivative_table(op, 4, 0, SeriesMode::automatic(), &p), IntegrabilityError);
    EXPECT_THROW(derivative_table(op, 0, 2, SeriesMode::automatic(), &p), IntegrabilityError);
    const auto tab = derivative_table(op, 4, 2, SeriesMode::automatic(), &p, 3);
    EXPECT_TRUE(std::isfinite(std::abs(tab.at(3, 0).value)));
    EXPECT_TRUE(std::isfinite(std::abs(tab.at(1, 1).value)));
}
