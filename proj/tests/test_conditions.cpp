#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bmx/conditions.hpp"

namespace cd = bmx::conditions;
namespace mg = bmx::marginals;
namespace pr = bmx::priors;
using bmx::Verdict;

namespace {

bmx::ScalarFn power_fn(double e) {
    bmx::ScalarFn f;
    f.eval = [e](double x) { return std::pow(x, e); };
    f.deriv1 = [e](double x) { return e * std::pow(x, e - 1); };
    f.deriv2 = [e](double x) { return e * (e - 1) * std::pow(x, e - 2); };
    return f;
}

mg::MarginalProfile jet_profile(int k, std::function<mg::Jet(double)> jet) {
    mg::MarginalProfile p;
    p.k = k;
    p.jet_fn = jet;
    p.ell.eval = [jet](double u) { return jet(u).l0; };
    return p;
}

} // namespace

TEST(Grids, DefaultGridsCoverTheDocumentedRange) {
    const auto u = cd::default_u_grid();
    ASSERT_EQ(u.size(), 200u);
    EXPECT_DOUBLE_EQ(u.front(), 1e-2);
    EXPECT_DOUBLE_EQ(u.back(), 30.0);
    const auto s = cd::default_s_grid();
    EXPECT_DOUBLE_EQ(s.front(), 5e-5);
    EXPECT_DOUBLE_EQ(s.back(), 450.0);
}

TEST(SqrtSuperharmonic, Example1Holds) {
    const auto p = mg::marginal_mixture(pr::example1_mixing(2, 5));
    EXPECT_EQ(cd::check_sqrt_superharmonic(p, cd::default_u_grid()).verdict, Verdict::Holds);
}

TEST(SqrtSuperharmonic, FlatIsInconclusive) {
    const auto r = cd::check_sqrt_superharmonic(mg::flat_profile(5), cd::default_u_grid());
    EXPECT_EQ(r.verdict, Verdict::Inconclusive);
    EXPECT_FALSE(r.witness);
    EXPECT_EQ(r.count_within_band(), r.grid.size());
}

TEST(SqrtSuperharmonic, GrowingProfileFails) {
    const auto p = jet_profile(5, [](double u) {
        const double l = std::exp(0.25 * u * u);
        return mg::Jet{l, 0.5 * u * l, (0.5 + 0.25 * u * u) * l};
    });
    const auto r = cd::check_sqrt_superharmonic(p, cd::default_u_grid());
    EXPECT_EQ(r.verdict, Verdict::Fails);
    ASSERT_TRUE(r.witness);
    EXPECT_GT(r.max_margin(), r.numerical_band);
}

TEST(SqrtSuperharmonic, HookAndGenericAgreeWhereResolved) {
    const auto p = mg::marginal_strawderman(0.5, 5);
    const auto grid = cd::log_grid(0.05, 5.0, 40);
    const auto a = cd::check_sqrt_superharmonic(p, grid);
    const auto b = cd::check_sqrt_superharmonic(p, grid, true);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(a.raw_margins[i], b.raw_margins[i], 1e-9 * b.scales[i]);
}

TEST(SqrtSuperharmonic, ScaleInvariant) {
    auto mix = pr::example1_mixing(2, 5);
    const auto grid = cd::log_grid(0.05, 20.0, 30);
    const auto base = cd::check_sqrt_superharmonic(mg::marginal_mixture(mix), grid, true);
    mix.f_unit = mix.f_unit.scaled(37.5);
    const auto scaled = cd::check_sqrt_superharmonic(mg::marginal_mixture(mix), grid, true);
    EXPECT_EQ(base.verdict, scaled.verdict);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(base.margins[i], scaled.margins[i], 1e-9);
}

TEST(Theorem31, BesselExampleHolds) {
    const auto F = pr::bessel_example_F(1.0, 5, 1.0, 1.0);
    EXPECT_EQ(cd::check_theorem31(F, 5, cd::log_grid(0.1, 10.0, 60)).verdict, Verdict::Holds);
}

TEST(Theorem31, ZeroPotentialBoundaryIsInconclusive) {
    const int k = 5;
    bmx::ScalarFn F;
    const double e = 0.5 * (k - 1);
    F.eval = [e](double u) { return std::pow(u, e) * std::exp(0.5 * u * u); };
    F.deriv1 = [e](double u) { return (e / u + u) * std::pow(u, e) * std::exp(0.5 * u * u); };
    F.deriv2 = [e](double u) {
        const double L = e / u + u;
        return (L * L - e / (u * u) + 1) * std::pow(u, e) * std::exp(0.5 * u * u);
    };
    const auto r = cd::check_theorem31(F, k, cd::log_grid(0.1, 5.0, 30));
    EXPECT_EQ(r.verdict, Verdict::Inconclusive);
    EXPECT_EQ(r.count_within_band(), r.grid.size());
}

TEST(Theorem31, NonpositiveFIsDomainError) {
    const auto F = bmx::constant_fn(-1.0);
    EXPECT_THROW(cd::check_theorem31(F, 5, {0.5, 1.0}), bmx::DomainError);
}

TEST(Theorem31, ConstructionRoundTrip) {
    const auto grid = cd::log_grid(0.1, 5.0, 40);
    const auto sol = pr::construct_spherical(pr::PhiSeries{{-2.0, -1.0, -0.5}}, 5, 1.0, 0.5, grid);
    EXPECT_EQ(cd::check_theorem31(sol.F, 5, grid).verdict, Verdict::Holds);
}

TEST(Corollary41, Example1WindowEdge) {
    const auto s = cd::default_s_grid();
    EXPECT_EQ(cd::check_corollary41(*pr::example1_mixing(2, 5).kernel, 5, s).verdict, Verdict::Holds);
    const auto r3 = cd::check_corollary41(*pr::example1_mixing(3, 5).kernel, 5, s);
    EXPECT_EQ(r3.verdict, Verdict::Fails);
    ASSERT_TRUE(r3.witness);
    EXPECT_GT(*r3.witness, 10.0);
}

TEST(Corollary41, BoundaryPowerIsInconclusive) {
    const int k = 5;
    const auto r = cd::check_corollary41(power_fn(2.0 - k).scaled(3.0), k, cd::log_grid(1e-3, 200.0, 50));
    EXPECT_EQ(r.verdict, Verdict::Inconclusive);
    EXPECT_FALSE(r.witness);
}

TEST(Corollary41, IncreasingGIsDomainError) {
    EXPECT_THROW(cd::check_corollary41(power_fn(1.0), 5, {1.0}), bmx::DomainError);
}

TEST(Corollary41, GenericAndStableAgreeOnSign) {
    const auto mix = pr::example1_mixing(2, 5);
    const auto grid = cd::log_grid(1e-2, 20.0, 40);
    const auto a = cd::check_corollary41(mg::mixture_G(mix), 5, grid);
    const auto b = cd::check_corollary41(*mix.kernel, 5, grid);
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (bmx::band_sign(a.margins[i], 1e-6) != 0) {
            EXPECT_EQ(bmx::band_sign(a.margins[i], 1e-6), bmx::band_sign(b.margins[i], 1e-6));
        }
}

TEST(Corollary41, ConstructionRoundTrip) {
    const int k = 5;
    bmx::ScalarFn phi;
    phi.eval = [k](double s) { return (k - 1.0) / s; };
    const auto G = pr::construct_G_mixture(phi, 1.0, std::numeric_limits<double>::infinity(), k);
    const auto r = cd::check_corollary41(G, k, cd::log_grid(1e-2, 50.0, 40));
    EXPECT_EQ(r.verdict, Verdict::Holds);
    for (std::size_t i = 0; i < r.grid.size(); ++i) EXPECT_NEAR(r.values[i], (k - 1.0) / r.grid[i], 1e-6 * k / r.grid[i]);
}

TEST(Corollary41, ScaleInvariant) {
    const auto G = mg::mixture_G(pr::example1_mixing(2, 5));
    const auto grid = cd::log_grid(1e-2, 20.0, 20);
    const auto a = cd::check_corollary41(G, 5, grid);
    const auto b = cd::check_corollary41(G.scaled(1e-30), 5, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_NEAR(a.margins[i], b.margins[i], 1e-9);
}

TEST(Example1, TailSeriesMatchesKummer) {
    for (int m : {1, 3, 4, 10})
        for (double s : {1e-3, 0.7, 12.0, 300.0})
            EXPECT_NEAR(cd::detail::log_tail_series(m, s), bmx::specfun::kummer_1f1_log(1.0, m + 1.0, s).log_abs,
                        1e-12 * std::max(1.0, s))
                << m << " " << s;
}

TEST(Example1, WindowInsideHolds) {
    const auto r = cd::check_example1(2, 5, cd::default_s_grid());
    EXPECT_EQ(r.report.verdict, Verdict::Holds);
    EXPECT_TRUE(r.proper);
    EXPECT_TRUE(r.condition_window);
    EXPECT_TRUE(r.minimax_window());
}

TEST(Example1, OutsideWindowFailsAtLargeS) {
    const auto r = cd::check_example1(3, 5, cd::default_s_grid());
    EXPECT_EQ(r.report.verdict, Verdict::Fails);
    ASSERT_TRUE(r.report.witness);
    EXPECT_GT(*r.report.witness, 10.0);
    EXPECT_TRUE(r.proper);
    EXPECT_FALSE(r.condition_window);
    EXPECT_NEAR(r.report.values.back(), 6.0, 1e-9);
}

TEST(Example1, SmallNIsImproper) {
    for (int k : {3, 5, 8}) {
        const auto r = cd::check_example1(0, k, cd::log_grid(1e-3, 100.0, 40));
        EXPECT_EQ(r.report.verdict, Verdict::Holds);
        EXPECT_FALSE(r.proper);
        EXPECT_TRUE(r.condition_window);
    }
}

TEST(Example1, MatchesStableLaplaceForm) {
    const auto grid = cd::log_grid(1e-2, 100.0, 30);
    for (int n : {1, 2, 3}) {
        const auto a = cd::check_example1(n, 5, grid);
        const auto b = cd::check_corollary41(*pr::example1_mixing(n, 5).kernel, 5, grid);
        for (std::size_t i = 0; i < grid.size(); ++i)
            EXPECT_NEAR(a.report.values[i], grid[i] * b.values[i], 1e-7 * (n + 3)) << n << " " << grid[i];
    }
}

TEST(Example2, Case1BothLayersHold) {
    const auto r = cd::check_example2(2, 2, -1, 0.5, 5, cd::log_grid(0.1, 50.0, 60));
    EXPECT_EQ(r.analytic_case, 1);
    EXPECT_DOUBLE_EQ(r.analytic_bound, 4.0);
    EXPECT_EQ(r.analytic, Verdict::Holds);
    EXPECT_EQ(r.numerical.verdict, Verdict::Holds);
    for (std::size_t i = 0; i < r.numerical.grid.size(); ++i) EXPECT_LE(r.numerical.values[i], 5.0 / r.numerical.grid[i]);
}

TEST(Example2, Case2AnalyticBoundFails) {
    const auto r = cd::check_example2(2, 2, 1, 0.5, 5, cd::log_grid(0.1, 50.0, 30));
    EXPECT_EQ(r.analytic_case, 2);
    EXPECT_DOUBLE_EQ(r.analytic_bound, 6.0);
    EXPECT_EQ(r.analytic, Verdict::Fails);
    EXPECT_EQ(r.numerical.grid.size(), 30u);
}

TEST(Example2, ZeroGammaReducesToAlphaPlusTwo) {
    const auto r = cd::check_example2(2.5, 3, 0.0, 0.3, 5, {1.0});
    EXPECT_EQ(r.analytic_case, 0);
    EXPECT_DOUBLE_EQ(r.analytic_bound, 4.5);
}

TEST(Example2, PhiMatchesLaplaceMoments) {
    for (double beta : {1.0, 2.0, 3.5}) {
        const auto r = cd::check_example2(2, beta, 0.7, 0.5, 5, {0.3, 2.0, 15.0});
        const auto G = mg::mixture_G(pr::example2_mixing(2, beta, 0.7, 0.5, 5));
        for (std::size_t i = 0; i < r.numerical.grid.size(); ++i) {
            const double s = r.numerical.grid[i];
            const double phi = G.d1(s) / G(s) - 2 * G.d2(s) / G.d1(s);
            EXPECT_NEAR(r.numerical.values[i], phi, 1e-7 * std::fabs(phi)) << beta << " " << s;
        }
    }
}

TEST(StrawdermanSqrt, OriginAndInfinity) {
    const auto r = cd::check_strawderman_sqrt(0.5, 6, cd::default_u_grid());
    EXPECT_EQ(r.origin, Verdict::Holds);
    EXPECT_EQ(r.infinity, Verdict::Holds);
    EXPECT_NEAR(r.origin_value, 2 * 1.5 / 4.5 - 2, 1e-15);
    EXPECT_LT(r.report.margins.front(), 0.0);
    EXPECT_LT(r.report.margins.back(), 0.0);
    EXPECT_NEAR(r.report.raw_margins.front(), r.origin_value, 1e-3);
}

TEST(StrawdermanSqrt, BoundaryCoefficient) {
    const auto r = cd::check_strawderman_sqrt(0.5, 5, cd::default_u_grid());
    EXPECT_EQ(r.origin, Verdict::Holds);
    EXPECT_EQ(r.infinity, Verdict::Holds);
    EXPECT_EQ(r.report.grid.size(), 200u);
}

TEST(StrawdermanSqrt, SignMatchesMarginalCondition) {
    const auto grid = cd::log_grid(0.05, 25.0, 50);
    for (int k : {5, 6, 8}) {
        const auto a = cd::check_strawderman_sqrt(0.5, k, grid);
        const auto b = cd::check_sqrt_superharmonic(mg::marginal_strawderman(0.5, k), grid);
        for (std::size_t i = 0; i < grid.size(); ++i)
            EXPECT_EQ(bmx::band_sign(a.report.margins[i], 1e-7), bmx::band_sign(b.margins[i], 1e-7)) << k << " " << grid[i];
    }
}

TEST(StrawdermanSqrt, RejectsOutsideDomain) {
    EXPECT_THROW(cd::check_strawderman_sqrt(0.2, 5, {1.0}), bmx::DomainError);
}

TEST(ProperPrior, WitnessesFound) {
    const auto grid = cd::default_u_grid();
    const auto a = cd::check_proper_implies_not_superharmonic(mg::marginal_mixture(pr::example1_mixing(2, 5)), true, grid);
    EXPECT_TRUE(a.report.witness);
    EXPECT_FALSE(a.anomaly);
    const auto b = cd::check_proper_implies_not_superharmonic(mg::marginal_strawderman(0.5, 5), true, grid);
    EXPECT_TRUE(b.report.witness);
    EXPECT_FALSE(b.anomaly);
    EXPECT_EQ(cd::check_sqrt_superharmonic(mg::marginal_strawderman(0.5, 5), grid).verdict, Verdict::Holds);
}

TEST(ProperPrior, FlatHasNoWitness) {
    const auto r = cd::check_proper_implies_not_superharmonic(mg::flat_profile(5), false, cd::default_u_grid());
    EXPECT_FALSE(r.report.witness);
    EXPECT_FALSE(r.anomaly);
}

TEST(ProperPrior, AnomalyFlagged) {
    const auto r = cd::check_proper_implies_not_superharmonic(mg::flat_profile(5), true, {1.0, 2.0});
    EXPECT_TRUE(r.anomaly);
}

TEST(Identification, SqrtAndGConditionSignsAgree) {
    const auto mix = pr::example1_mixing(2, 5);
    const auto u = cd::default_u_grid();
    const auto s = cd::default_s_grid();
    const auto a = cd::check_sqrt_superharmonic(mg::marginal_mixture(mix), u, true, cd::kDefaultBand);
    const auto b = cd::check_corollary41(mg::mixture_G(mix), 5, s);
    std::size_t resolved = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const int sa = bmx::band_sign(a.margins[i], cd::kDefaultBand);
        EXPECT_EQ(sa, bmx::band_sign(b.margins[i], cd::kDefaultBand)) << u[i];
        resolved += sa != 0;
    }
    EXPECT_GT(resolved, u.size() / 2);
}

TEST(Report, EvaluationFailureMarksPoint) {
    const auto p = jet_profile(5, [](double u) {
        if (u > 1.5) throw bmx::EvaluationError("boom", 0.0, 0);
        return mg::Jet{1.0, -u, -1.0};
    });
    const auto r = cd::check_sqrt_superharmonic(p, {1.0, 2.0});
    EXPECT_TRUE(std::isnan(r.margins[1]));
    EXPECT_NE(r.verdict, Verdict::Holds);
}
