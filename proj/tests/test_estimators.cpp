#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <vector>

#include "bmx/estimators.hpp"
#include "bmx/priors.hpp"

namespace es = bmx::estimators;
namespace mg = bmx::marginals;

namespace {

// ℓ(u) = u^{-(k-2)}: γ(x) = -(k-2)x/u², the James-Stein shrinkage field.
mg::MarginalProfile james_stein_profile(int k) {
    mg::MarginalProfile p;
    p.k = k;
    p.label = "james-stein";
    const double e = -(k - 2.0);
    p.jet_fn = [e](double u) {
        const double l = std::pow(u, e);
        return mg::Jet{l, e * l / u, e * (e - 1) * l / (u * u)};
    };
    p.ell.eval = [e](double u) { return std::pow(u, e); };
    return p;
}

const mg::MarginalProfile& strawderman_table() {
    static const mg::MarginalProfile p = mg::marginal_strawderman(0.5, 5).tabulate(es::risk_table_grid(5, 50.0));
    return p;
}

std::vector<std::vector<double>> random_rotation(int k, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> q(k, std::vector<double>(k));
    for (auto& row : q)
        for (double& v : row) v = nd(eng);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < i; ++j) {
            double d = 0;
            for (int c = 0; c < k; ++c) d += q[i][c] * q[j][c];
            for (int c = 0; c < k; ++c) q[i][c] -= d * q[j][c];
        }
        double n = 0;
        for (double v : q[i]) n += v * v;
        for (double& v : q[i]) v /= std::sqrt(n);
    }
    return q;
}

std::vector<double> rotate(const std::vector<std::vector<double>>& r, const std::vector<double>& x) {
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) y[i] += r[i][j] * x[j];
    return y;
}

} // namespace

TEST(BayesEstimate, OriginMapsToOrigin) {
    const auto p = mg::marginal_strawderman(0.5, 5);
    const std::vector<double> x(5, 0.0);
    for (double v : es::bayes_estimate(p, x)) EXPECT_EQ(v, 0.0);
}

TEST(BayesEstimate, FlatPriorIsIdentity) {
    const auto p = mg::flat_profile(5);
    const std::vector<double> x{0.3, -1.2, 2.0, 0.0, 5.0};
    EXPECT_EQ(es::bayes_estimate(p, x), x);
    EXPECT_EQ(es::sure(p, x), 5.0);
}

TEST(BayesEstimate, StrawdermanShrinksTowardOrigin) {
    const auto p = mg::marginal_strawderman(0.5, 5);
    const std::vector<double> x{2, 0, 0, 0, 0};
    const auto d = es::bayes_estimate(p, x);
    EXPECT_LT(d[0], 2.0);
    EXPECT_GT(d[0], 0.0);
    for (int i = 1; i < 5; ++i) EXPECT_EQ(d[i], 0.0);
}

TEST(BayesEstimate, RotationEquivariance) {
    const auto p = mg::marginal_strawderman(0.5, 5);
    const std::vector<double> x{0.7, -1.1, 2.3, 0.4, -0.9};
    for (std::uint64_t s : {1u, 2u, 3u}) {
        const auto r = random_rotation(5, s);
        const auto lhs = es::bayes_estimate(p, rotate(r, x));
        const auto rhs = rotate(r, es::bayes_estimate(p, x));
        for (int i = 0; i < 5; ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-10);
    }
}

TEST(BayesEstimate, MixtureShrinkageDirection) {
    const auto p = mg::marginal_mixture(bmx::priors::example1_mixing(2, 5));
    std::mt19937_64 eng(7);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(5);
        double xx = 0;
        for (double& v : x) {
            v = nd(eng);
            xx += v * v;
        }
        const auto d = es::bayes_estimate(p, x);
        double dx = 0;
        for (int i = 0; i < 5; ++i) dx += d[i] * x[i];
        EXPECT_LT(dx, xx);
    }
}

TEST(Sure, JamesSteinIdentity) {
    const int k = 5;
    const auto p = james_stein_profile(k);
    for (double u : {0.5, 1.0, 2.0, 7.0}) {
        const std::vector<double> x{u, 0, 0, 0, 0};
        EXPECT_NEAR(es::sure(p, x), k - (k - 2.0) * (k - 2.0) / (u * u), 1e-12);
    }
}

TEST(Sure, OriginLimitIsContinuous) {
    const auto p = mg::marginal_strawderman(0.5, 5);
    EXPECT_NEAR(es::sure_radial(p, 0.0), es::sure_radial(p, 1e-4), 1e-6);
}

TEST(Sure, TabulatedMatchesDirect) {
    const auto p = mg::marginal_strawderman(0.5, 5);
    for (double u : {0.05, 0.77, 3.3, 9.1}) EXPECT_NEAR(es::sure_radial(strawderman_table(), u), es::sure_radial(p, u), 1e-7);
}

TEST(Sure, StrawdermanAverageAtOriginBelowK) {
    const auto& p = strawderman_table();
    const std::vector<double> theta(5, 0.0);
    const auto r = es::mc_risk(p, theta, 100000, 11);
    EXPECT_LT(r.sure_mean, 5.0 - 0.1);
}

TEST(McRisk, IdentityBaseline) {
    const auto p = mg::flat_profile(5);
    const std::vector<double> theta{1.0, -2.0, 0.5, 3.0, 0.0};
    const auto r = es::mc_risk(p, theta, 100000, 42);
    EXPECT_LE(std::fabs(r.mc_risk - 5.0), 3 * r.mc_stderr);
    EXPECT_EQ(r.sure_mean, 5.0);
    EXPECT_EQ(r.failures, 0u);
}

TEST(McRisk, StrawdermanOriginRiskBelowK) {
    const auto& p = strawderman_table();
    const std::vector<double> theta(5, 0.0);
    const auto r = es::mc_risk(p, theta, 200000, 3);
    EXPECT_LT(r.mc_risk, 5.0 - 0.1);
    EXPECT_LE(std::fabs(r.mc_risk - r.sure_mean), 4 * (r.mc_stderr + r.sure_stderr));
}

TEST(McRisk, FarFieldApproachesK) {
    const auto& p = strawderman_table();
    std::vector<double> theta(5, 0.0);
    theta[0] = 50.0;
    const auto r = es::mc_risk(p, theta, 100000, 5);
    EXPECT_LE(std::fabs(r.mc_risk - 5.0), 3 * r.mc_stderr);
}

TEST(McRisk, DeterministicAndThreadIndependent) {
    const auto& p = strawderman_table();
    std::vector<double> theta(5, 0.0);
    theta[0] = 1.5;
    setenv("BMX_MAX_THREADS", "1", 1);
    const auto a = es::mc_risk(p, theta, 20000, 99);
    setenv("BMX_MAX_THREADS", "4", 1);
    const auto b = es::mc_risk(p, theta, 20000, 99);
    unsetenv("BMX_MAX_THREADS");
    EXPECT_EQ(a.mc_risk, b.mc_risk);
    EXPECT_EQ(a.mc_stderr, b.mc_stderr);
    EXPECT_EQ(a.sure_mean, b.sure_mean);
    const auto c = es::mc_risk(p, theta, 20000, 100);
    EXPECT_NE(a.mc_risk, c.mc_risk);
}

TEST(McRisk, RejectsSmallSamples) {
    const std::vector<double> theta(5, 0.0);
    EXPECT_THROW(es::mc_risk(mg::flat_profile(5), theta, 999, 1), bmx::DomainError);
}

TEST(RiskCurve, SingleNormMatchesMcRisk) {
    const auto& p = strawderman_table();
    const auto c = es::risk_curve(p, {0.0}, 5000, 8);
    const std::vector<double> theta(5, 0.0);
    const auto r = es::mc_risk(p, theta, 5000, es::curve_seed(8, 0.0));
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c[0].mc_risk, r.mc_risk);
    EXPECT_EQ(c[0].seed, r.seed);
}

TEST(RiskCurve, PermutationConsistent) {
    const auto& p = strawderman_table();
    const auto a = es::risk_curve(p, {0.0, 2.0, 5.0}, 5000, 21);
    const auto b = es::risk_curve(p, {5.0, 0.0, 2.0}, 5000, 21);
    EXPECT_EQ(a[0].mc_risk, b[1].mc_risk);
    EXPECT_EQ(a[1].mc_risk, b[2].mc_risk);
    EXPECT_EQ(a[2].mc_risk, b[0].mc_risk);
}
