#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "bmx/io.hpp"

namespace io = bmx::io;
using io::json;

TEST(PhiGrammar, ParsesAllAtoms) {
    const auto t = io::parse_phi("-2/u^2 + 0.5/u - 1 + 3*u");
    EXPECT_EQ(t.m2, -2.0);
    EXPECT_EQ(t.m1, 0.5);
    EXPECT_EQ(t.c0, -1.0);
    EXPECT_EQ(t.p1, 3.0);
    EXPECT_DOUBLE_EQ(t(2.0), -0.5 + 0.25 - 1 + 6);
}

TEST(PhiGrammar, TokenListAndVariants) {
    const auto t = io::parse_phi(json::array({"-2/u²", "u", "1e-3/s", 2.5, "-.5*s", "1E+1"}));
    EXPECT_EQ(t.m2, -2.0);
    EXPECT_EQ(t.m1, 1e-3);
    EXPECT_EQ(t.c0, 12.5);
    EXPECT_EQ(t.p1, 0.5);
}

TEST(PhiGrammar, SeriesCoefficients) {
    const auto t = io::parse_phi("-2/u^2 - 1/u - 0.5");
    const auto s = t.series();
    for (double u : {0.1, 1.0, 3.0}) EXPECT_DOUBLE_EQ(s(u), t(u));
}

TEST(PhiGrammar, RejectsMalformed) {
    for (const char* bad : {"", "2/x", "u^3", "2//u", "abc", "3*", "*u", "1/u^3", "- "})
        EXPECT_THROW(io::parse_phi(bad), io::ConfigError) << bad;
    EXPECT_THROW(io::parse_phi(json::array()), io::ConfigError);
    EXPECT_THROW(io::parse_phi(json::object()), io::ConfigError);
}

TEST(PriorSpec, UnknownFamilyListsKnownOnes) {
    try {
        io::resolve_prior(json{{"family", "gauss"}, {"k", 5}}, {1.0});
        FAIL();
    } catch (const io::ConfigError& e) {
        const std::string w = e.what();
        EXPECT_NE(w.find("gauss"), std::string::npos);
        for (const auto& f : io::known_families()) EXPECT_NE(w.find(f), std::string::npos) << f;
    }
}

TEST(PriorSpec, MissingFieldsAndBadDimension) {
    EXPECT_THROW(io::resolve_prior(json{{"k", 5}}, {1.0}), io::ConfigError);
    EXPECT_THROW(io::resolve_prior(json{{"family", "example1"}, {"params", {{"n", 2}}}}, {1.0}), io::ConfigError);
    EXPECT_THROW(io::resolve_prior(json{{"family", "example1"}, {"k", 2}, {"params", {{"n", 2}}}}, {1.0}), io::ConfigError);
    EXPECT_THROW(io::resolve_prior(json{{"family", "example1"}, {"k", 5}}, {1.0}), io::ConfigError);
    EXPECT_THROW(io::resolve_prior(json{{"family", "example1"}, {"k", 5}, {"params", {{"n", 2.5}}}}, {1.0}), io::ConfigError);
    EXPECT_THROW(io::resolve_prior(json{{"family", "strawderman"}, {"k", 5}, {"params", {{"a", 1.5}}}}, {1.0}), io::ConfigError);
}

TEST(PriorSpec, ResolvesFamilies) {
    const std::vector<double> grid = bmx::conditions::log_grid(0.1, 5.0, 20);
    const auto e1 = io::resolve_prior(json{{"family", "example1"}, {"k", 5}, {"params", {{"n", 2}}}}, grid);
    EXPECT_EQ(e1.kind, io::Kind::Mixture);
    EXPECT_EQ(e1.proper, bmx::priors::Properness::Proper);
    const auto st = io::resolve_prior(json{{"family", "strawderman"}, {"k", 5}, {"params", {{"a", 0.5}}}}, grid);
    EXPECT_NEAR(st.profile.ell(1.0), bmx::marginals::marginal_mixture(*st.mixture).ell(1.0), 1e-12);
    const auto bf = io::resolve_prior(json{{"family", "bessel_F"}, {"k", 5}, {"params", {{"b", 1}, {"A1", 1}, {"A2", 1}}}}, grid);
    const auto cs = io::resolve_prior(
        json{{"family", "custom_phi_spherical"}, {"k", 5}, {"params", {{"phi", "-2/u^2"}, {"c1", 1}, {"c2", 1}}}}, grid);
    for (double u : {0.3, 1.0, 4.0}) {
        EXPECT_NEAR((*cs.F)(u) / (*bf.F)(u), 1.0, 1e-6) << u;
        EXPECT_NEAR(cs.profile.ell(u) / bf.profile.ell(u), 1.0, 1e-6) << u;
    }
    const auto cm = io::resolve_prior(
        json{{"family", "custom_phi_mixture"}, {"k", 5}, {"params", {{"phi", "5/s"}, {"a", 1}, {"b", "inf"}}}}, grid);
    EXPECT_NEAR((*cm.G)(2.0), std::pow(2.0, -3.0) / 2.25, 1e-9);
    const auto fl = io::resolve_prior(json{{"family", "flat"}, {"k", 5}}, grid);
    EXPECT_EQ(fl.profile.ell(3.0), 1.0);
}

TEST(PriorSpec, MarginalFromWMatchesFormula) {
    // φ = -2/u²: ℓ = w², Δ√ℓ form equals φ w².
    const std::vector<double> grid = bmx::conditions::log_grid(0.1, 5.0, 20);
    const auto bf = io::resolve_prior(json{{"family", "bessel_F"}, {"k", 5}, {"params", {{"b", 1}, {"A1", 1}, {"A2", 1}}}}, grid);
    for (double u : {0.3, 1.0, 4.0}) {
        const auto t = bf.profile.sqrt_superharmonic_terms(u);
        EXPECT_NEAR(t.value, -2.0 / (u * u) * bf.profile.ell(u), 1e-10 * t.scale);
    }
}

TEST(Grid, StringAndJsonForms) {
    const auto g = io::parse_grid_string("0.5,4,8,lin");
    EXPECT_FALSE(g.log);
    const auto pts = g.points();
    ASSERT_EQ(pts.size(), 8u);
    EXPECT_EQ(pts.front(), 0.5);
    EXPECT_EQ(pts.back(), 4.0);
    const auto h = io::parse_grid_json(json{{"lo", 0.1}, {"hi", 10}, {"n_points", 3}, {"spacing", "log"}});
    EXPECT_NEAR(h.points()[1], 1.0, 1e-12);
    for (const char* bad : {"1,0,5,log", "0,1,5,log", "1,2,1,lin", "1,2,5,cubic", "1,2,x,lin", "1,2,5"})
        EXPECT_THROW(io::parse_grid_string(bad), io::ConfigError) << bad;
}

TEST(Serialization, ConditionReportJson) {
    bmx::ConditionReport r;
    r.condition_id = "demo";
    r.add_point(1.0, -2.0, 4.0);
    r.add_point(2.0, 1.0, 1.0);
    r.values = {0.1, 0.2};
    r.finalize();
    const auto j = io::to_json(r);
    EXPECT_EQ(j["verdict"], "FAILS");
    EXPECT_EQ(j["witness"], 2.0);
    EXPECT_EQ(j["points"].size(), 2u);
    EXPECT_EQ(j["points"][0]["margin"], -0.5);
    r.add_failed_point(3.0, "x");
    EXPECT_TRUE(io::to_json(r)["points"][2]["margin"].is_null());
}

TEST(Serialization, RiskCsvColumns) {
    bmx::estimators::RiskReport r;
    r.theta_norm = 1;
    r.n_samples = 1000;
    r.seed = 7;
    r.mc_risk = 4.5;
    r.baseline_k = 5;
    const auto csv = io::risk_csv({r});
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "theta_norm,n,seed,mc_risk,mc_stderr,sure_mean,sure_stderr,k");
    EXPECT_NE(csv.find("1,1000,7,4.5,0,0,0,5"), std::string::npos);
    const auto lng = io::risk_long_csv({r});
    EXPECT_NE(lng.find("1,mc_risk,4.5"), std::string::npos);
}

TEST(Serialization, AtomicWrite) {
    const auto dir = std::filesystem::temp_directory_path() / "bmx_io_test";
    std::filesystem::remove_all(dir);
    const auto p = dir / "sub" / "a.txt";
    io::write_atomic(p, "hello");
    io::write_atomic(p, "world");
    std::ifstream in(p);
    std::string s;
    in >> s;
    EXPECT_EQ(s, "world");
    EXPECT_FALSE(std::filesystem::exists(dir / "sub" / "a.txt.tmp"));
    std::filesystem::remove_all(dir);
}
