#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "bmx/conditions.hpp"
#include "bmx/error.hpp"
#include "bmx/estimators.hpp"
#include "bmx/io.hpp"
#include "bmx/marginals.hpp"
#include "bmx/priors.hpp"
#include "bmx/transforms.hpp"

namespace bmx::cli {

using io::json;

inline constexpr const char* kToolVersion = "bmx 0.1.0";

enum ExitCode : int {
    kOk = 0,
    kInternal = 1,
    kConfig = 2,
    kConstruction = 3,
    kFails = 4,
    kInconclusive = 5,
    kRiskExceeded = 6,
};

/// Command-line overrides applied on top of the config file.
struct Overrides {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> grid;
};

/// Fully resolved run configuration; `to_json` is what the manifest records.
struct RunConfig {
    std::string command;
    json prior_spec;
    int k = 0;
    io::GridSpec grid;
    QuadSpec quad;
    std::uint64_t n_samples = 100000;
    std::uint64_t seed = 0;
    std::vector<double> theta_norms{0, 1, 3, 6, 10};
    std::string out = "bmx_out";
    std::string format = "json";
    json transform = json::object();

    json to_json() const {
        return {{"command", command},
                {"prior_spec", prior_spec},
                {"k", k},
                {"grid_spec", io::to_json(grid)},
                {"quad", {{"rel_tol", quad.rel_tol}, {"abs_tol", quad.abs_tol}, {"max_depth", quad.max_depth},
                          {"tail_cut", quad.tail_cut}, {"max_intervals", quad.max_intervals}}},
                {"mc", {{"n_samples", n_samples}, {"seed", seed}, {"theta_norms", theta_norms}}},
                {"output", {{"path", out}, {"format", format}}},
                {"transform", transform}};
    }
};

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io::ConfigError("cannot read config file '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw io::ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
}

/// Builds a RunConfig from a config document (a manifest's "config" block is accepted too).
inline RunConfig resolve_config(const std::string& command, json doc, const Overrides& ov = {}) {
    if (doc.is_object() && doc.contains("config") && doc.contains("tool")) doc = doc["config"];
    if (!doc.is_object()) throw io::ConfigError("config must be a JSON object");
    RunConfig c;
    c.command = command;
    try {
        if (doc.contains("command") && doc["command"].get<std::string>() != command)
            throw io::ConfigError("config command '" + doc["command"].get<std::string>() + "' does not match '" + command + "'");
        if (!doc.contains("prior_spec")) throw io::ConfigError("config: missing 'prior_spec'");
        c.prior_spec = doc["prior_spec"];
        if (!c.prior_spec.is_object()) throw io::ConfigError("config: 'prior_spec' must be an object");
        if (doc.contains("k")) c.prior_spec["k"] = doc["k"];
        if (!c.prior_spec.contains("k") || !c.prior_spec["k"].is_number_integer())
            throw io::ConfigError("config: dimension k missing (top level or prior_spec.k)");
        c.k = c.prior_spec["k"].get<int>();
        if (c.k < 3) throw io::ConfigError("config: k must be at least 3");
        if (doc.contains("grid_spec")) c.grid = io::parse_grid_json(doc["grid_spec"]);
        if (doc.contains("quad")) {
            const auto& q = doc["quad"];
            c.quad.rel_tol = q.value("rel_tol", c.quad.rel_tol);
            c.quad.abs_tol = q.value("abs_tol", c.quad.abs_tol);
            c.quad.max_depth = q.value("max_depth", c.quad.max_depth);
            c.quad.tail_cut = q.value("tail_cut", c.quad.tail_cut);
            c.quad.max_intervals = q.value("max_intervals", c.quad.max_intervals);
        }
        if (doc.contains("mc")) {
            const auto& m = doc["mc"];
            c.n_samples = m.value("n_samples", c.n_samples);
            c.seed = m.value("seed", c.seed);
            if (m.contains("theta_norms")) c.theta_norms = m["theta_norms"].get<std::vector<double>>();
        }
        if (doc.contains("output")) {
            c.out = doc["output"].value("path", c.out);
            c.format = doc["output"].value("format", c.format);
        }
        if (doc.contains("transform")) c.transform = doc["transform"];
    } catch (const json::exception& e) {
        throw io::ConfigError(std::string("config: ") + e.what());
    }
    if (const char* e = std::getenv("BMX_QUAD_RELTOL")) {
        char* end = nullptr;
        const double v = std::strtod(e, &end);
        if (end == e || !(v > 0.0)) throw io::ConfigError("BMX_QUAD_RELTOL must be a positive number");
        c.quad.rel_tol = v;
    }
    if (ov.out) c.out = *ov.out;
    if (ov.seed) c.seed = *ov.seed;
    if (ov.grid) c.grid = io::parse_grid_string(*ov.grid);
    if (c.format != "json" && c.format != "csv") throw io::ConfigError("output.format must be json or csv");
    if (!(c.quad.rel_tol > 0.0) || c.quad.max_depth < 1) throw io::ConfigError("quad: invalid tolerances");
    if (command == "risk") {
        if (c.n_samples < 1000) throw io::ConfigError("mc.n_samples must be at least 1000");
        if (c.theta_norms.empty()) throw io::ConfigError("mc.theta_norms must be nonempty");
        for (double t : c.theta_norms)
            if (!(t >= 0.0)) throw io::ConfigError("mc.theta_norms must be nonnegative");
    }
    return c;
}

// ---------------------------------------------------------------------------

/// Collects outputs and writes the manifest last.
class RunOutput {
public:
    explicit RunOutput(const RunConfig& c) : cfg_(c), dir_(c.out) {}

    void write(const std::string& name, const std::string& content) {
        io::write_atomic(dir_ / name, content);
        files_.push_back(name);
    }
    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    void finish(int exit_code, const json& extra = json::object()) {
        json m{{"tool", kToolVersion},
               {"command", cfg_.command},
               {"config", cfg_.to_json()},
               {"seeds", {{"mc_seed", cfg_.seed}}},
               {"tolerances", {{"quad_rel_tol", cfg_.quad.rel_tol}, {"numerical_band", conditions::kDefaultBand}}},
               {"environment",
                {{"BMX_QUAD_RELTOL", std::getenv("BMX_QUAD_RELTOL") ? std::getenv("BMX_QUAD_RELTOL") : ""},
                 {"BMX_MAX_THREADS", std::getenv("BMX_MAX_THREADS") ? std::getenv("BMX_MAX_THREADS") : ""}}},
               {"outputs", files_},
               {"exit_code", exit_code}};
        for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
        io::write_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
    }

private:
    const RunConfig& cfg_;
    std::filesystem::path dir_;
    std::vector<std::string> files_;
};

namespace detail {

inline std::vector<double> to_s_grid(std::vector<double> u) {
    for (double& x : u) x = 0.5 * x * x;
    return u;
}

inline bool mentions_divergence(const ConditionReport& r) {
    for (const auto& a : r.annotations)
        if (a.find("divergent") != std::string::npos) return true;
    return false;
}

/// Divergence > FAILS > INCONCLUSIVE > HOLDS.
inline int aggregate_exit(const std::vector<const ConditionReport*>& reps) {
    bool fails = false, inconclusive = false, divergent = false;
    for (const auto* r : reps) {
        divergent |= mentions_divergence(*r);
        fails |= r->verdict == Verdict::Fails;
        inconclusive |= r->verdict == Verdict::Inconclusive;
    }
    if (divergent) return kConstruction;
    if (fails) return kFails;
    if (inconclusive) return kInconclusive;
    return kOk;
}

inline json properness_json(const priors::PropernessProbe& p) {
    return {{"verdict", priors::to_string(p.verdict)},
            {"mass", io::detail::number_or_null(p.mass)},
            {"tail_exponent", io::detail::number_or_null(p.tail_exponent)},
            {"note", p.note}};
}

/// Probes ∫ area u^{k-1} ℓ(u) du, the total mass of the marginal (equal to the prior mass).
///
/// The integrand is sampled at 8 nodes per decade on [1e-6, horizon] and
/// interpolated log-log; below the first node it is extended as a power law.
inline priors::PropernessProbe marginal_properness(const marginals::MarginalProfile& p, double horizon) {
    const int k = p.k;
    const double log_area = std::numbers::ln2 + 0.5 * k * std::log(std::numbers::pi) - specfun::log_gamma(0.5 * k);
    std::vector<double> lx, ly;
    for (double e = -6.0; e <= std::log10(horizon) + 1e-9; e += 0.125) {
        const double u = std::pow(10.0, e);
        const double l = p.ell(u);
        if (!(l > 0.0) || !std::isfinite(l)) {
            priors::PropernessProbe out;
            out.note = "marginal not positive and finite at u = " + std::to_string(u);
            return out;
        }
        lx.push_back(std::log(u));
        ly.push_back(log_area + std::log(l) + (k - 1) * std::log(u));
    }
    ScalarFn g;
    g.eval = [lx, ly](double u) {
        const double x = std::log(u);
        std::size_t i = std::upper_bound(lx.begin(), lx.end(), x) - lx.begin();
        i = std::clamp<std::size_t>(i, 1, lx.size() - 1);
        const double t = (x - lx[i - 1]) / (lx[i] - lx[i - 1]);
        return std::exp(ly[i - 1] + t * (ly[i] - ly[i - 1]));
    };
    auto out = priors::probe_properness(g, horizon);
    const double p0 = (ly[1] - ly[0]) / (lx[1] - lx[0]);
    if (p0 <= -1.0) {
        out.verdict = priors::Properness::Improper;
        out.mass = std::numeric_limits<double>::infinity();
        out.note = "mass density not integrable at the origin";
    }
    return out;
}

inline std::string csv_for_report(const ConditionReport& r) {
    std::vector<double> v = r.values;
    v.resize(r.grid.size(), std::numeric_limits<double>::quiet_NaN());
    return io::table_csv({"x", "margin", "raw_margin", "scale", "value"}, {r.grid, r.margins, r.raw_margins, r.scales, v});
}

} // namespace detail

// ---------------------------------------------------------------------------
// verify

struct VerifyResult {
    json document;
    int exit_code = kOk;
};

inline VerifyResult run_verify(const RunConfig& c) {
    const auto u = c.grid.points();
    const auto s = detail::to_s_grid(u);
    const auto prior = io::resolve_prior(c.prior_spec, u, c.quad);
    std::vector<ConditionReport> checks;
    json layers = json::object();
    json diagnostics = json::object();

    if (prior.family == "example1") {
        const auto e1 = conditions::check_example1(io::detail::get_int_param(prior.params, prior.family, "n"), c.k, s);
        checks.push_back(e1.report);
        layers["example1_window"] = {{"proper", e1.proper},
                                     {"condition_window", e1.condition_window},
                                     {"minimax_window", e1.minimax_window()}};
    }
    if (prior.family == "example2") {
        const auto& P = prior.params;
        const auto e2 = conditions::check_example2(io::detail::get_param(P, prior.family, "alpha"), io::detail::get_param(P, prior.family, "beta"), io::detail::get_param(P, prior.family, "gamma"),
                                                 io::detail::get_param(P, prior.family, "sigma"), c.k, s, c.quad);
        checks.push_back(e2.numerical);
        layers["example2_analytic"] = {{"case", e2.analytic_case},
                                       {"bound", e2.analytic_bound},
                                       {"verdict", to_string(e2.analytic)},
                                       {"note", "sufficient bound only; not part of the aggregate verdict"}};
    }
    if (prior.kind == io::Kind::Strawderman) {
        const auto sr = conditions::check_strawderman_sqrt(io::detail::get_param(prior.params, prior.family, "a"), c.k, u);
        checks.push_back(sr.report);
        layers["strawderman_asymptotics"] = {{"origin_value", sr.origin_value},
                                             {"origin", to_string(sr.origin)},
                                             {"infinity", to_string(sr.infinity)}};
    }
    if (prior.kind == io::Kind::Mixture) {
        if (prior.mixture && prior.mixture->kernel)
            checks.push_back(conditions::check_corollary41(*prior.mixture->kernel, c.k, s, c.quad));
        else if (prior.G)
            checks.push_back(conditions::check_corollary41(*prior.G, c.k, s));
        else if (prior.mixture)
            checks.push_back(conditions::check_corollary41(marginals::mixture_G(*prior.mixture, c.quad), c.k, s));
    }
    if (prior.kind == io::Kind::Spherical) {
        try {
            checks.push_back(conditions::check_theorem31(*prior.F, c.k, u));
        } catch (const DomainError& e) {
            throw ConstructionError(e.what());
        }
    }
    checks.push_back(conditions::check_sqrt_superharmonic(prior.profile, u));

    const auto ps = conditions::check_proper_implies_not_superharmonic(prior.profile,
                                                                       prior.proper == priors::Properness::Proper, u);
    diagnostics["proper_not_superharmonic"] = io::to_json(ps.report);
    diagnostics["proper_not_superharmonic"]["anomaly"] = ps.anomaly;

    std::vector<const ConditionReport*> ptrs;
    json arr = json::array();
    for (const auto& r : checks) {
        ptrs.push_back(&r);
        arr.push_back(io::to_json(r));
    }
    VerifyResult out;
    out.exit_code = detail::aggregate_exit(ptrs);
    const char* agg = out.exit_code == kOk ? "HOLDS" : out.exit_code == kFails ? "FAILS" : out.exit_code == kInconclusive ? "INCONCLUSIVE" : "DIVERGENT";
    out.document = {{"family", prior.family},
                    {"k", c.k},
                    {"prior_proper", priors::to_string(prior.proper)},
                    {"aggregate", agg},
                    {"checks", arr},
                    {"layers", layers},
                    {"diagnostics", diagnostics},
                    {"note", "grid verdicts: HOLDS is evidence on the grid, not proof"}};
    return out;
}

inline int cmd_verify(const RunConfig& c) {
    RunOutput out(c);
    const auto r = run_verify(c);
    out.write_json("verify.json", r.document);
    if (c.format == "csv")
        for (const auto& chk : r.document["checks"]) {
            std::string csv = "x,margin\n";
            for (const auto& p : chk["points"])
                csv += io::detail::csv_number(p["x"].get<double>()) + "," +
                       (p["margin"].is_null() ? std::string("nan") : io::detail::csv_number(p["margin"].get<double>())) + "\n";
            out.write("verify_" + chk["condition_id"].get<std::string>() + ".csv", csv);
        }
    out.finish(r.exit_code, {{"aggregate", r.document["aggregate"]}});
    std::cout << "verify " << r.document["family"].get<std::string>() << ": " << r.document["aggregate"].get<std::string>()
              << "\n";
    for (const auto& chk : r.document["checks"]) {
        std::cout << "  " << chk["condition_id"].get<std::string>() << ": " << chk["verdict"].get<std::string>();
        if (!chk["witness"].is_null()) std::cout << " (witness " << chk["witness"].get<double>() << ")";
        std::cout << "\n";
    }
    return r.exit_code;
}

// ---------------------------------------------------------------------------
// construct

inline int cmd_construct(const RunConfig& c) {
    const std::string fam = c.prior_spec.value("family", "");
    if (fam != "custom_phi_spherical" && fam != "custom_phi_mixture")
        throw io::ConfigError("construct: family must be custom_phi_spherical or custom_phi_mixture (got '" + fam + "')");
    const auto u = c.grid.points();
    const auto prior = io::resolve_prior(c.prior_spec, u, c.quad);
    RunOutput out(c);
    json doc{{"family", fam}, {"k", c.k}};
    ConditionReport rep;
    const auto ell = [&](double x) { return prior.profile.ell(x); };
    if (fam == "custom_phi_spherical") {
        const auto& sol = *prior.construction;
        try {
            rep = conditions::check_theorem31(sol.F, c.k, u);
        } catch (const DomainError& e) {
            throw ConstructionError(e.what());
        }
        std::vector<double> F, F1, F2, L, z1, z2;
        for (double x : u) {
            F.push_back(sol.F(x));
            F1.push_back(sol.F.d1(x));
            F2.push_back(sol.F.d2(x));
            L.push_back(ell(x));
            z1.push_back(sol.z1(x));
            z2.push_back(sol.z2(x));
        }
        out.write("construction.csv", io::table_csv({"u", "F", "dF", "d2F", "marginal", "z1", "z2"}, {u, F, F1, F2, L, z1, z2}));
        doc["rho"] = {sol.rho1, sol.rho2};
        doc["c"] = {sol.c1, sol.c2};
        doc["max_ode_residual"] = sol.max_residual;
        doc["properness"] = detail::properness_json(detail::marginal_properness(prior.profile, 1e4));
    } else {
        const auto s = detail::to_s_grid(u);
        try {
            rep = conditions::check_corollary41(*prior.G, c.k, s);
        } catch (const DomainError& e) {
            throw ConstructionError(e.what());
        }
        std::vector<double> G, G1, G2, L;
        for (std::size_t i = 0; i < s.size(); ++i) {
            G.push_back((*prior.G)(s[i]));
            G1.push_back(prior.G->d1(s[i]));
            G2.push_back(prior.G->d2(s[i]));
            L.push_back(ell(u[i]));
        }
        out.write("construction.csv", io::table_csv({"s", "G", "dG", "d2G", "u", "marginal"}, {s, G, G1, G2, u, L}));
        doc["properness"] = detail::properness_json(detail::marginal_properness(prior.profile, 1e4));
    }
    doc["phi"] = {{"m2", prior.phi->m2}, {"m1", prior.phi->m1}, {"c0", prior.phi->c0}, {"p1", prior.phi->p1}};
    doc["condition"] = io::to_json(rep);
    doc["marginal_note"] = "tabulated marginal is the induced l(u) up to a positive constant; its mass equals the prior mass";
    int code = kOk;
    if (rep.verdict == Verdict::Fails) code = kFails;
    if (rep.verdict == Verdict::Inconclusive) {
        doc["warning"] = "condition margins within the numerical band (boundary case)";
        std::cerr << "warning: " << rep.condition_id << " INCONCLUSIVE (boundary case)\n";
    }
    out.write_json("construction.json", doc);
    out.finish(code, {{"verdict", to_string(rep.verdict)}});
    std::cout << "construct " << fam << ": " << rep.condition_id << " " << to_string(rep.verdict) << ", marginal "
              << doc["properness"]["verdict"].get<std::string>() << "\n";
    return code;
}

// ---------------------------------------------------------------------------
// risk

struct RiskRun {
    std::vector<estimators::RiskReport> reports;
    std::vector<bool> exceeds;
    std::vector<bool> coupled;
    int exit_code = kOk;
};

inline RiskRun run_risk(const RunConfig& c) {
    const double tmax = *std::max_element(c.theta_norms.begin(), c.theta_norms.end());
    const auto prior = io::resolve_prior(c.prior_spec, c.grid.points(), c.quad);
    marginals::MarginalProfile p = prior.profile;
    if (prior.kind != io::Kind::Flat) p = p.tabulate(estimators::risk_table_grid(c.k, tmax));
    RiskRun r;
    r.reports = estimators::risk_curve(p, c.theta_norms, c.n_samples, c.seed);
    for (const auto& x : r.reports) {
        const bool ex = x.mc_risk > c.k + 3.0 * x.mc_stderr;
        r.exceeds.push_back(ex);
        r.coupled.push_back(std::fabs(x.mc_risk - x.sure_mean) <= 4.0 * (x.mc_stderr + x.sure_stderr));
        if (ex) r.exit_code = kRiskExceeded;
    }
    return r;
}

inline int cmd_risk(const RunConfig& c) {
    RunOutput out(c);
    const auto r = run_risk(c);
    out.write("risk.csv", io::risk_csv(r.reports));
    out.write("risk_long.csv", io::risk_long_csv(r.reports));
    json arr = json::array();
    for (std::size_t i = 0; i < r.reports.size(); ++i) {
        auto j = io::to_json(r.reports[i]);
        j["exceeds_k_plus_3se"] = static_cast<bool>(r.exceeds[i]);
        j["sure_coupled"] = static_cast<bool>(r.coupled[i]);
        arr.push_back(j);
    }
    out.write_json("risk.json", {{"family", c.prior_spec["family"]}, {"k", c.k}, {"points", arr}});
    json seeds = json::array();
    for (const auto& x : r.reports) seeds.push_back(x.seed);
    out.finish(r.exit_code, {{"point_seeds", seeds}});
    for (std::size_t i = 0; i < r.reports.size(); ++i) {
        const auto& x = r.reports[i];
        std::cout << "theta_norm " << x.theta_norm << ": risk " << x.mc_risk << " +- " << x.mc_stderr << ", SURE "
                  << x.sure_mean << " +- " << x.sure_stderr << (r.exceeds[i] ? "  EXCEEDS k" : "")
                  << (r.coupled[i] ? "" : "  SURE/MC MISMATCH") << "\n";
    }
    return r.exit_code;
}

// ---------------------------------------------------------------------------
// transform

inline int cmd_transform(const RunConfig& c) {
    const json& t = c.transform;
    const std::string kind = t.value("kind", "I");
    if (kind != "I" && kind != "K") throw io::ConfigError("transform.kind must be I or K");
    const double nu = t.value("nu", 0.5 * (c.k - 2));
    const json input = t.value("input", json{{"type", "prior"}});
    const std::string type = input.value("type", "prior");
    const double tol = t.value("rel_tolerance", 1e-5);
    const auto y = c.grid.points();

    std::optional<ScalarFn> lambda;
    ScalarFn f;
    std::optional<std::function<double(double)>> closed;
    if (type == "prior") {
        const auto prior = io::resolve_prior(c.prior_spec, y, c.quad);
        if (prior.radial)
            lambda = prior.radial->lambda;
        else if (prior.kind == io::Kind::Strawderman)
            lambda = priors::strawderman_radial(io::detail::get_param(prior.params, prior.family, "a"), c.k, c.quad).lambda;
        else if (prior.mixture)
            lambda = priors::mixture_radial(*prior.mixture, c.quad).lambda;
        else
            throw io::ConfigError("transform: family '" + prior.family + "' has no radial density");
        const int k = c.k;
        f.eval = [lam = *lambda, k](double r) { return std::pow(r, 0.5 * (1.0 - k)) * std::exp(-0.5 * r * r) * lam(r); };
        f.log_abs = [lam = *lambda, k](double r) { return 0.5 * (1.0 - k) * std::log(r) - 0.5 * r * r + lam.log_abs_value(r); };
    } else if (type == "gaussian_bessel") {
        const double a = input.value("alpha", 1.0);
        if (!(a > 0.0)) throw io::ConfigError("transform.input.alpha must be positive");
        f.eval = [=](double x) { return std::pow(x, nu + 0.5) * std::exp(-a * x * x); };
        f.log_abs = [=](double x) { return (nu + 0.5) * std::log(x) - a * x * x; };
        if (kind == "I")
            closed = [=](double yy) { return std::pow(yy, nu + 0.5) * std::exp(yy * yy / (4 * a)) / std::pow(2 * a, nu + 1); };
    } else if (type == "gaussian") {
        f.eval = [](double x) { return std::sqrt(x) * std::exp(-0.5 * x * x); };
    } else if (type == "zero") {
        f = constant_fn(0.0, "zero");
    } else {
        throw io::ConfigError("transform.input.type must be prior, gaussian_bessel, gaussian or zero");
    }

    RunOutput out(c);
    std::vector<double> vals;
    std::size_t divergent = 0;
    for (double yy : y) {
        try {
            vals.push_back(kind == "I" ? transforms::i_transform(f, nu, yy, c.quad) : transforms::k_transform(f, nu, yy, c.quad));
        } catch (const DivergenceError&) {
            vals.push_back(std::numeric_limits<double>::quiet_NaN());
            ++divergent;
        }
    }
    json doc{{"kind", kind}, {"nu", nu}, {"input", input}, {"divergent_points", divergent}};
    std::vector<std::string> header{"y", "value"};
    std::vector<std::vector<double>> cols{y, vals};
    std::optional<ConditionReport> rep;
    if (closed) {
        std::vector<double> ref;
        ConditionReport r;
        r.condition_id = "closed_form_match";
        r.numerical_band = 0.0;
        const double ctol = t.value("closed_form_tolerance", 1e-7);
        for (std::size_t i = 0; i < y.size(); ++i) {
            ref.push_back((*closed)(y[i]));
            r.add_point(y[i], std::fabs(vals[i] / ref.back() - 1.0) - ctol, 1.0);
            r.values.push_back(vals[i]);
        }
        r.finalize();
        header.push_back("closed_form");
        cols.push_back(ref);
        rep = r;
    }
    if (t.contains("target")) {
        if (!lambda || kind != "I") throw io::ConfigError("transform.target needs input type prior and kind I");
        const auto& tg = t["target"];
        if (tg.value("type", "") != "power_gauss") throw io::ConfigError("transform.target.type must be power_gauss");
        const double g = tg.value("gamma", 1.0);
        ScalarFn F;
        F.eval = [g](double uu) { return std::pow(uu, g) * std::exp(0.5 * uu * uu); };
        rep = transforms::i_transform_consistency(*lambda, F, nu, y, c.quad, tol);
        std::vector<double> target;
        for (double yy : y) target.push_back(F(yy));
        header.push_back("target");
        cols.push_back(target);
    }
    int code = divergent ? kConstruction : kOk;
    if (rep) {
        doc["report"] = io::to_json(*rep);
        if (code == kOk && rep->verdict == Verdict::Fails) code = kFails;
        if (code == kOk && rep->verdict == Verdict::Inconclusive) code = kInconclusive;
    }
    out.write("transform.csv", io::table_csv(header, cols));
    out.write_json("transform.json", doc);
    out.finish(code);
    std::cout << "transform " << kind << "_" << nu << ": " << y.size() << " points, " << divergent << " divergent";
    if (rep) std::cout << ", " << rep->condition_id << " " << to_string(rep->verdict);
    std::cout << "\n";
    return code;
}

// ---------------------------------------------------------------------------
// report: recompute the exit status of an earlier run from its outputs

inline int cmd_report(const std::string& manifest_path) {
    const json m = read_json_file(manifest_path);
    if (!m.contains("tool") || !m.contains("exit_code")) throw io::ConfigError("report: not a manifest");
    std::cout << m["tool"].get<std::string>() << " " << m["command"].get<std::string>() << ": exit " << m["exit_code"]
              << "\n";
    for (const auto& f : m["outputs"]) std::cout << "  " << f.get<std::string>() << "\n";
    return m["exit_code"].get<int>();
}

/// Runs one subcommand and maps errors to exit codes.
template <class Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const io::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const ConstructionError& e) {
        std::cerr << "construction error: " << e.what() << "\n";
        return kConstruction;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kConstruction;
    } catch (const QuadratureError& e) {
        std::cerr << "quadrature error: " << e.what() << "\n";
        return kConstruction;
    } catch (const EvaluationError& e) {
        std::cerr << "evaluation error: " << e.what() << "\n";
        return kConstruction;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInternal;
    }
}

inline int run(const std::string& command, const std::string& config_path, const Overrides& ov) {
    return guarded([&] {
        if (command == "report") return cmd_report(config_path);
        const auto cfg = resolve_config(command, read_json_file(config_path), ov);
        if (command == "verify") return cmd_verify(cfg);
        if (command == "construct") return cmd_construct(cfg);
        if (command == "risk") return cmd_risk(cfg);
        if (command == "transform") return cmd_transform(cfg);
        throw io::ConfigError("unknown command '" + command + "'");
    });
}

} // namespace bmx::cli
