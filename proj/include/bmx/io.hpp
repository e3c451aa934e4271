#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bmx/conditions.hpp"
#include "bmx/error.hpp"
#include "bmx/estimators.hpp"
#include "bmx/marginals.hpp"
#include "bmx/priors.hpp"
#include "bmx/report.hpp"

namespace bmx::io {

using json = nlohmann::json;

/// Malformed or inconsistent run configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline std::string csv_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace detail

inline json to_json(const ConditionReport& r) {
    json pts = json::array();
    for (std::size_t i = 0; i < r.grid.size(); ++i) {
        json p{{"x", r.grid[i]}, {"margin", detail::number_or_null(r.margins[i])}};
        if (i < r.raw_margins.size()) p["raw_margin"] = detail::number_or_null(r.raw_margins[i]);
        if (i < r.scales.size()) p["scale"] = detail::number_or_null(r.scales[i]);
        if (i < r.values.size()) p["value"] = detail::number_or_null(r.values[i]);
        pts.push_back(std::move(p));
    }
    return {{"condition_id", r.condition_id},
            {"verdict", to_string(r.verdict)},
            {"numerical_band", r.numerical_band},
            {"points", std::move(pts)},
            {"witness", r.witness ? json(*r.witness) : json(nullptr)},
            {"annotations", r.annotations}};
}

inline json to_json(const estimators::RiskReport& r) {
    return {{"theta_norm", r.theta_norm},   {"n", r.n_samples},           {"seed", r.seed},
            {"mc_risk", r.mc_risk},         {"mc_stderr", r.mc_stderr},   {"sure_mean", r.sure_mean},
            {"sure_stderr", r.sure_stderr}, {"diff_stderr", r.diff_stderr}, {"k", r.baseline_k},
            {"failures", r.failures}};
}

inline std::string risk_csv(const std::vector<estimators::RiskReport>& rs) {
    std::ostringstream o;
    o << "theta_norm,n,seed,mc_risk,mc_stderr,sure_mean,sure_stderr,k\n";
    for (const auto& r : rs)
        o << detail::csv_number(r.theta_norm) << ',' << r.n_samples << ',' << r.seed << ',' << detail::csv_number(r.mc_risk)
          << ',' << detail::csv_number(r.mc_stderr) << ',' << detail::csv_number(r.sure_mean) << ','
          << detail::csv_number(r.sure_stderr) << ',' << r.baseline_k << '\n';
    return o.str();
}

/// Long format (theta_norm, quantity, value) for plotting.
inline std::string risk_long_csv(const std::vector<estimators::RiskReport>& rs) {
    std::ostringstream o;
    o << "theta_norm,quantity,value\n";
    for (const auto& r : rs) {
        const std::pair<const char*, double> rows[] = {{"mc_risk", r.mc_risk},     {"mc_stderr", r.mc_stderr},
                                                       {"sure_mean", r.sure_mean}, {"sure_stderr", r.sure_stderr},
                                                       {"baseline", double(r.baseline_k)}};
        for (const auto& [q, v] : rows) o << detail::csv_number(r.theta_norm) << ',' << q << ',' << detail::csv_number(v) << '\n';
    }
    return o.str();
}

/// CSV table with a header row; all columns have the length of the first.
inline std::string table_csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& cols) {
    std::ostringstream o;
    for (std::size_t j = 0; j < header.size(); ++j) o << (j ? "," : "") << header[j];
    o << '\n';
    const std::size_t n = cols.empty() ? 0 : cols.front().size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) o << (j ? "," : "") << detail::csv_number(cols[j][i]);
        o << '\n';
    }
    return o.str();
}

/// Writes through a temporary file in the same directory and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// φ token grammar: sums of c/u², c/u, c, c·u (variable u or s)

/// φ(x) = m2/x² + m1/x + c0 + p1·x.
struct PhiTerms {
    double m2 = 0.0;
    double m1 = 0.0;
    double c0 = 0.0;
    double p1 = 0.0;

    double operator()(double x) const { return m2 / (x * x) + m1 / x + c0 + p1 * x; }

    ScalarFn to_fn(std::string label = "phi") const {
        ScalarFn f;
        f.eval = [t = *this](double x) { return t(x); };
        f.deriv1 = [t = *this](double x) { return -2 * t.m2 / (x * x * x) - t.m1 / (x * x) + t.p1; };
        f.label = std::move(label);
        return f;
    }

    /// Coefficients of x^{j-2}.
    priors::PhiSeries series() const { return priors::PhiSeries{{m2, m1, c0, p1}}; }
};

namespace detail {

inline double parse_coefficient(const std::string& s, const std::string& term) {
    if (s.empty()) return 1.0;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno != 0 || !std::isfinite(v)) throw ConfigError("phi: bad coefficient in '" + term + "'");
    return v;
}

inline void add_phi_term(PhiTerms& t, std::string term) {
    std::string raw = term;
    term.erase(std::remove_if(term.begin(), term.end(), [](unsigned char c) { return std::isspace(c); }), term.end());
    // superscript two in UTF-8
    for (std::size_t p; (p = term.find("\xC2\xB2")) != std::string::npos;) term.replace(p, 2, "^2");
    double sign = 1.0;
    while (!term.empty() && (term[0] == '+' || term[0] == '-')) {
        if (term[0] == '-') sign = -sign;
        term.erase(0, 1);
    }
    static const std::regex re(R"(^((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?(?:(\*?)([us])|/([us])(\^2)?)?$)");
    std::smatch m;
    if (term.empty() || !std::regex_match(term, m, re)) throw ConfigError("phi: malformed token '" + raw + "'");
    const bool has_num = m[1].matched;
    const bool mul_var = m[3].matched;
    const bool div_var = m[4].matched;
    if (!has_num && !mul_var) throw ConfigError("phi: malformed token '" + raw + "'");
    if (m[2].length() > 0 && !has_num) throw ConfigError("phi: malformed token '" + raw + "'");
    const double c = sign * parse_coefficient(m[1].str(), raw);
    if (mul_var)
        t.p1 += c;
    else if (div_var)
        (m[5].matched ? t.m2 : t.m1) += c;
    else
        t.c0 += c;
}

inline void split_phi_expression(PhiTerms& t, const std::string& expr) {
    std::string cur;
    for (std::size_t i = 0; i < expr.size(); ++i) {
        const char ch = expr[i];
        const bool exp_sign = (ch == '+' || ch == '-') && !cur.empty() &&
                              (cur.back() == 'e' || cur.back() == 'E') && cur.size() >= 2 &&
                              (std::isdigit(static_cast<unsigned char>(cur[cur.size() - 2])) || cur[cur.size() - 2] == '.');
        const bool only_sign = cur.find_first_not_of(" +-") == std::string::npos;
        if ((ch == '+' || ch == '-') && !exp_sign && !only_sign) {
            add_phi_term(t, cur);
            cur.clear();
        }
        cur += ch;
    }
    if (cur.find_first_not_of(' ') == std::string::npos) throw ConfigError("phi: empty expression");
    add_phi_term(t, cur);
}

} // namespace detail

/// Parses "−2/u^2 + 0.5/u − 1 + 3*u" or a JSON list of such tokens.
inline PhiTerms parse_phi(const json& j) {
    PhiTerms t;
    if (j.is_string()) {
        detail::split_phi_expression(t, j.get<std::string>());
    } else if (j.is_array() && !j.empty()) {
        for (const auto& e : j) {
            if (e.is_number()) {
                t.c0 += e.get<double>();
            } else if (e.is_string()) {
                detail::split_phi_expression(t, e.get<std::string>());
            } else {
                throw ConfigError("phi: tokens must be strings or numbers");
            }
        }
    } else if (j.is_number()) {
        t.c0 = j.get<double>();
    } else {
        throw ConfigError("phi: expected a token string or a nonempty list of tokens");
    }
    return t;
}

// ---------------------------------------------------------------------------
// Prior specs

inline const std::vector<std::string>& known_families() {
    static const std::vector<std::string> f{"strawderman", "example1", "example2", "whittaker", "bessel_F",
                                            "custom_phi_spherical", "custom_phi_mixture", "flat"};
    return f;
}

enum class Kind { Mixture, Strawderman, Spherical, Radial, Flat };

struct ResolvedPrior {
    std::string family;
    int k = 0;
    json params;
    Kind kind = Kind::Mixture;
    marginals::MarginalProfile profile;
    std::optional<priors::MixingDensity> mixture;
    std::optional<priors::RadialPrior> radial;
    /// Laplace-route G (custom_phi_mixture) and spherical F (bessel_F, custom_phi_spherical).
    std::optional<ScalarFn> G;
    std::optional<ScalarFn> F;
    std::optional<priors::ConstructionSolution> construction;
    std::optional<PhiTerms> phi;
    priors::Properness proper = priors::Properness::Unknown;
};

namespace detail {

inline double get_param(const json& params, const std::string& family, const char* name,
                        std::optional<double> fallback = std::nullopt) {
    if (!params.contains(name)) {
        if (fallback) return *fallback;
        throw ConfigError(family + ": missing parameter '" + name + "'");
    }
    const auto& v = params.at(name);
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "+inf" || s == "infinity") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    throw ConfigError(family + ": parameter '" + name + "' must be a number");
}

inline int get_int_param(const json& params, const std::string& family, const char* name) {
    const double v = get_param(params, family, name);
    if (v != std::floor(v)) throw ConfigError(family + ": parameter '" + name + "' must be an integer");
    return static_cast<int>(v);
}

inline std::array<double, 3> combine(const ScalarFn& z1, const ScalarFn& z2, double c1, double c2, double u) {
    std::array<double, 3> w{0, 0, 0};
    if (c1 != 0.0) w = {c1 * z1(u), c1 * z1.d1(u), c1 * z1.d2(u)};
    if (c2 != 0.0) {
        w[0] += c2 * z2(u);
        w[1] += c2 * z2.d1(u);
        w[2] += c2 * z2.d2(u);
    }
    return w;
}

} // namespace detail

/// Resolves {"family", "k", "params"}; `u_grid` is used by the spherical construction.
/// Domain errors from the families surface as ConfigError; construction failures propagate.
inline ResolvedPrior resolve_prior(const json& spec, const std::vector<double>& u_grid, const QuadSpec& q = {}) {
    if (!spec.is_object()) throw ConfigError("prior_spec must be a JSON object");
    if (!spec.contains("family") || !spec["family"].is_string()) throw ConfigError("prior_spec: missing string field 'family'");
    ResolvedPrior r;
    r.family = spec["family"].get<std::string>();
    const auto& fams = known_families();
    if (std::find(fams.begin(), fams.end(), r.family) == fams.end()) {
        std::string list;
        for (const auto& f : fams) list += (list.empty() ? "" : ", ") + f;
        throw ConfigError("unknown prior family '" + r.family + "'; known families: " + list);
    }
    if (!spec.contains("k") || !spec["k"].is_number_integer()) throw ConfigError("prior_spec: missing integer field 'k'");
    r.k = spec["k"].get<int>();
    if (r.k < 3) throw ConfigError("prior_spec: k must be at least 3");
    r.params = spec.value("params", json::object());
    if (!r.params.is_object()) throw ConfigError("prior_spec: 'params' must be an object");
    const int k = r.k;
    const auto& fam = r.family;
    const auto& P = r.params;

    try {
        if (fam == "strawderman") {
            const double a = detail::get_param(P, fam, "a");
            r.kind = Kind::Strawderman;
            r.mixture = priors::strawderman_mixing(a, k);
            r.profile = marginals::marginal_strawderman(a, k);
            r.proper = priors::Properness::Proper;
        } else if (fam == "example1") {
            const int n = detail::get_int_param(P, fam, "n");
            r.kind = Kind::Mixture;
            r.mixture = priors::example1_mixing(n, k);
            r.profile = marginals::marginal_mixture(*r.mixture, q);
            r.proper = r.mixture->proper;
        } else if (fam == "example2") {
            const double al = detail::get_param(P, fam, "alpha"), be = detail::get_param(P, fam, "beta");
            const double ga = detail::get_param(P, fam, "gamma"), si = detail::get_param(P, fam, "sigma");
            r.kind = Kind::Mixture;
            r.mixture = priors::example2_mixing(al, be, ga, si, k);
            r.profile = marginals::marginal_mixture(*r.mixture, q);
            r.proper = r.mixture->proper;
        } else if (fam == "whittaker") {
            const double ga = detail::get_param(P, fam, "gamma");
            r.kind = Kind::Radial;
            r.radial = priors::whittaker_radial(ga, k);
            r.profile = marginals::marginal_radial(*r.radial, q);
            r.proper = r.radial->proper;
        } else if (fam == "bessel_F") {
            const double b = detail::get_param(P, fam, "b");
            const double A1 = detail::get_param(P, fam, "A1", 1.0), A2 = detail::get_param(P, fam, "A2", 0.0);
            r.kind = Kind::Spherical;
            r.F = priors::bessel_example_F(b, k, A1, A2);
            const auto [r1, r2] = priors::detail::indicial_roots(-2.0 * b, k);
            auto wjet = [=, r1 = r1, r2 = r2](double u) {
                const double p1 = A1 * std::pow(u, r1), p2 = A2 * std::pow(u, r2);
                return std::array<double, 3>{p1 + p2, (r1 * p1 + r2 * p2) / u,
                                             (r1 * (r1 - 1) * p1 + r2 * (r2 - 1) * p2) / (u * u)};
            };
            r.profile = marginals::marginal_from_w(wjet, k, "bessel example marginal");
            r.phi = PhiTerms{-2.0 * b, 0, 0, 0};
        } else if (fam == "custom_phi_spherical") {
            if (!P.contains("phi")) throw ConfigError(fam + ": missing parameter 'phi'");
            r.phi = parse_phi(P["phi"]);
            const double c1 = detail::get_param(P, fam, "c1", 1.0), c2 = detail::get_param(P, fam, "c2", 0.0);
            r.kind = Kind::Spherical;
            r.construction = priors::construct_spherical(r.phi->to_fn("phi(u)"), r.phi->series(), k, c1, c2, u_grid);
            r.F = r.construction->F;
            auto z1 = r.construction->z1, z2 = r.construction->z2;
            r.profile = marginals::marginal_from_w([=](double u) { return detail::combine(z1, z2, c1, c2, u); }, k,
                                                   "constructed spherical marginal");
        } else if (fam == "custom_phi_mixture") {
            if (!P.contains("phi")) throw ConfigError(fam + ": missing parameter 'phi'");
            r.phi = parse_phi(P["phi"]);
            const double a = detail::get_param(P, fam, "a", 1.0);
            const double b = detail::get_param(P, fam, "b", std::numeric_limits<double>::infinity());
            r.kind = Kind::Mixture;
            r.G = priors::construct_G_mixture(r.phi->to_fn("phi(s)"), a, b, k, q);
            r.profile = marginals::marginal_from_G(*r.G, k, "constructed mixture marginal");
        } else {
            r.kind = Kind::Flat;
            r.profile = marginals::flat_profile(k);
            r.proper = priors::Properness::Improper;
        }
    } catch (const DomainError& e) {
        throw ConfigError(fam + ": " + e.what());
    }
    return r;
}

// ---------------------------------------------------------------------------
// Grids

struct GridSpec {
    double lo = 1e-2;
    double hi = 30.0;
    std::size_t n = 200;
    bool log = true;

    std::vector<double> points() const {
        return log ? conditions::log_grid(lo, hi, n) : conditions::lin_grid(lo, hi, n);
    }
};

inline void validate(const GridSpec& g) {
    if (!(g.lo < g.hi)) throw ConfigError("grid: lo must be below hi");
    if (g.n < 2) throw ConfigError("grid: n_points must be at least 2");
    if (g.log && !(g.lo > 0.0)) throw ConfigError("grid: log spacing needs lo > 0");
}

/// "lo,hi,n,log|lin".
inline GridSpec parse_grid_string(const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
    if (parts.size() != 4) throw ConfigError("--grid expects lo,hi,n,log|lin");
    GridSpec g;
    try {
        std::size_t pos = 0;
        g.lo = std::stod(parts[0], &pos);
        if (pos != parts[0].size()) throw std::invalid_argument("lo");
        g.hi = std::stod(parts[1], &pos);
        if (pos != parts[1].size()) throw std::invalid_argument("hi");
        const long n = std::stol(parts[2], &pos);
        if (pos != parts[2].size() || n < 2) throw std::invalid_argument("n");
        g.n = static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("--grid: cannot parse '" + s + "'");
    }
    if (parts[3] == "log")
        g.log = true;
    else if (parts[3] == "lin" || parts[3] == "linear")
        g.log = false;
    else
        throw ConfigError("--grid: spacing must be log or lin");
    validate(g);
    return g;
}

inline GridSpec parse_grid_json(const json& j) {
    GridSpec g;
    if (!j.is_object()) throw ConfigError("grid_spec must be an object");
    try {
        g.lo = j.value("lo", g.lo);
        g.hi = j.value("hi", g.hi);
        g.n = j.value("n_points", g.n);
        const std::string sp = j.value("spacing", std::string("log"));
        if (sp == "log")
            g.log = true;
        else if (sp == "linear" || sp == "lin")
            g.log = false;
        else
            throw ConfigError("grid_spec.spacing must be linear or log");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("grid_spec: ") + e.what());
    }
    validate(g);
    return g;
}

inline json to_json(const GridSpec& g) {
    return {{"lo", g.lo}, {"hi", g.hi}, {"n_points", g.n}, {"spacing", g.log ? "log" : "linear"}};
}

} // namespace bmx::io
