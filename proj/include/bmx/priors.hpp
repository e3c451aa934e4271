#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bmx/error.hpp"
#include "bmx/ode.hpp"
#include "bmx/quadrature.hpp"
#include "bmx/scalar_fn.hpp"
#include "bmx/specfun.hpp"
#include "bmx/transforms.hpp"

namespace bmx::priors {

enum class Properness { Proper, Improper, Unknown };

inline const char* to_string(Properness p) {
    switch (p) {
    case Properness::Proper: return "proper";
    case Properness::Improper: return "improper";
    default: return "unknown";
    }
}

struct FamilyTag {
    std::string name;
    std::map<std::string, double> params;
};

/// Prior on R^k through its radial density λ(r). `mass` is ∫λ when known
/// (finite for proper priors); λ is not rescaled on construction.
struct RadialPrior {
    int k = 3;
    ScalarFn lambda;
    Properness proper = Properness::Unknown;
    FamilyTag family;
    double mass = std::numeric_limits<double>::quiet_NaN();

    RadialPrior normalized() const {
        if (!(mass > 0.0) || !std::isfinite(mass)) throw DomainError("normalized: prior mass is not a finite positive number");
        RadialPrior out = *this;
        out.lambda = lambda.scaled(1.0 / mass);
        out.mass = 1.0;
        return out;
    }
};

/// Variance-mixing density h(v) of a scale mixture of normals, with its unit
/// Laplace kernel f(t) = t^{k/2-2} h((1-t)/t) on (0, 1).
struct MixingDensity {
    int k = 3;
    ScalarFn h;
    ScalarFn f_unit;
    /// Present when t f'/f = p0 + r(t) is known in closed form.
    std::optional<transforms::UnitKernel> kernel;
    Properness proper = Properness::Unknown;
    FamilyTag family;
    double mass = std::numeric_limits<double>::quiet_NaN();

    MixingDensity normalized() const {
        if (!(mass > 0.0) || !std::isfinite(mass)) throw DomainError("normalized: mixing mass is not a finite positive number");
        const double c = 1.0 / mass;
        MixingDensity out = *this;
        out.h = h.scaled(c);
        out.f_unit = f_unit.scaled(c);
        if (out.kernel) {
            out.kernel->f = out.kernel->f.scaled(c);
            out.kernel->f_at_1 *= c;
        }
        out.mass = 1.0;
        return out;
    }
};

inline void require_dimension(int k) {
    if (k < 3) throw DomainError("dimension k must be at least 3");
}

// ---------------------------------------------------------------------------
// Properness

struct PropernessProbe {
    Properness verdict = Properness::Unknown;
    double mass = std::numeric_limits<double>::quiet_NaN();
    double tail_exponent = std::numeric_limits<double>::quiet_NaN();
    std::string note;
};

/// Integrates g over (0, horizon) and fits the tail exponent over the last decade.
inline PropernessProbe probe_properness(const ScalarFn& g, double horizon = 1e6, const QuadSpec& q = {}) {
    PropernessProbe out;
    double m = 0.0;
    try {
        std::vector<double> breaks{0.0};
        for (double x = 1e-12; x < horizon; x *= std::sqrt(10.0)) breaks.push_back(x);
        breaks.push_back(horizon);
        m = integrate_breakpoints<1>([&g](double x) { return Vec<1>{g(x)}; }, breaks, q)[0];
    } catch (const QuadratureError& e) {
        out.verdict = Properness::Improper;
        out.note = std::string("integral over (0, horizon) failed: ") + e.what();
        return out;
    }
    if (!std::isfinite(m)) {
        out.verdict = Properness::Improper;
        out.note = "non-finite mass";
        return out;
    }
    const double g1 = std::fabs(g(horizon / 10));
    const double g2 = std::fabs(g(horizon));
    out.tail_exponent = g2 == 0.0 ? -std::numeric_limits<double>::infinity() : std::log10(g2 / g1);
    if (m == 0.0) {
        out.verdict = Properness::Unknown;
        out.mass = 0.0;
        out.note = "zero mass";
        return out;
    }
    if (std::isnan(out.tail_exponent)) {
        out.verdict = Properness::Unknown;
        out.note = "tail exponent undefined";
    } else if (out.tail_exponent < -1.05) {
        out.verdict = Properness::Proper;
        // tail beyond the horizon for a power law with exponent p: g(H) H / (-p - 1)
        const double p = out.tail_exponent;
        out.mass = std::isfinite(p) ? m + g2 * horizon / (-p - 1.0) : m;
    } else if (out.tail_exponent > -0.95) {
        out.verdict = Properness::Improper;
    } else {
        out.verdict = Properness::Unknown;
        out.note = "tail exponent within 0.05 of -1";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Radial families

/// λ(r) = (2π^{k/2}/Γ(k/2)) r^{k-1} g(r²).
inline RadialPrior radial_from_angular(const ScalarFn& g, int k, bool probe = true) {
    require_dimension(k);
    for (int i = 0; i < 64; ++i) {
        const double t = std::pow(10.0, -6.0 + 12.0 * i / 63.0);
        if (g(t) < 0.0) {
            std::ostringstream msg;
            msg << "radial_from_angular: negative angular density at t = " << t;
            throw DomainError(msg.str());
        }
    }
    const double log_c = std::numbers::ln2 + 0.5 * k * std::log(std::numbers::pi) - specfun::log_gamma(0.5 * k);
    RadialPrior p;
    p.k = k;
    p.family = {"angular", {}};
    p.lambda.label = "radial from angular";
    p.lambda.eval = [g, k, c = std::exp(log_c)](double r) { return c * std::pow(r, k - 1) * g(r * r); };
    p.lambda.log_abs = [g, k, log_c](double r) { return log_c + (k - 1) * std::log(r) + g.log_abs_value(r * r); };
    if (probe) {
        const auto pr = probe_properness(p.lambda);
        p.proper = pr.verdict;
        p.mass = pr.mass;
    }
    return p;
}

/// Normal radial density λ_v(r) = (2^{1-k/2}/Γ(k/2)) r^{k-1} v^{-k/2} e^{-r²/(2v)}.
inline ScalarFn normal_radial(double v, int k) {
    require_dimension(k);
    if (!(v > 0.0)) throw DomainError("normal_radial: v must be positive");
    const double log_c = (1.0 - 0.5 * k) * std::numbers::ln2 - specfun::log_gamma(0.5 * k) - 0.5 * k * std::log(v);
    ScalarFn f;
    f.label = "normal radial";
    f.log_abs = [=](double r) { return log_c + (k - 1) * std::log(r) - r * r / (2 * v); };
    f.eval = [lf = *f.log_abs](double r) { return std::exp(lf(r)); };
    f.deriv1 = [=, e = f.eval](double r) { return e(r) * ((k - 1) / r - r / v); };
    f.deriv2 = [=, e = f.eval](double r) {
        const double L = (k - 1) / r - r / v;
        return e(r) * (L * L - (k - 1) / (r * r) - 1.0 / v);
    };
    return f;
}

inline double log_normal_radial(double v, int k, double r) {
    return (1.0 - 0.5 * k) * std::numbers::ln2 - std::lgamma(0.5 * k) - 0.5 * k * std::log(v) + (k - 1) * std::log(r) -
           r * r / (2 * v);
}

/// λ(r) = ∫_0^∞ h(v) λ_v(r) dv by quadrature; properness inherited from h.
inline RadialPrior mixture_radial(const MixingDensity& mix, const QuadSpec& q = {}) {
    require_dimension(mix.k);
    RadialPrior p;
    p.k = mix.k;
    p.proper = mix.proper;
    p.mass = mix.mass;
    p.family = mix.family;
    p.lambda.label = "mixture radial";
    const int k = mix.k;
    p.lambda.eval = [h = mix.h, k, q](double r) {
        auto integrand = [&](double v) {
            const double hv = h(v);
            if (hv == 0.0) return 0.0;
            return hv * std::exp(log_normal_radial(v, k, r));
        };
        return bmx::integrate(integrand, 0.0, std::numeric_limits<double>::infinity(), relative_only(q));
    };
    return p;
}

/// Mixing density of the Strawderman prior, h(v) = (1-a)(1+v)^{a-2}, with f = (1-a) t^{k/2-a}.
inline MixingDensity strawderman_mixing(double a, int k) {
    require_dimension(k);
    if (!(a >= 0.0 && a < 1.0)) throw DomainError("strawderman: a must lie in [0, 1)");
    MixingDensity m;
    m.k = k;
    m.family = {"strawderman", {{"a", a}}};
    m.h.label = "strawderman h";
    m.h.eval = [a](double v) { return (1 - a) * std::pow(1 + v, a - 2); };
    m.h.deriv1 = [a](double v) { return (1 - a) * (a - 2) * std::pow(1 + v, a - 3); };
    const double p0 = 0.5 * k - a;
    m.f_unit.label = "strawderman kernel";
    m.f_unit.support = {0.0, 1.0};
    m.f_unit.eval = [a, p0](double t) { return (1 - a) * std::pow(t, p0); };
    m.kernel = transforms::UnitKernel{m.f_unit, p0, {}, 1 - a, "strawderman"};
    m.proper = Properness::Proper;
    m.mass = 1.0;
    return m;
}

/// Strawderman radial density by quadrature of its t-integral representation.
inline double strawderman_lambda_integral(double a, int k, double r, const QuadSpec& q = {}) {
    const double log_c = std::log(2 * (1 - a)) - 0.5 * k * std::numbers::ln2 - std::lgamma(0.5 * k) + (k - 1) * std::log(r);
    auto integrand = [=](double t) {
        if (t == 0.0) return 0.0;
        return std::exp(log_c + (0.5 * k - a) * std::log(t) + (a - 2) * std::log1p(t) - 0.5 * t * r * r);
    };
    return bmx::integrate(integrand, 0.0, std::numeric_limits<double>::infinity(), relative_only(q));
}

/// Strawderman radial density through the Whittaker W closed form.
inline double strawderman_lambda_whittaker(double a, int k, double r, const QuadSpec& q = {}) {
    const double z = 0.5 * r * r;
    const double c = (1 - a) * std::pow(2.0, 1.0 - 0.25 * k) * std::exp(std::lgamma(0.5 * k - a + 1) - std::lgamma(0.5 * k));
    return c * std::pow(r, 0.5 * k - 1) * std::exp(0.5 * z) * specfun::whittaker_w(a - 1 - 0.25 * k, 0.25 * (k - 2), z, q);
}

inline RadialPrior strawderman_radial(double a, int k, const QuadSpec& q = {}) {
    require_dimension(k);
    if (!(a >= 0.0 && a < 1.0)) throw DomainError("strawderman: a must lie in [0, 1)");
    RadialPrior p;
    p.k = k;
    p.family = {"strawderman", {{"a", a}}};
    p.proper = Properness::Proper;
    p.mass = 1.0;
    p.lambda.label = "strawderman radial";
    p.lambda.eval = [=](double r) { return strawderman_lambda_integral(a, k, r, q); };
    return p;
}

/// Example 1 mixing density h(v) = (v+1)^{k/2-2-n}, unit kernel t^n (not normalized).
inline MixingDensity example1_mixing(int n, int k) {
    require_dimension(k);
    if (n < 0) throw DomainError("example1: n must be nonnegative");
    const double e = 0.5 * k - 2 - n;
    MixingDensity m;
    m.k = k;
    m.family = {"example1", {{"n", static_cast<double>(n)}}};
    m.h.label = "example1 h";
    m.h.eval = [e](double v) { return std::pow(1 + v, e); };
    m.h.deriv1 = [e](double v) { return e * std::pow(1 + v, e - 1); };
    m.h.deriv2 = [e](double v) { return e * (e - 1) * std::pow(1 + v, e - 2); };
    m.f_unit.label = "example1 kernel";
    m.f_unit.support = {0.0, 1.0};
    m.f_unit.eval = [n](double t) { return std::pow(t, n); };
    m.kernel = transforms::UnitKernel{m.f_unit, static_cast<double>(n), {}, 1.0, "example1"};
    if (n > 0.5 * k - 1) {
        m.proper = Properness::Proper;
        m.mass = 1.0 / (n + 1 - 0.5 * k);
    } else {
        m.proper = Properness::Improper;
        m.mass = std::numeric_limits<double>::infinity();
    }
    return m;
}

/// t^{α-1}(1-t)^{β-1}(1-σt)^{-γ} on (0, 1).
inline ScalarFn example2_kernel(double alpha, double beta, double gamma, double sigma, int k) {
    require_dimension(k);
    if (!(alpha > 0.0) || !(beta > 0.0)) throw DomainError("example2: alpha > 0 and beta > 0 required for integrability");
    if (!(sigma > 0.0 && sigma < 1.0)) throw DomainError("example2: sigma must lie in (0, 1)");
    ScalarFn f;
    f.label = "example2 kernel";
    f.support = {0.0, 1.0};
    f.eval = [=](double t) {
        if (t <= 0.0 || t >= 1.0) {
            if (t == 1.0 && beta == 1.0) return std::pow(1 - sigma, -gamma);
            if (t == 0.0 && alpha == 1.0) return 1.0;
            return 0.0;
        }
        return std::pow(t, alpha - 1) * std::pow(1 - t, beta - 1) * std::pow(1 - sigma * t, -gamma);
    };
    return f;
}

inline transforms::UnitKernel example2_unit_kernel(double alpha, double beta, double gamma, double sigma, int k) {
    transforms::UnitKernel uk;
    uk.f = example2_kernel(alpha, beta, gamma, sigma, k);
    uk.p0 = alpha - 1;
    uk.r = [=](double t) { return -(beta - 1) * t / (1 - t) + gamma * sigma * t / (1 - sigma * t); };
    if (beta == 1.0)
        uk.f_at_1 = std::pow(1 - sigma, -gamma);
    else if (beta > 1.0)
        uk.f_at_1 = 0.0;
    else
        uk.f_at_1 = std::numeric_limits<double>::infinity();
    uk.label = "example2";
    return uk;
}

/// h(v) = (v+1)^{k/2-2} f_unit(1/(v+1)); properness probed by quadrature of h.
inline MixingDensity mixing_from_unit_kernel(const ScalarFn& f_unit, int k, bool probe = true) {
    require_dimension(k);
    for (int i = 1; i <= 64; ++i) {
        const double t = static_cast<double>(i) / 65.0;
        if (f_unit(t) < 0.0) {
            std::ostringstream msg;
            msg << "mixing_from_unit_kernel: negative kernel at t = " << t;
            throw DomainError(msg.str());
        }
    }
    MixingDensity m;
    m.k = k;
    m.family = {"unit_kernel", {}};
    m.f_unit = f_unit;
    m.f_unit.support = {0.0, 1.0};
    const double e = 0.5 * k - 2;
    m.h.label = "mixing from kernel";
    m.h.eval = [f_unit, e](double v) { return std::pow(v + 1, e) * f_unit(1 / (v + 1)); };
    if (probe) {
        const auto pr = probe_properness(m.h);
        m.proper = pr.verdict;
        m.mass = pr.mass;
    }
    return m;
}

inline MixingDensity example2_mixing(double alpha, double beta, double gamma, double sigma, int k) {
    MixingDensity m = mixing_from_unit_kernel(example2_kernel(alpha, beta, gamma, sigma, k), k);
    m.family = {"example2", {{"alpha", alpha}, {"beta", beta}, {"gamma", gamma}, {"sigma", sigma}}};
    if (beta >= 1.0) m.kernel = example2_unit_kernel(alpha, beta, gamma, sigma, k);
    return m;
}

// ---------------------------------------------------------------------------
// Whittaker-type radial density

/// λ(r) ∝ r^{(k-2)/2} e^{r²/4} M_{γ/2+1/4, (k-2)/4}(r²/2); improper.
inline RadialPrior whittaker_radial(double gamma, int k) {
    require_dimension(k);
    if (!(gamma + 0.5 * (k + 1) > 0.0)) throw DomainError("whittaker_radial: gamma + (k+1)/2 must be positive");
    const double x = 0.5 * gamma + 0.25;
    const double mu = 0.25 * (k - 2);
    RadialPrior p;
    p.k = k;
    p.family = {"whittaker", {{"gamma", gamma}}};
    p.proper = Properness::Improper;
    p.mass = std::numeric_limits<double>::infinity();
    p.lambda.label = "whittaker radial";
    p.lambda.eval = [=](double r) {
        return std::pow(r, 0.5 * (k - 2)) * std::exp(0.25 * r * r) * specfun::whittaker_m(x, mu, 0.5 * r * r);
    };
    p.lambda.log_abs = [=](double r) {
        const double z = 0.5 * r * r;
        const auto f = specfun::kummer_1f1_log(mu + 0.5 - x, 1 + 2 * mu, z);
        return 0.5 * (k - 2) * std::log(r) + 0.25 * r * r - 0.5 * z + (mu + 0.5) * std::log(z) + f.log_abs;
    };
    return p;
}

// ---------------------------------------------------------------------------
// Spherical construction through z'' + ((k-1)/u) z' - ½ φ z = 0

/// φ(u) = Σ_j b_j u^{j-2}, a generalized series with finitely many terms.
struct PhiSeries {
    std::vector<double> b;

    double operator()(double u) const {
        double v = 0.0;
        for (std::size_t j = b.size(); j-- > 0;) v = v * u + b[j];
        return v / (u * u);
    }

    ScalarFn to_fn(std::string label = "phi") const {
        ScalarFn f;
        f.eval = [s = *this](double u) { return s(u); };
        f.label = std::move(label);
        return f;
    }
};

struct ConstructionSolution {
    int k = 3;
    ScalarFn phi;
    ScalarFn F;
    ScalarFn z1;
    ScalarFn z2;
    double c1 = 1.0;
    double c2 = 0.0;
    double rho1 = 0.0;
    double rho2 = 0.0;
    std::vector<double> grid;
    /// Largest scaled residual of the ODE over the grid.
    double max_residual = 0.0;
};

namespace detail {

// F = w² q with q = u^{(k-1)/2} e^{u²/2}; derivatives from (w, w', w'').
struct FJet {
    double F, F1, F2, logF;
};

inline FJet assemble_F(double u, int k, double w, double w1, double w2) {
    const double alpha = 0.5 * (k - 1);
    const double logq = alpha * std::log(u) + 0.5 * u * u;
    const double L = alpha / u + u;
    const double L1 = -alpha / (u * u) + 1.0;
    const double q = std::exp(logq);
    const double q1 = q * L;
    const double q2 = q * (L * L + L1);
    FJet j;
    j.F = w * w * q;
    j.F1 = 2 * w * w1 * q + w * w * q1;
    j.F2 = 2 * (w1 * w1 + w * w2) * q + 4 * w * w1 * q1 + w * w * q2;
    j.logF = w == 0.0 ? -std::numeric_limits<double>::infinity() : 2 * std::log(std::fabs(w)) + logq;
    return j;
}

struct FrobeniusRoot {
    double rho = 0.0;
    std::vector<double> c;
};

inline std::pair<double, double> indicial_roots(double b0, int k) {
    const double disc = (k - 2.0) * (k - 2.0) + 2.0 * b0;
    if (disc < 0.0) {
        std::ostringstream msg;
        msg << "indicial roots are complex: the leading coefficient -b0/2 = " << -0.5 * b0
            << " exceeds (k-2)^2/4 = " << 0.25 * (k - 2.0) * (k - 2.0) << "; the construction needs b <= (k-2)^2/4";
        throw ConstructionError(msg.str());
    }
    if (disc == 0.0) throw ConstructionError("indicial roots coincide (zero root difference); logarithmic solution not supported");
    const double sq = std::sqrt(disc);
    return {0.5 * ((2.0 - k) - sq), 0.5 * ((2.0 - k) + sq)};
}

inline FrobeniusRoot frobenius_coefficients(const std::vector<double>& b, double rho, int k, int terms) {
    const double b0 = b.empty() ? 0.0 : b[0];
    auto P = [&](double x) { return x * (x + k - 2.0) - 0.5 * b0; };
    FrobeniusRoot out;
    out.rho = rho;
    out.c.assign(terms, 0.0);
    out.c[0] = 1.0;
    for (int n = 1; n < terms; ++n) {
        double rhs = 0.0;
        for (int i = 1; i <= n && i < static_cast<int>(b.size()); ++i) rhs += b[i] * out.c[n - i];
        rhs *= 0.5;
        const double p = P(n + rho);
        if (std::fabs(p) < 1e-12 * (1.0 + std::fabs(n + rho) * std::fabs(n + rho + k))) {
            if (std::fabs(rhs) > 1e-14) {
                std::ostringstream msg;
                msg << "integer indicial root difference " << n
                    << " with a nonzero resonance term; the logarithmic solution is out of scope, use the closed-form path";
                throw ConstructionError(msg.str());
            }
            out.c[n] = 0.0;
            continue;
        }
        out.c[n] = rhs / p;
    }
    return out;
}

// y = Σ c_n u^n and y'.
inline std::array<double, 2> series_y(const FrobeniusRoot& fr, double u) {
    double y = 0.0, dy = 0.0;
    for (std::size_t n = fr.c.size(); n-- > 0;) {
        y = y * u + fr.c[n];
        if (n > 0) dy = dy * u + n * fr.c[n];
    }
    return {y, dy};
}

// Normalized solution y = z u^{-ρ}, stored at checkpoints and continued on demand.
class RootSolution {
public:
    RootSolution(FrobeniusRoot fr, ScalarFn phi, double b0, int k, double u0, std::vector<double> grid, ode::OdeSpec spec)
        : fr_(std::move(fr)), phi_(std::move(phi)), b0_(b0), k_(k), u0_(u0), spec_(spec) {
        const auto start = series_y(fr_, u0_);
        knots_.push_back(u0_);
        states_.push_back(start);
        std::vector<double> outs;
        for (double u : grid)
            if (u > u0_ && (outs.empty() || u > outs.back())) outs.push_back(u);
        if (!outs.empty()) {
            const auto ys = ode::dormand_prince<2>(rhs(), u0_, start, outs, spec_);
            for (std::size_t i = 0; i < outs.size(); ++i) {
                knots_.push_back(outs[i]);
                states_.push_back(ys[i]);
            }
        }
    }

    // (y, y') at u.
    std::array<double, 2> y(double u) const {
        if (u <= u0_) return series_y(fr_, u);
        auto it = std::upper_bound(knots_.begin(), knots_.end(), u);
        const std::size_t i = static_cast<std::size_t>(it - knots_.begin()) - 1;
        if (knots_[i] == u) return states_[i];
        return ode::dormand_prince<2>(rhs(), knots_[i], states_[i], {u}, spec_)[0];
    }

    // (z, z', z'') at u.
    std::array<double, 3> z(double u) const {
        const auto [yy, dy] = y(u);
        const double rho = fr_.rho;
        const double p = std::pow(u, rho);
        const double z0 = p * yy;
        const double z1 = p * (dy + rho * yy / u);
        const double z2 = -(k_ - 1.0) / u * z1 + 0.5 * phi_(u) * z0;
        return {z0, z1, z2};
    }

    double rho() const { return fr_.rho; }

private:
    std::function<std::array<double, 2>(double, const std::array<double, 2>&)> rhs() const {
        const double rho = fr_.rho;
        const double b0 = b0_;
        const int k = k_;
        const ScalarFn& phi = phi_;
        return [rho, b0, k, &phi](double u, const std::array<double, 2>& s) {
            const double psi = phi(u) - b0 / (u * u);
            return std::array<double, 2>{s[1], -(2 * rho + k - 1) / u * s[1] + 0.5 * psi * s[0]};
        };
    }

    FrobeniusRoot fr_;
    ScalarFn phi_;
    double b0_;
    int k_;
    double u0_;
    ode::OdeSpec spec_;
    std::vector<double> knots_;
    std::vector<std::array<double, 2>> states_;
};

inline ScalarFn F_from_w(std::function<std::array<double, 3>(double)> wjet, int k, std::string label) {
    ScalarFn F;
    F.label = std::move(label);
    F.eval = [wjet, k](double u) {
        const auto w = wjet(u);
        return assemble_F(u, k, w[0], w[1], w[2]).F;
    };
    F.deriv1 = [wjet, k](double u) {
        const auto w = wjet(u);
        return assemble_F(u, k, w[0], w[1], w[2]).F1;
    };
    F.deriv2 = [wjet, k](double u) {
        const auto w = wjet(u);
        return assemble_F(u, k, w[0], w[1], w[2]).F2;
    };
    F.log_abs = [wjet, k](double u) {
        const auto w = wjet(u);
        return assemble_F(u, k, w[0], w[1], w[2]).logF;
    };
    return F;
}

} // namespace detail

/// Builds F = (c1 z1 + c2 z2)² u^{(k-1)/2} e^{u²/2} for a nonpositive φ with
/// leading expansion φ(u) = Σ_j b_j u^{j-2} near 0 (`series` supplies the b_j).
inline ConstructionSolution construct_spherical(const ScalarFn& phi, const PhiSeries& series, int k, double c1, double c2,
                                                std::vector<double> u_grid, const ode::OdeSpec& spec = {}) {
    require_dimension(k);
    if (c1 == 0.0 && c2 == 0.0) throw DomainError("construct_spherical: (c1, c2) must not both vanish");
    std::sort(u_grid.begin(), u_grid.end());
    for (double u : u_grid) {
        if (!(u > 0.0)) throw DomainError("construct_spherical: grid points must be positive");
        if (phi(u) > 0.0) {
            std::ostringstream msg;
            msg << "construct_spherical: phi must be nonpositive, phi(" << u << ") = " << phi(u);
            throw ConstructionError(msg.str());
        }
    }
    const double b0 = series.b.empty() ? 0.0 : series.b[0];
    const auto [r1, r2] = detail::indicial_roots(b0, k);
    constexpr int kTerms = 6;
    constexpr double u0 = 1e-3;
    auto fr1 = detail::frobenius_coefficients(series.b, r1, k, kTerms);
    auto fr2 = detail::frobenius_coefficients(series.b, r2, k, kTerms);
    auto s1 = std::make_shared<detail::RootSolution>(fr1, phi, b0, k, u0, u_grid, spec);
    auto s2 = std::make_shared<detail::RootSolution>(fr2, phi, b0, k, u0, u_grid, spec);

    ConstructionSolution sol;
    sol.k = k;
    sol.phi = phi;
    sol.c1 = c1;
    sol.c2 = c2;
    sol.rho1 = r1;
    sol.rho2 = r2;
    sol.grid = u_grid;
    auto make_z = [](std::shared_ptr<detail::RootSolution> s, std::string label) {
        ScalarFn z;
        z.label = std::move(label);
        z.eval = [s](double u) { return s->z(u)[0]; };
        z.deriv1 = [s](double u) { return s->z(u)[1]; };
        z.deriv2 = [s](double u) { return s->z(u)[2]; };
        return z;
    };
    sol.z1 = make_z(s1, "z1");
    sol.z2 = make_z(s2, "z2");
    auto wjet = [s1, s2, c1, c2](double u) {
        const auto a = s1->z(u);
        const auto b = s2->z(u);
        return std::array<double, 3>{c1 * a[0] + c2 * b[0], c1 * a[1] + c2 * b[1], c1 * a[2] + c2 * b[2]};
    };
    sol.F = detail::F_from_w(wjet, k, "constructed F");

    // Residual of z'' + (k-1)/u z' - ½ φ z with z'' by differencing z'.
    for (const auto& s : {s1, s2}) {
        for (double u : u_grid) {
            const double h = 1e-4 * u;
            const double d2 = (s->z(u + h)[1] - s->z(u - h)[1]) / (2 * h);
            const auto zz = s->z(u);
            const double res = d2 + (k - 1.0) / u * zz[1] - 0.5 * phi(u) * zz[0];
            const double scale = std::fabs(d2) + std::fabs((k - 1.0) / u * zz[1]) + std::fabs(0.5 * phi(u) * zz[0]);
            if (scale > 0.0) sol.max_residual = std::max(sol.max_residual, std::fabs(res) / scale);
        }
    }
    return sol;
}

inline ConstructionSolution construct_spherical(const PhiSeries& series, int k, double c1, double c2,
                                                std::vector<double> u_grid, const ode::OdeSpec& spec = {}) {
    return construct_spherical(series.to_fn(), series, k, c1, c2, std::move(u_grid), spec);
}

/// Closed-form F = (A1 u^{ρ1} + A2 u^{ρ2})² u^{(k-1)/2} e^{u²/2} for φ = -2b/u².
inline ScalarFn bessel_example_F(double b, int k, double A1, double A2) {
    require_dimension(k);
    if (b < 0.0) throw DomainError("bessel_example_F: b must be nonnegative");
    const auto [r1, r2] = detail::indicial_roots(-2.0 * b, k);
    auto wjet = [=](double u) {
        const double p1 = A1 * std::pow(u, r1);
        const double p2 = A2 * std::pow(u, r2);
        return std::array<double, 3>{p1 + p2, (r1 * p1 + r2 * p2) / u, (r1 * (r1 - 1) * p1 + r2 * (r2 - 1) * p2) / (u * u)};
    };
    ScalarFn F = detail::F_from_w(wjet, k, "bessel example F");
    return F;
}

// ---------------------------------------------------------------------------
// Mixture construction G(s) = (∫_b^s exp(-½ ∫_a^t φ) dt)²

namespace detail {

// Φ(t) = ∫_a^t φ, with cumulative values cached on a log-spaced knot lattice.
class PhiIntegral {
public:
    PhiIntegral(ScalarFn phi, double a, QuadSpec q) : phi_(std::move(phi)), a_(a), q_(q) {}

    double operator()(double t) const {
        const int j = static_cast<int>(std::round(kPerOctave * std::log2(t / a_)));
        const double knot = a_ * std::exp2(static_cast<double>(j) / kPerOctave);
        return knot_value(j) + piece(knot, t);
    }

private:
    static constexpr int kPerOctave = 4;

    double piece(double lo, double hi) const {
        if (lo == hi) return 0.0;
        if (lo < hi) return bmx::integrate(phi_, lo, hi, q_);
        return -bmx::integrate(phi_, hi, lo, q_);
    }

    double knot_value(int j) const {
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = cache_.find(j);
            if (it != cache_.end()) return it->second;
        }
        double v = 0.0;
        if (j != 0) {
            const int step = j > 0 ? 1 : -1;
            const int prev = j - step;
            const double lo = a_ * std::exp2(static_cast<double>(prev) / kPerOctave);
            const double hi = a_ * std::exp2(static_cast<double>(j) / kPerOctave);
            v = knot_value(prev) + piece(lo, hi);
        }
        std::lock_guard<std::mutex> lock(mu_);
        cache_.emplace(j, v);
        return v;
    }

    ScalarFn phi_;
    double a_;
    QuadSpec q_;
    mutable std::mutex mu_;
    mutable std::map<int, double> cache_;
};

} // namespace detail

/// G with G' = 2JE and G'' = 2E² + 2J E', E = exp(-½Φ), E' = -½φE, J = ∫_b^s E.
/// b = +inf gives J(s) = -∫_s^∞ E. φ ≤ k/s is checked at probe points.
inline ScalarFn construct_G_mixture(const ScalarFn& phi, double a, double b, int k, const QuadSpec& q = {}) {
    require_dimension(k);
    if (!(a > 0.0)) throw DomainError("construct_G_mixture: a must be positive");
    if (!(b >= 0.0)) throw DomainError("construct_G_mixture: b must be nonnegative or +inf");
    for (int i = 0; i < 64; ++i) {
        const double s = std::pow(10.0, -4.0 + 7.0 * i / 63.0);
        const double v = phi(s);
        if (v > k / s * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "construct_G_mixture: phi(s) > k/s at witness s = " << s << " (phi = " << v << ", k/s = " << k / s << ")";
            throw ConstructionError(msg.str());
        }
    }
    auto Phi = std::make_shared<detail::PhiIntegral>(phi, a, q);
    const QuadSpec qr = relative_only(q);
    auto E = [Phi](double t) { return std::exp(-0.5 * (*Phi)(t)); };
    auto J = [E, b, qr](double s) {
        if (std::isinf(b)) return -bmx::integrate(E, s, std::numeric_limits<double>::infinity(), qr);
        if (s == b) return 0.0;
        if (s > b) return bmx::integrate(E, b, s, qr);
        return -bmx::integrate(E, s, b, qr);
    };
    ScalarFn G;
    G.label = "constructed G";
    G.eval = [J](double s) {
        const double j = J(s);
        return j * j;
    };
    G.deriv1 = [J, E](double s) { return 2.0 * J(s) * E(s); };
    G.deriv2 = [J, E, phi](double s) {
        const double e = E(s);
        return 2.0 * e * e - J(s) * phi(s) * e;
    };
    return G;
}

} // namespace bmx::priors
