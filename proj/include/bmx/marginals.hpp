#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "bmx/error.hpp"
#include "bmx/priors.hpp"
#include "bmx/quadrature.hpp"
#include "bmx/scalar_fn.hpp"
#include "bmx/specfun.hpp"
#include "bmx/transforms.hpp"

namespace bmx::marginals {

enum class Route { RadialQuadrature, MixtureQuadrature, StrawdermanClosedForm, Flat, Tabulated };

inline const char* to_string(Route r) {
    switch (r) {
    case Route::RadialQuadrature: return "radial_quadrature";
    case Route::MixtureQuadrature: return "mixture_quadrature";
    case Route::StrawdermanClosedForm: return "strawderman_closed_form";
    case Route::Flat: return "flat";
    default: return "tabulated";
    }
}

/// ℓ, ℓ', ℓ'' at one point.
struct Jet {
    double l0 = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
};

/// A quantity known as value / scale where scale bounds the magnitude of its terms.
struct StableTerms {
    double value = 0.0;
    double scale = 0.0;
};

/// Spherical marginal m(x) = ℓ(‖x‖).
struct MarginalProfile {
    int k = 3;
    ScalarFn ell;
    Route route = Route::RadialQuadrature;
    std::string label;
    std::function<Jet(double)> jet_fn;
    /// Optional cancellation-free form of ℓ'(k-1)/u + ℓ'' - ½ℓ'²/ℓ.
    std::function<StableTerms(double)> sqrt_superharmonic_terms;

    Jet jet(double u) const {
        if (jet_fn) return jet_fn(u);
        return {ell(u), ell.d1(u), ell.d2(u)};
    }

    /// Cached copy: exact at the nodes, cubic Hermite in log ℓ between them,
    /// fresh evaluation outside [grid.front(), grid.back()].
    MarginalProfile tabulate(std::vector<double> grid) const;
};

namespace detail {

inline ScalarFn ell_from_jet(std::function<Jet(double)> jet, std::function<double(double)> value, std::string label) {
    ScalarFn f;
    f.label = std::move(label);
    f.eval = std::move(value);
    f.deriv1 = [jet](double u) { return jet(u).l1; };
    f.deriv2 = [jet](double u) { return jet(u).l2; };
    f.log_abs = [e = f.eval](double u) { return std::log(e(u)); };
    return f;
}

struct LogNode {
    double u, g, g1, g2;
};

inline LogNode log_node(double u, const Jet& j) {
    const double L1 = j.l1 / j.l0;
    return {u, std::log(j.l0), L1, j.l2 / j.l0 - L1 * L1};
}

inline double hermite(double t, double h, double p0, double m0, double p1, double m1) {
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * h * m0 + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * h * m1;
}

inline double hermite_d(double t, double h, double p0, double m0, double p1, double m1) {
    const double t2 = t * t;
    return ((6 * t2 - 6 * t) * p0 + (3 * t2 - 4 * t + 1) * h * m0 + (-6 * t2 + 6 * t) * p1 + (3 * t2 - 2 * t) * h * m1) / h;
}

} // namespace detail

inline MarginalProfile MarginalProfile::tabulate(std::vector<double> grid) const {
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    if (grid.size() < 2) throw DomainError("tabulate: need at least two distinct nodes");
    auto nodes = std::make_shared<std::vector<detail::LogNode>>();
    auto jets = std::make_shared<std::vector<Jet>>();
    for (double u : grid) {
        const Jet j = jet(u);
        if (!(j.l0 > 0.0)) throw EvaluationError("tabulate: marginal not positive at a node", j.l0, 0);
        jets->push_back(j);
        nodes->push_back(detail::log_node(u, j));
    }
    auto base = std::make_shared<MarginalProfile>(*this);
    auto jet_at = [nodes, jets, base](double u) -> Jet {
        const auto& nd = *nodes;
        if (u < nd.front().u || u > nd.back().u) return base->jet(u);
        auto it = std::lower_bound(nd.begin(), nd.end(), u, [](const detail::LogNode& n, double x) { return n.u < x; });
        const std::size_t i = static_cast<std::size_t>(it - nd.begin());
        if (it != nd.end() && it->u == u) return (*jets)[i];
        const auto& a = nd[i - 1];
        const auto& b = nd[i];
        const double h = b.u - a.u;
        const double t = (u - a.u) / h;
        const double g = detail::hermite(t, h, a.g, a.g1, b.g, b.g1);
        const double g1 = detail::hermite(t, h, a.g1, a.g2, b.g1, b.g2);
        const double g2 = detail::hermite_d(t, h, a.g1, a.g2, b.g1, b.g2);
        const double l0 = std::exp(g);
        return {l0, l0 * g1, l0 * (g2 + g1 * g1)};
    };
    MarginalProfile out;
    out.k = k;
    out.route = Route::Tabulated;
    out.label = label + " (tabulated)";
    out.jet_fn = jet_at;
    out.ell = detail::ell_from_jet(jet_at, [jet_at](double u) { return jet_at(u).l0; }, out.label);
    out.sqrt_superharmonic_terms = sqrt_superharmonic_terms;
    return out;
}

/// ℓ(u) = C ∫ e^{-(u-r)²/2} B_ν(ur) λ(r) dr with B_ν(x) = e^{-x} x^{-ν} I_ν(x),
/// C = Γ(k/2)/(2π^{k/2}), ν = (k-2)/2; derivatives differentiate the kernel under the integral.
inline MarginalProfile marginal_radial(const priors::RadialPrior& prior, const QuadSpec& q = {}) {
    priors::require_dimension(prior.k);
    const int k = prior.k;
    const double nu = 0.5 * (k - 2);
    const double C = std::exp(std::lgamma(0.5 * k) - std::numbers::ln2 - 0.5 * k * std::log(std::numbers::pi));
    const ScalarFn lam = prior.lambda;
    auto moments = [=](double u) {
        auto integrand = [&](double r) {
            const double la = lam.log_abs_value(r);
            if (la == -std::numeric_limits<double>::infinity()) return Vec<3>{0.0, 0.0, 0.0};
            const double w = std::exp(la - 0.5 * (u - r) * (u - r));
            const double x = u * r;
            const double r2 = r * r;
            return Vec<3>{w * specfun::bessel_i_reduced(nu, x), w * r2 * specfun::bessel_i_reduced(nu + 1, x),
                          w * r2 * r2 * specfun::bessel_i_reduced(nu + 2, x)};
        };
        return integrate_vec<3>(integrand, 0.0, std::numeric_limits<double>::infinity(), relative_only(q));
    };
    auto jet = [=](double u) {
        const Vec<3> A = moments(u);
        const double u2 = u * u;
        return Jet{C * A[0], C * u * (A[1] - A[0]), C * ((u2 - 1) * A[0] + (1 - 2 * u2) * A[1] + u2 * A[2])};
    };
    auto value = [=](double u) {
        auto integrand = [&](double r) {
            const double la = lam.log_abs_value(r);
            if (la == -std::numeric_limits<double>::infinity()) return 0.0;
            return std::exp(la - 0.5 * (u - r) * (u - r)) * specfun::bessel_i_reduced(nu, u * r);
        };
        return C * bmx::integrate(integrand, 0.0, std::numeric_limits<double>::infinity(), relative_only(q));
    };
    MarginalProfile p;
    p.k = k;
    p.route = Route::RadialQuadrature;
    p.label = "radial marginal (" + prior.family.name + ")";
    p.jet_fn = jet;
    p.ell = detail::ell_from_jet(jet, value, p.label);
    return p;
}

/// G(s) = ∫_0^1 f(t) e^{-st} dt for the unit kernel of a mixing density, G' = -M1, G'' = M2.
inline ScalarFn mixture_G(const priors::MixingDensity& mix, const QuadSpec& q = {}) {
    const ScalarFn f = mix.f_unit;
    ScalarFn G;
    G.label = "laplace G (" + mix.family.name + ")";
    G.eval = [f, q](double s) { return transforms::laplace_unit(f, s, q); };
    G.deriv1 = [f, q](double s) { return -transforms::laplace_unit_moments(f, s, q)[1]; };
    G.deriv2 = [f, q](double s) { return transforms::laplace_unit_moments(f, s, q)[2]; };
    return G;
}

namespace detail {

inline std::function<StableTerms(double)> unit_kernel_hook(const transforms::UnitKernel& uk, int k, double c,
                                                           const QuadSpec& q) {
    return [uk, k, c, q](double u) {
        const double s = 0.5 * u * u;
        if (s == 0.0) return StableTerms{std::numeric_limits<double>::quiet_NaN(), 0.0};
        const auto m = transforms::unit_kernel_sphi_margin(uk, s, k, q);
        return StableTerms{c * m.m1 * m.value, c * m.m1 * m.scale};
    };
}

} // namespace detail

/// ℓ(u) = (2π)^{-k/2} G(u²/2): the mixture integral after t = 1/(1+v).
inline MarginalProfile marginal_mixture(const priors::MixingDensity& mix, const QuadSpec& q = {}) {
    priors::require_dimension(mix.k);
    const int k = mix.k;
    const double c = std::pow(2 * std::numbers::pi, -0.5 * k);
    const ScalarFn f = mix.f_unit;
    auto jet = [=](double u) {
        const auto M = transforms::laplace_unit_moments(f, 0.5 * u * u, q);
        return Jet{c * M[0], -c * u * M[1], c * (-M[1] + u * u * M[2])};
    };
    auto value = [=](double u) { return c * transforms::laplace_unit(f, 0.5 * u * u, q); };
    MarginalProfile p;
    p.k = k;
    p.route = Route::MixtureQuadrature;
    p.label = "mixture marginal (" + mix.family.name + ")";
    p.jet_fn = jet;
    p.ell = detail::ell_from_jet(jet, value, p.label);
    if (mix.kernel) p.sqrt_superharmonic_terms = detail::unit_kernel_hook(*mix.kernel, k, c, q);
    return p;
}

/// ℓ(u) = (1-a)/((2π)^{k/2} c) ₁F₁(c; c+1; -u²/2), c = k/2 - a + 1.
inline MarginalProfile marginal_strawderman(double a, int k) {
    priors::require_dimension(k);
    if (!(a >= 0.0 && a < 1.0)) throw DomainError("marginal_strawderman: a must lie in [0, 1)");
    const double c = 0.5 * k - a + 1;
    const double pref = (1 - a) * std::pow(2 * std::numbers::pi, -0.5 * k);
    // M_j = (1-a) ₁F₁(c+j; c+j+1; -s)/(c+j)
    auto M = [=](int j, double s) { return (1 - a) * specfun::kummer_1f1(c + j, c + j + 1, -s) / (c + j); };
    auto jet = [=](double u) {
        const double s = 0.5 * u * u;
        const double m0 = M(0, s), m1 = M(1, s), m2 = M(2, s);
        const double w = pref / (1 - a);
        return Jet{w * m0, -w * u * m1, w * (-m1 + u * u * m2)};
    };
    auto value = [=](double u) { return pref / c * specfun::kummer_1f1(c, c + 1, -0.5 * u * u); };
    MarginalProfile p;
    p.k = k;
    p.route = Route::StrawdermanClosedForm;
    p.label = "strawderman closed form";
    p.jet_fn = jet;
    p.ell = detail::ell_from_jet(jet, value, p.label);
    // Power kernel: s φ - k = (3 + p0 - k) + b/M0 - 2b/M1 exactly, b = (1-a) e^{-s}.
    const double p0 = 0.5 * k - a;
    p.sqrt_superharmonic_terms = [=](double u) {
        const double s = 0.5 * u * u;
        if (s == 0.0) return StableTerms{std::numeric_limits<double>::quiet_NaN(), 0.0};
        const double m0 = M(0, s), m1 = M(1, s);
        const double b = (1 - a) * std::exp(-s);
        const double t0 = 3 + p0 - k, t1 = b / m0, t2 = 2 * b / m1;
        const double w = pref / (1 - a) * m1;
        return StableTerms{w * (t0 + t1 - t2), w * std::max({std::fabs(t0), t1, t2})};
    };
    return p;
}

/// ℓ = w² from a jet (w, w', w''), as produced by the spherical construction.
inline MarginalProfile marginal_from_w(std::function<std::array<double, 3>(double)> wjet, int k, std::string label) {
    priors::require_dimension(k);
    auto jet = [wjet](double u) {
        const auto w = wjet(u);
        return Jet{w[0] * w[0], 2 * w[0] * w[1], 2 * (w[1] * w[1] + w[0] * w[2])};
    };
    MarginalProfile p;
    p.k = k;
    p.route = Route::RadialQuadrature;
    p.label = std::move(label);
    p.jet_fn = jet;
    p.ell = detail::ell_from_jet(jet, [jet](double u) { return jet(u).l0; }, p.label);
    // Δ√ℓ form: 2w (w'' + (k-1)w'/u), the w'² terms cancel exactly.
    p.sqrt_superharmonic_terms = [wjet, k](double u) {
        const auto w = wjet(u);
        const double a = 2 * w[0] * w[2], b = 2 * w[0] * w[1] * (k - 1) / u;
        return StableTerms{a + b, std::max(std::fabs(a), std::fabs(b))};
    };
    return p;
}

/// ℓ(u) = (2π)^{-k/2} G(u²/2) for a Laplace-type G with derivatives.
inline MarginalProfile marginal_from_G(const ScalarFn& G, int k, std::string label) {
    priors::require_dimension(k);
    const double c = std::pow(2 * std::numbers::pi, -0.5 * k);
    auto jet = [G, c](double u) {
        const double s = 0.5 * u * u;
        const double g1 = G.d1(s);
        return Jet{c * G(s), c * u * g1, c * (g1 + u * u * G.d2(s))};
    };
    MarginalProfile p;
    p.k = k;
    p.route = Route::MixtureQuadrature;
    p.label = std::move(label);
    p.jet_fn = jet;
    p.ell = detail::ell_from_jet(jet, [G, c](double u) { return c * G(0.5 * u * u); }, p.label);
    return p;
}

/// ℓ ≡ 1: the improper flat prior, whose Bayes estimator is δ(x) = x.
inline MarginalProfile flat_profile(int k) {
    priors::require_dimension(k);
    MarginalProfile p;
    p.k = k;
    p.route = Route::Flat;
    p.label = "flat";
    p.jet_fn = [](double) { return Jet{1.0, 0.0, 0.0}; };
    p.ell = constant_fn(1.0, "flat");
    p.sqrt_superharmonic_terms = [](double) { return StableTerms{0.0, 0.0}; };
    return p;
}

} // namespace bmx::marginals
