#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

#include "bmx/error.hpp"
#include "bmx/quadrature.hpp"
#include "bmx/report.hpp"
#include "bmx/scalar_fn.hpp"
#include "bmx/specfun.hpp"

namespace bmx::transforms {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// ∫_lo^hi f, with hi = +inf allowed.
inline double integrate(const ScalarFn& f, double lo, double hi, const QuadSpec& q = {}) {
    return bmx::integrate(f, lo, hi, q);
}

namespace detail {

// sign(f(x)) * exp(log|f(x)| + extra), robust to under/overflow of f itself.
inline double signed_exp(const ScalarFn& f, double x, double extra) {
    if (!f.log_abs) {
        const double v = f.eval(x);
        if (v == 0.0) return 0.0;
        return (v < 0.0 ? -1.0 : 1.0) * std::exp(std::log(std::fabs(v)) + extra);
    }
    const double la = (*f.log_abs)(x);
    if (la == -kInf) return 0.0;
    const double v = f.eval(x);
    return (v < 0.0 ? -1.0 : 1.0) * std::exp(la + extra);
}

// Breakpoints on [0, 1] that resolve the e^{-st} boundary layer.
inline std::vector<double> unit_breaks(double s) {
    std::vector<double> b{0.0};
    if (s > 4.0) {
        for (double m : {0.25, 1.0, 4.0, 16.0, 64.0}) {
            const double t = m / s;
            if (t < 1.0) b.push_back(t);
        }
    }
    b.push_back(1.0);
    return b;
}

} // namespace detail

/// ℐ_ν[f](y) = ∫_0^∞ f(x) √(xy) I_ν(xy) dx, evaluated in log space.
inline double i_transform(const ScalarFn& f, double nu, double y, const QuadSpec& q = {}) {
    if (!(y > 0.0)) throw DomainError("i_transform: y must be positive");
    if (!(nu > -1.0)) throw DomainError("i_transform: nu must exceed -1");
    auto integrand = [&](double x) {
        const double xy = x * y;
        return detail::signed_exp(f, x, 0.5 * std::log(xy) + specfun::log_bessel_i(nu, xy));
    };
    return bmx::integrate(integrand, std::max(0.0, f.support.lo), f.support.hi, relative_only(q));
}

/// 𝒦_ν[g](y) = ∫_0^∞ g(x) √(xy) K_ν(xy) dx.
inline double k_transform(const ScalarFn& g, double nu, double y, const QuadSpec& q = {}) {
    if (!(y > 0.0)) throw DomainError("k_transform: y must be positive");
    specfun::EvalPolicy scaled;
    scaled.scaled = true;
    auto integrand = [&](double x) {
        const double xy = x * y;
        const double k = specfun::bessel_k(nu, xy, scaled);
        return detail::signed_exp(g, x, 0.5 * std::log(xy) + std::log(k) - xy);
    };
    return bmx::integrate(integrand, std::max(0.0, g.support.lo), g.support.hi, relative_only(q));
}

/// ∫_0^1 f(t) e^{-st} dt.
inline double laplace_unit(const ScalarFn& f, double s, const QuadSpec& q = {}) {
    if (!(s >= 0.0)) throw DomainError("laplace_unit: s must be nonnegative");
    const auto b = detail::unit_breaks(s);
    return integrate_breakpoints<1>([&](double t) { return Vec<1>{f.eval(t) * std::exp(-s * t)}; }, b,
                                    relative_only(q))[0];
}

/// Moments M_j = ∫_0^1 t^j f(t) e^{-st} dt for j = 0, 1, 2, so that G = M0, G' = -M1, G'' = M2.
inline Vec<3> laplace_unit_moments(const ScalarFn& f, double s, const QuadSpec& q = {}) {
    if (!(s >= 0.0)) throw DomainError("laplace_unit_moments: s must be nonnegative");
    const auto b = detail::unit_breaks(s);
    auto integrand = [&](double t) {
        const double v = f.eval(t) * std::exp(-s * t);
        return Vec<3>{v, t * v, t * t * v};
    };
    return integrate_breakpoints<3>(integrand, b, relative_only(q));
}

/// Laplace kernel on (0, 1) with its logarithmic derivative split as
/// t f'(t)/f(t) = p0 + r(t), r bounded near t = 0.
///
/// `r` empty means r ≡ 0 (a pure power kernel). `f_at_1` is the boundary value
/// lim_{t→1} f(t), needed for integration by parts.
struct UnitKernel {
    ScalarFn f;
    double p0 = 0.0;
    std::function<double(double)> r;
    double f_at_1 = 0.0;
    std::string label;
};

/// Moments of a UnitKernel at s: {M0, M1, M2, R0, R1}, R_j = ∫ t^j r f e^{-st}.
inline Vec<5> unit_kernel_moments(const UnitKernel& uk, double s, const QuadSpec& q = {}) {
    if (!(s >= 0.0)) throw DomainError("unit_kernel_moments: s must be nonnegative");
    const auto b = detail::unit_breaks(s);
    auto integrand = [&](double t) {
        const double v = uk.f.eval(t) * std::exp(-s * t);
        const double rv = uk.r ? uk.r(t) * v : 0.0;
        return Vec<5>{v, t * v, t * t * v, rv, t * rv};
    };
    QuadSpec qq = relative_only(q);
    if (!uk.r) {
        // R components are identically zero; keep them out of the error control.
        auto pure = [&](double t) {
            const double v = uk.f.eval(t) * std::exp(-s * t);
            return Vec<3>{v, t * v, t * t * v};
        };
        const Vec<3> m = integrate_breakpoints<3>(pure, b, qq);
        return {m[0], m[1], m[2], 0.0, 0.0};
    }
    return integrate_breakpoints<5>(integrand, b, qq);
}

/// s φ(s) - k for φ = G'/G - 2G''/G' via integration by parts, together with
/// the magnitude of its largest term. Exact cancellations (r ≡ 0 kernels) stay exact.
struct SphiMargin {
    double value = 0.0;
    double scale = 0.0;
    double m0 = 0.0;
    double m1 = 0.0;
};

inline SphiMargin unit_kernel_sphi_margin(const UnitKernel& uk, double s, int k, const QuadSpec& q = {}) {
    if (!(s > 0.0)) throw DomainError("unit_kernel_sphi_margin: s must be positive");
    const Vec<5> m = unit_kernel_moments(uk, s, q);
    if (!(m[0] > 0.0) || !(m[1] > 0.0)) throw EvaluationError("unit_kernel_sphi_margin: nonpositive moment", m[0], 0);
    const double b = uk.f_at_1 * std::exp(-s);
    const double e0 = m[3] / m[0];
    const double e1 = m[4] / m[1];
    const double t_const = 3.0 + uk.p0 - k;
    const double t_b0 = b / m[0];
    const double t_b1 = 2.0 * b / m[1];
    SphiMargin out;
    out.value = t_const - e0 + 2.0 * e1 + t_b0 - t_b1;
    out.scale = std::max({std::fabs(t_const), std::fabs(e0), 2.0 * std::fabs(e1), std::fabs(t_b0), std::fabs(t_b1)});
    out.m0 = m[0];
    out.m1 = m[1];
    return out;
}

/// Forward check that ℐ_ν[f] ∝ F_target on the grid, f(r) = r^{(1-k)/2} e^{-r²/2} λ(r), k = 2ν + 2.
///
/// Margins are |ratio/median - 1| - rel_tolerance, so HOLDS means the ratio is
/// constant within rel_tolerance everywhere. A divergent transform or a zero
/// target marks the point as failing.
inline ConditionReport i_transform_consistency(const ScalarFn& lambda_candidate, const ScalarFn& F_target, double nu,
                                               const std::vector<double>& grid, const QuadSpec& q = {},
                                               double rel_tolerance = 1e-5) {
    if (grid.empty()) throw DomainError("i_transform_consistency: empty grid");
    const double k = 2.0 * nu + 2.0;
    ScalarFn f;
    f.support = lambda_candidate.support;
    f.label = "induced f";
    f.eval = [lam = lambda_candidate, k](double r) {
        return std::pow(r, 0.5 * (1.0 - k)) * std::exp(-0.5 * r * r) * lam.eval(r);
    };
    f.log_abs = [lam = lambda_candidate, k](double r) {
        return 0.5 * (1.0 - k) * std::log(r) - 0.5 * r * r + lam.log_abs_value(r);
    };

    ConditionReport rep;
    rep.condition_id = "i_transform_consistency";
    rep.numerical_band = 0.0;
    std::vector<double> ratios(grid.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> problems(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        try {
            const double t = i_transform(f, nu, grid[i], q);
            const double target = F_target.eval(grid[i]);
            if (target == 0.0)
                problems[i] = "zero target";
            else
                ratios[i] = t / target;
        } catch (const DivergenceError& e) {
            problems[i] = std::string("divergent transform: ") + e.what();
        } catch (const QuadratureError& e) {
            problems[i] = std::string("quadrature failure: ") + e.what();
        }
    }
    std::vector<double> finite;
    for (double r : ratios)
        if (std::isfinite(r)) finite.push_back(r);
    double ref = 0.0;
    if (!finite.empty()) {
        std::nth_element(finite.begin(), finite.begin() + finite.size() / 2, finite.end());
        ref = finite[finite.size() / 2];
    }
    if (!finite.empty() && ref == 0.0) rep.annotations.push_back("degenerate: transform vanishes on the grid");
    double max_dev = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!problems[i].empty() || !std::isfinite(ratios[i]) || ref == 0.0) {
            rep.add_point(grid[i], 1.0, 1.0);
            rep.values.push_back(ratios[i]);
            if (!problems[i].empty()) rep.annotations.push_back("u=" + std::to_string(grid[i]) + ": " + problems[i]);
            max_dev = kInf;
            continue;
        }
        const double dev = std::fabs(ratios[i] / ref - 1.0);
        max_dev = std::max(max_dev, dev);
        rep.add_point(grid[i], dev - rel_tolerance, 1.0);
        rep.values.push_back(ratios[i]);
    }
    rep.finalize();
    std::ostringstream msg;
    msg << "median ratio " << ref << ", max relative deviation " << max_dev;
    rep.annotations.push_back(msg.str());
    return rep;
}

} // namespace bmx::transforms
