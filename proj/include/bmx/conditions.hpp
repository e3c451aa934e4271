#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bmx/error.hpp"
#include "bmx/marginals.hpp"
#include "bmx/parallel.hpp"
#include "bmx/priors.hpp"
#include "bmx/quadrature.hpp"
#include "bmx/report.hpp"
#include "bmx/scalar_fn.hpp"
#include "bmx/specfun.hpp"
#include "bmx/transforms.hpp"

namespace bmx::conditions {

inline constexpr double kDefaultBand = 1e-7;

inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0) || !(hi > lo) || n < 2) throw DomainError("log_grid: need 0 < lo < hi and n >= 2");
    std::vector<double> g(n);
    const double a = std::log(lo), b = std::log(hi);
    for (std::size_t i = 0; i < n; ++i) g[i] = std::exp(a + (b - a) * static_cast<double>(i) / (n - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

inline std::vector<double> lin_grid(double lo, double hi, std::size_t n) {
    if (!(hi > lo) || n < 2) throw DomainError("lin_grid: need lo < hi and n >= 2");
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    return g;
}

/// 200 log-spaced points on u in [1e-2, 30].
inline std::vector<double> default_u_grid() { return log_grid(1e-2, 30.0, 200); }

/// The default u grid mapped through s = u²/2.
inline std::vector<double> default_s_grid() {
    auto g = default_u_grid();
    for (double& x : g) x = 0.5 * x * x;
    return g;
}

namespace detail {

struct PointEval {
    double raw = 0.0;
    double scale = 1.0;
    double value = std::numeric_limits<double>::quiet_NaN();
    /// Set when the margin is already normalized (raw may then be infinite).
    std::optional<double> normalized;
};

inline double max_abs(std::initializer_list<double> xs) {
    double m = 0.0;
    for (double x : xs) m = std::max(m, std::fabs(x));
    return m;
}

/// Evaluates `point` at every grid node (possibly concurrently) and assembles the
/// report in grid order. Evaluation failures mark the point; DomainError propagates.
template <class Fn>
ConditionReport run_grid(std::string id, const std::vector<double>& grid, double band, Fn&& point) {
    if (grid.empty()) throw DomainError(id + ": empty grid");
    std::vector<PointEval> res(grid.size());
    std::vector<std::string> why(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) {
        try {
            res[i] = point(grid[i]);
            const double m = res[i].normalized ? *res[i].normalized : res[i].raw;
            if (std::isnan(m)) why[i] = "margin is NaN";
        } catch (const EvaluationError& e) {
            why[i] = e.what();
        } catch (const QuadratureError& e) {
            why[i] = e.what();
        }
    });
    ConditionReport rep;
    rep.condition_id = std::move(id);
    rep.numerical_band = band;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!why[i].empty()) {
            rep.add_failed_point(grid[i], why[i]);
            rep.values.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        if (res[i].normalized)
            rep.add_normalized_point(grid[i], *res[i].normalized, res[i].raw, res[i].scale);
        else
            rep.add_point(grid[i], res[i].raw, res[i].scale);
        rep.values.push_back(res[i].value);
    }
    rep.finalize();
    rep.annotations.push_back("grid verdict over " + std::to_string(grid.size()) + " points; HOLDS is evidence, not proof");
    return rep;
}

/// Generic Eq.-form of ℓ'(k-1)/u + ℓ'' - ½ℓ'²/ℓ from the jet.
inline PointEval sqrt_superharmonic_generic(const marginals::MarginalProfile& p, double u) {
    if (!(u > 0.0)) throw DomainError("check_sqrt_superharmonic: grid points must be positive");
    const auto j = p.jet(u);
    if (!(j.l0 > 0.0)) throw EvaluationError("marginal not positive", j.l0, 0);
    const double t1 = j.l1 * (p.k - 1) / u;
    const double t2 = j.l2;
    const double t3 = -0.5 * j.l1 * j.l1 / j.l0;
    return {t1 + t2 + t3, max_abs({t1, t2, t3}), t1 + t2 + t3, {}};
}

} // namespace detail

/// Grid check of ℓ'(u)(k-1)/u + ℓ''(u) - ½ℓ'(u)²/ℓ(u) ≤ 0, i.e. Δ√m ≤ 0.
///
/// Uses the profile's cancellation-free form when it has one, unless `force_generic`.
inline ConditionReport check_sqrt_superharmonic(const marginals::MarginalProfile& p, const std::vector<double>& grid,
                                                bool force_generic = false, double band = 1e-8) {
    const bool hook = p.sqrt_superharmonic_terms && !force_generic;
    auto rep = detail::run_grid("sqrt_superharmonic", grid, band, [&](double u) {
        if (hook && u > 0.0) {
            const auto t = p.sqrt_superharmonic_terms(u);
            if (std::isfinite(t.value)) return detail::PointEval{t.value, t.scale, t.value, {}};
        }
        return detail::sqrt_superharmonic_generic(p, u);
    });
    rep.annotations.push_back(std::string("route: ") + (hook ? "stable decomposition" : "generic jet") + ", profile " +
                              p.label);
    return rep;
}

/// Grid check of the strict inequality
/// F''/F - ½(F'/F)² + (F'/F)[(k-1)/(2u) - u] + (k-1)(7-3k)/(8u²) + u²/2 - (k+1)/2 < 0.
inline ConditionReport check_theorem31(const ScalarFn& F, int k, const std::vector<double>& grid,
                                       double band = kDefaultBand) {
    priors::require_dimension(k);
    return detail::run_grid("theorem31", grid, band, [&](double u) {
        if (!(u > 0.0)) throw DomainError("check_theorem31: grid points must be positive");
        const double f = F(u);
        if (!(f > 0.0)) throw DomainError("check_theorem31: F must be positive on the grid (F(" + std::to_string(u) +
                                          ") = " + std::to_string(f) + ")");
        const double L1 = F.d1(u) / f;
        const double L2 = F.d2(u) / f;
        const double t[] = {L2,
                            -0.5 * L1 * L1,
                            L1 * ((k - 1) / (2.0 * u) - u),
                            (k - 1.0) * (7.0 - 3.0 * k) / (8.0 * u * u),
                            0.5 * u * u,
                            -(k + 1) / 2.0};
        double sum = 0.0, scale = 0.0;
        for (double x : t) {
            sum += x;
            scale = std::max(scale, std::fabs(x));
        }
        return detail::PointEval{sum, scale, sum, {}};
    });
}

/// Grid check of G'/G - 2G''/G' ≤ k/s on an s grid; values hold φ(s).
inline ConditionReport check_corollary41(const ScalarFn& G, int k, const std::vector<double>& s_grid,
                                         double band = kDefaultBand) {
    priors::require_dimension(k);
    return detail::run_grid("corollary41", s_grid, band, [&](double s) {
        if (!(s > 0.0)) throw DomainError("check_corollary41: grid points must be positive");
        const double g = G(s);
        const double g1 = G.d1(s);
        if (!(g > 0.0)) throw DomainError("check_corollary41: G must be positive (s = " + std::to_string(s) + ")");
        if (!(g1 < 0.0))
            throw DomainError("check_corollary41: G' >= 0 at s = " + std::to_string(s) +
                              "; not a Laplace transform of a nonnegative kernel");
        const double g2 = G.d2(s);
        const double t1 = g1 / g, t2 = -2.0 * g2 / g1, t3 = -k / s;
        return detail::PointEval{t1 + t2 + t3, detail::max_abs({t1, t2, t3}), t1 + t2, {}};
    });
}

/// Stable variant for a Laplace kernel on (0, 1): s φ(s) - k by integration by parts.
inline ConditionReport check_corollary41(const transforms::UnitKernel& uk, int k, const std::vector<double>& s_grid,
                                         const QuadSpec& q = {}, double band = kDefaultBand) {
    priors::require_dimension(k);
    auto rep = detail::run_grid("corollary41", s_grid, band, [&](double s) {
        if (!(s > 0.0)) throw DomainError("check_corollary41: grid points must be positive");
        const auto m = transforms::unit_kernel_sphi_margin(uk, s, k, q);
        return detail::PointEval{m.value / s, m.scale / s, (m.value + k) / s, {}};
    });
    rep.annotations.push_back("route: stable decomposition, kernel " + uk.label);
    return rep;
}

// ---------------------------------------------------------------------------
// Example 1

namespace detail {

/// log Σ_{i≥0} s^i m!/(m+i)!, summed until term/partial-sum < 1e-16 past the peak.
inline double log_tail_series(int m, double s) {
    if (s == 0.0) return 0.0;
    const double ls = std::log(s);
    double lt = 0.0, ref = 0.0, acc = 1.0;
    for (long i = 1; i < 100000000L; ++i) {
        lt += ls - std::log(static_cast<double>(m + i));
        if (lt > ref) {
            acc = acc * std::exp(ref - lt) + 1.0;
            ref = lt;
        } else {
            const double r = std::exp(lt - ref);
            acc += r;
            if (m + i > s && r < 1e-16 * acc) return ref + std::log(acc);
        }
    }
    throw EvaluationError("log_tail_series: series did not converge", ref + std::log(acc), 100000000L);
}

} // namespace detail

/// Example 1 verdicts: the grid check plus the analytic parameter window.
struct Example1Report {
    ConditionReport report;
    int n = 0;
    int k = 0;
    /// n > k/2 - 1.
    bool proper = false;
    /// n ≤ k - 3.
    bool condition_window = false;
    bool minimax_window() const { return proper && condition_window; }
};

/// Grid check of 2(n+2)R_{n+2}(s) - (n+1)R_{n+1}(s) ≤ k with
/// R_m(s) = s Σ_{j≥m} s^j/(j+1)! / Σ_{j≥m} s^j/j! = 1 - ε_m(s).
///
/// ε_m = 1/Σ_{i≥0} s^i m!/(m+i)! is evaluated in log space; the margin is
/// (n+3-k) - 2(n+2)ε_{n+2} + (n+1)ε_{n+1} and `values` hold the left-hand side.
inline Example1Report check_example1(int n, int k, const std::vector<double>& s_grid, double band = kDefaultBand) {
    if (n < 0) throw DomainError("check_example1: n must be nonnegative");
    if (k < 3) throw DomainError("check_example1: k must be at least 3");
    Example1Report out;
    out.n = n;
    out.k = k;
    out.proper = n > 0.5 * k - 1;
    out.condition_window = n <= k - 3;
    out.report = detail::run_grid("example1", s_grid, band, [&](double s) {
        if (!(s >= 0.0)) throw DomainError("check_example1: grid points must be nonnegative");
        const double e2 = std::exp(-detail::log_tail_series(n + 2, s));
        const double e1 = std::exp(-detail::log_tail_series(n + 1, s));
        const double t0 = n + 3.0 - k, t1 = -2.0 * (n + 2) * e2, t2 = (n + 1.0) * e1;
        const double lhs = 2.0 * (n + 2) * (1 - e2) - (n + 1.0) * (1 - e1);
        return detail::PointEval{t0 + t1 + t2, detail::max_abs({t0, t1, t2}), lhs, {}};
    });
    std::ostringstream w;
    w << "window: proper " << (out.proper ? "yes" : "no") << " (n > k/2-1), condition " << (out.condition_window ? "yes" : "no")
      << " (n <= k-3), large-s limit of LHS n+3 = " << n + 3;
    out.report.annotations.push_back(w.str());
    return out;
}

// ---------------------------------------------------------------------------
// Example 2

struct Example2Report {
    /// 0 for γ = 0, 1 for γ < 0, 2 for γ > 0.
    int analytic_case = 0;
    double analytic_bound = 0.0;
    Verdict analytic = Verdict::Inconclusive;
    ConditionReport numerical;
};

/// Two-layer check for the kernel t^{α-1}(1-t)^{β-1}(1-σt)^{-γ}: the analytic case
/// bound, and φ(s) ≤ k/s with φ from the E*/E** representation on an s grid.
inline Example2Report check_example2(double alpha, double beta, double gamma, double sigma, int k,
                                     const std::vector<double>& s_grid, const QuadSpec& q = {},
                                     double band = kDefaultBand) {
    priors::require_dimension(k);
    if (!(alpha > 0.0)) throw DomainError("check_example2: alpha must be positive");
    if (!(beta >= 1.0)) throw DomainError("check_example2: beta must be at least 1");
    if (!(sigma > 0.0 && sigma < 1.0)) throw DomainError("check_example2: sigma must lie in (0, 1)");
    Example2Report out;
    out.analytic_case = gamma < 0.0 ? 1 : (gamma > 0.0 ? 2 : 0);
    out.analytic_bound = alpha + 2.0 + (gamma > 0.0 ? 2.0 * gamma * sigma / (1.0 - sigma) : 0.0);
    out.analytic = out.analytic_bound <= k ? Verdict::Holds : Verdict::Fails;

    const ScalarFn f = priors::example2_kernel(alpha, beta, gamma, sigma, k);
    // A(t) = 1 + t f'(t)/f(t); the (β-1) term is dropped at β = 1.
    auto A = [=](double t) {
        double a = alpha + gamma * sigma * t / (1.0 - sigma * t);
        if (beta != 1.0) a -= (beta - 1.0) * t / (1.0 - t);
        return a;
    };
    const double f1 = beta == 1.0 ? std::pow(1.0 - sigma, -gamma) : 0.0;
    const QuadSpec qq = relative_only(q);
    out.numerical = detail::run_grid("example2", s_grid, band, [&](double s) {
        if (!(s > 0.0)) throw DomainError("check_example2: grid points must be positive");
        const auto b = transforms::detail::unit_breaks(s);
        // {M0, M1, ∫A f e^{-st}, ∫t(A+1) f e^{-st}}
        auto integrand = [&](double t) {
            const double v = f.eval(t) * std::exp(-s * t);
            const double a = t < 1.0 ? A(t) : 0.0;
            return Vec<4>{v, t * v, a * v, t * (a + 1.0) * v};
        };
        const Vec<4> m = integrate_breakpoints<4>(integrand, b, qq);
        if (!(m[0] > 0.0) || !(m[1] > 0.0)) throw EvaluationError("check_example2: nonpositive moment", m[0], 0);
        const double bd = f1 * std::exp(-s);
        const double e_star = m[2] / m[0];
        const double e_star2 = m[3] / m[1];
        const double t1 = -e_star, t2 = 2.0 * e_star2, t3 = bd / m[0], t4 = -2.0 * bd / m[1], t5 = -static_cast<double>(k);
        const double sphi = t1 + t2 + t3 + t4;
        return detail::PointEval{(sphi + t5) / s, detail::max_abs({t1, t2, t3, t4, t5}) / s, sphi / s, {}};
    });
    std::ostringstream w;
    w << "analytic case " << out.analytic_case << ": bound " << out.analytic_bound << " <= " << k << " is "
      << to_string(out.analytic) << " (sufficient only)";
    out.numerical.annotations.push_back(w.str());
    return out;
}

// ---------------------------------------------------------------------------
// Strawderman

struct StrawdermanReport {
    ConditionReport report;
    double origin_value = 0.0;
    Verdict origin = Verdict::Inconclusive;
    Verdict infinity = Verdict::Inconclusive;
};

/// Grid check of
/// -((k/2+a-3)/(k/2-a+2)²)(u²/2)F² + 2((2-a-u²/2)/(k/2-a+2))F - 2 ≤ 0, F = ₁F₁(1; k/2-a+3; u²/2),
/// evaluated in log space since F grows like e^{u²/2}.
inline StrawdermanReport check_strawderman_sqrt(double a, int k, const std::vector<double>& u_grid,
                                                double band = kDefaultBand) {
    priors::require_dimension(k);
    const double c1 = 0.5 * k + a - 3.0;
    if (c1 < -1e-14) throw DomainError("check_strawderman_sqrt: requires a >= 3 - k/2");
    if (!(a >= 0.0 && a < 1.0)) throw DomainError("check_strawderman_sqrt: a must lie in [0, 1)");
    const double d = 0.5 * k - a + 2.0;
    const double bb = 0.5 * k - a + 3.0;
    StrawdermanReport out;
    out.origin_value = 2.0 * (2.0 - a) / d - 2.0;
    out.origin = out.origin_value < 0.0 ? Verdict::Holds : (out.origin_value > 0.0 ? Verdict::Fails : Verdict::Inconclusive);
    // As u → ∞ the F² term dominates when c1 > 0, and the -u²F/d term when c1 = 0.
    out.infinity = Verdict::Holds;
    out.report = detail::run_grid("strawderman_sqrt", u_grid, band, [&](double u) {
        const double s = 0.5 * u * u;
        const double lf = specfun::kummer_1f1_log(1.0, bb, s).log_abs;
        // log|term| and sign for the three terms.
        double lt[3], sg[3];
        lt[0] = c1 > 0.0 && s > 0.0 ? std::log(c1) - 2.0 * std::log(d) + std::log(s) + 2.0 * lf
                                    : -std::numeric_limits<double>::infinity();
        sg[0] = -1.0;
        const double q = 2.0 - a - s;
        lt[1] = q != 0.0 ? std::log(2.0 * std::fabs(q) / d) + lf : -std::numeric_limits<double>::infinity();
        sg[1] = q < 0.0 ? -1.0 : 1.0;
        lt[2] = std::log(2.0);
        sg[2] = -1.0;
        const double lmax = *std::max_element(lt, lt + 3);
        double norm = 0.0;
        for (int i = 0; i < 3; ++i) norm += sg[i] * std::exp(lt[i] - lmax);
        const double scale = std::exp(lmax);
        return detail::PointEval{norm * scale, scale, norm * scale, norm};
    });
    std::ostringstream w;
    w << "origin value " << out.origin_value << " (" << to_string(out.origin) << "), infinity " << to_string(out.infinity)
      << " (k/2+a-3 = " << c1 << "); interior is grid evidence only";
    out.report.annotations.push_back(w.str());
    return out;
}

// ---------------------------------------------------------------------------
// Proper priors

struct SuperharmonicityReport {
    /// Margins are Δm = ℓ'' + (k-1)ℓ'/u; FAILS means a point with Δm > 0 was found.
    ConditionReport report;
    bool prior_proper = false;
    /// A proper prior without a Δm > 0 witness contradicts the theory.
    bool anomaly = false;
};

inline SuperharmonicityReport check_proper_implies_not_superharmonic(const marginals::MarginalProfile& p,
                                                                     bool prior_proper, const std::vector<double>& grid,
                                                                     double band = kDefaultBand) {
    SuperharmonicityReport out;
    out.prior_proper = prior_proper;
    out.report = detail::run_grid("proper_not_superharmonic", grid, band, [&](double u) {
        if (!(u > 0.0)) throw DomainError("check_proper_implies_not_superharmonic: grid points must be positive");
        const auto j = p.jet(u);
        const double t1 = j.l2, t2 = (p.k - 1) * j.l1 / u;
        return detail::PointEval{t1 + t2, detail::max_abs({t1, t2}), t1 + t2, {}};
    });
    out.anomaly = prior_proper && !out.report.witness;
    if (out.anomaly) out.report.annotations.push_back("anomaly: proper prior but no point with positive Laplacian found");
    else if (out.report.witness)
        out.report.annotations.push_back("marginal not superharmonic: witness u = " + std::to_string(*out.report.witness));
    return out;
}

} // namespace bmx::conditions
