#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <utility>

#include "bmx/error.hpp"
#include "bmx/quadrature.hpp"

namespace bmx::specfun {

struct EvalPolicy {
    double rel_tol = 1e-12;
    long max_terms = 10000;
    /// Bessel values carry e^{-x} (I) or e^{+x} (K).
    bool scaled = false;

    void validate() const {
        if (!(rel_tol > 0.0) || max_terms < 1) throw DomainError("EvalPolicy: rel_tol > 0 and max_terms >= 1 required");
    }
};

/// A real number held as sign * exp(log_abs).
struct SignedLog {
    double log_abs = -std::numeric_limits<double>::infinity();
    int sign = 0;

    double value() const { return sign == 0 ? 0.0 : sign * std::exp(log_abs); }
};

namespace detail {

// log|Γ(x)| and the sign of Γ(x), without touching the global signgam.
inline double lgamma_signed(double x, int& sign) {
#if defined(__GLIBC__) || defined(__APPLE__)
    return ::lgamma_r(x, &sign);
#else
    sign = (x > 0.0 || static_cast<long>(std::floor(-x)) % 2 == 1) ? 1 : -1;
    return std::lgamma(x);
#endif
}

inline bool is_nonpositive_integer(double x) { return x <= 0.0 && x == std::floor(x); }

// Running sum of signed terms given as logs; rescales to stay in range.
class LogSum {
public:
    void add(double log_abs, int sign) {
        if (sign == 0 || log_abs == -std::numeric_limits<double>::infinity()) return;
        if (!started_) {
            scale_ = log_abs;
            started_ = true;
        } else if (log_abs - scale_ > 600.0) {
            sum_ *= std::exp(scale_ - log_abs);
            scale_ = log_abs;
        }
        last_ = sign * std::exp(log_abs - scale_);
        sum_ += last_;
    }
    double last_relative() const { return sum_ == 0.0 ? 1.0 : std::fabs(last_ / sum_); }
    double partial() const { return started_ ? sum_ * std::exp(scale_) : 0.0; }
    SignedLog result() const {
        if (!started_ || sum_ == 0.0) return {};
        return {scale_ + std::log(std::fabs(sum_)), sum_ > 0.0 ? 1 : -1};
    }

private:
    double sum_ = 0.0;
    double scale_ = 0.0;
    double last_ = 0.0;
    bool started_ = false;
};

// Power series for I_nu(x) with x > 0, returned in log form (unscaled).
inline SignedLog bessel_i_series(double nu, double x, const EvalPolicy& p) {
    const double log_half_x = std::log(0.5 * x);
    int gsign = 1;
    double lg = lgamma_signed(nu + 1.0, gsign);
    double log_term = nu * log_half_x - lg;
    int sign = is_nonpositive_integer(nu + 1.0) ? 0 : gsign;
    LogSum acc;
    for (long m = 0; m < p.max_terms; ++m) {
        if (sign != 0) acc.add(log_term, sign);
        // a_{m+1}/a_m = (x/2)^2 / ((m+1)(m+1+nu))
        const double denom = (m + 1.0) * (m + 1.0 + nu);
        if (sign == 0) {
            // 1/Γ(m+nu+1) vanished at a pole; restart from the next finite term.
            const double y = m + 2.0 + nu;
            if (!is_nonpositive_integer(y)) {
                int s2 = 1;
                const double lg2 = lgamma_signed(y, s2);
                log_term = (2.0 * (m + 1) + nu) * log_half_x - std::lgamma(m + 2.0) - lg2;
                sign = s2;
            }
            continue;
        }
        log_term += 2.0 * log_half_x - std::log(std::fabs(denom));
        if (denom < 0.0) sign = -sign;
        const bool past_peak = (m + 1.0) * (m + 1.0 + nu) > 0.25 * x * x;
        if (past_peak && acc.last_relative() < 0.01 * p.rel_tol) return acc.result();
    }
    throw EvaluationError("bessel_i: series did not converge within max_terms", acc.partial(), p.max_terms);
}

// Large-argument expansion of e^{-x} I_nu(x).
inline double bessel_i_asymptotic_scaled(double nu, double x, const EvalPolicy& p) {
    const double mu = 4.0 * nu * nu;
    double term = 1.0;
    double sum = 1.0;
    for (long k = 1; k < p.max_terms; ++k) {
        const double odd = 2.0 * k - 1.0;
        const double next = -term * (mu - odd * odd) / (k * 8.0 * x);
        if (std::fabs(next) > std::fabs(term)) break;
        term = next;
        sum += term;
        if (std::fabs(term) < 0.01 * p.rel_tol * std::fabs(sum)) break;
    }
    return sum / std::sqrt(2.0 * std::numbers::pi * x);
}

inline bool use_asymptotic(double nu, double x) { return x > 30.0 + 0.5 * nu * nu; }

} // namespace detail

/// ln Γ(x) for x > 0.
inline double log_gamma(double x) {
    if (!(x > 0.0)) throw DomainError("log_gamma: x must be positive");
    int s = 1;
    return detail::lgamma_signed(x, s);
}

/// Modified Bessel function of the first kind, I_nu(x), or e^{-x} I_nu(x) when scaled.
inline double bessel_i(double nu, double x, const EvalPolicy& p = {}) {
    p.validate();
    if (!(x >= 0.0)) throw DomainError("bessel_i: x must be nonnegative");
    if (nu < 0.0 && nu == std::floor(nu)) nu = -nu; // I_{-n} = I_n
    if (x == 0.0) {
        if (nu == 0.0) return 1.0;
        if (nu > 0.0) return 0.0;
        return std::numeric_limits<double>::infinity();
    }
    if (detail::use_asymptotic(nu, x)) {
        const double s = detail::bessel_i_asymptotic_scaled(nu, x, p);
        return p.scaled ? s : s * std::exp(x);
    }
    const SignedLog v = detail::bessel_i_series(nu, x, p);
    if (v.sign == 0) return 0.0;
    return v.sign * std::exp(v.log_abs - (p.scaled ? x : 0.0));
}

/// log I_nu(x) for nu > -1 and x > 0 (where I_nu is positive).
inline double log_bessel_i(double nu, double x, const EvalPolicy& p = {}) {
    if (!(x > 0.0)) throw DomainError("log_bessel_i: x must be positive");
    if (!(nu > -1.0)) throw DomainError("log_bessel_i: nu must exceed -1");
    if (detail::use_asymptotic(nu, x)) return x + std::log(detail::bessel_i_asymptotic_scaled(nu, x, p));
    return detail::bessel_i_series(nu, x, p).log_abs;
}

/// e^{-x} x^{-nu} I_nu(x), finite at x = 0 where it equals 1 / (2^nu Γ(nu+1)).
inline double bessel_i_reduced(double nu, double x, const EvalPolicy& p = {}) {
    if (!(x >= 0.0)) throw DomainError("bessel_i_reduced: x must be nonnegative");
    if (!(nu > -1.0)) throw DomainError("bessel_i_reduced: nu must exceed -1");
    if (x == 0.0) return std::exp(-nu * std::numbers::ln2 - std::lgamma(nu + 1.0));
    return std::exp(log_bessel_i(nu, x, p) - x - nu * std::log(x));
}

namespace detail {

inline double bessel_k_formula(double nu, double x, const EvalPolicy& p) {
    EvalPolicy unscaled = p;
    unscaled.scaled = false;
    const double diff = bessel_i(-nu, x, unscaled) - bessel_i(nu, x, unscaled);
    return 0.5 * std::numbers::pi * diff / std::sin(nu * std::numbers::pi);
}

// e^{x} K_nu(x) = ∫_0^∞ exp(-x (cosh t - 1)) cosh(nu t) dt.
inline double bessel_k_integral_scaled(double nu, double x, const EvalPolicy& p) {
    const double anu = std::fabs(nu);
    double hi = std::min(1.0, std::sqrt(1500.0 / x));
    auto cosh_m1 = [](double t) {
        const double sh = std::sinh(0.5 * t);
        return 2.0 * sh * sh;
    };
    while (x * cosh_m1(hi) - anu * hi < 750.0) hi *= 1.25;
    auto integrand = [=](double t) {
        const double c = cosh_m1(t);
        return 0.5 * (std::exp(-x * c + nu * t) + std::exp(-x * c - nu * t));
    };
    QuadSpec q;
    q.rel_tol = std::max(p.rel_tol, 1e-14);
    q.abs_tol = 0.0;
    std::vector<double> breaks;
    const int pieces = 16;
    for (int i = 0; i <= pieces; ++i) breaks.push_back(hi * i / pieces);
    return integrate_breakpoints<1>(integrand, breaks, q)[0];
}

} // namespace detail

/// Modified Bessel function of the second kind, K_nu(x), or e^{x} K_nu(x) when scaled.
///
/// x <= 2 uses the (I_{-nu} - I_nu) / sin(nu pi) formula (integer orders by a
/// symmetric +-eps perturbation with one Richardson step); x > 2 integrates the
/// cosh representation, which avoids the cancellation of the formula.
inline double bessel_k(double nu, double x, const EvalPolicy& p = {}) {
    p.validate();
    if (!(x > 0.0)) throw DomainError("bessel_k: x must be positive");
    nu = std::fabs(nu);
    if (x > 2.0) {
        const double s = detail::bessel_k_integral_scaled(nu, x, p);
        return p.scaled ? s : s * std::exp(-x);
    }
    double k = 0.0;
    const double n = std::round(nu);
    if (std::fabs(nu - n) < 1e-6) {
        constexpr double eps = 1e-6;
        auto sym = [&](double e) {
            return 0.5 * (detail::bessel_k_formula(n + e, x, p) + detail::bessel_k_formula(n - e, x, p));
        };
        k = (4.0 * sym(eps) - sym(2.0 * eps)) / 3.0;
    } else {
        k = detail::bessel_k_formula(nu, x, p);
    }
    return p.scaled ? k * std::exp(x) : k;
}

namespace detail {

// Large positive z: ₁F₁ ~ Γ(b)/Γ(a) e^z z^{a-b} Σ (1-a)_n (b-a)_n / (n! z^n), used only
// when the recessive z^{-a}/Γ(b-a) contribution is below the tolerance.
// With `times_exp_minus_z` the result is e^{-z} ₁F₁, cancelling the e^z factor exactly.
inline std::optional<SignedLog> kummer_asymptotic(double a, double b, double z, double log_z, const EvalPolicy& p,
                                                  bool times_exp_minus_z = false) {
    if (z < 60.0 || is_nonpositive_integer(a)) return std::nullopt;
    int sa = 1, sb = 1, sba = 1;
    const double lga = lgamma_signed(a, sa);
    const double lgb = lgamma_signed(b, sb);
    if (!is_nonpositive_integer(b - a)) {
        const double lgba = lgamma_signed(b - a, sba);
        if (-z + (b - 2 * a) * log_z + lga - lgba > std::log(0.01 * p.rel_tol)) return std::nullopt;
    }
    double term = 1.0;
    double sum = 1.0;
    bool converged = false;
    for (long n = 0; n < p.max_terms; ++n) {
        const double next = term * (1 - a + n) * (b - a + n) / ((n + 1) * z);
        if (next == 0.0) {
            converged = true;
            break;
        }
        if (std::fabs(next) > std::fabs(term)) break;
        term = next;
        sum += term;
        if (std::fabs(term) < 0.01 * p.rel_tol * std::fabs(sum)) {
            converged = true;
            break;
        }
    }
    if (!converged && z < 5000.0) return std::nullopt;
    const int sign = sa * sb * (sum > 0 ? 1 : -1);
    return SignedLog{lgb - lga + (times_exp_minus_z ? 0.0 : z) + (a - b) * log_z + std::log(std::fabs(sum)), sign};
}

} // namespace detail

/// log-form ₁F₁(a; b; z); negative z goes through Kummer's transformation.
inline SignedLog kummer_1f1_log(double a, double b, double z, const EvalPolicy& p = {}) {
    p.validate();
    if (detail::is_nonpositive_integer(b)) throw DomainError("kummer_1f1: b must not be zero or a negative integer");
    if (z == 0.0) return {0.0, 1};
    if (z < 0.0) {
        if (auto asym = detail::kummer_asymptotic(b - a, b, -z, std::log(-z), p, true)) return *asym;
        SignedLog t = kummer_1f1_log(b - a, b, -z, p);
        if (t.sign != 0) t.log_abs += z;
        return t;
    }
    const double log_z = std::log(z);
    if (auto asym = detail::kummer_asymptotic(a, b, z, log_z, p)) return *asym;
    double log_term = 0.0;
    int sign = 1;
    detail::LogSum acc;
    for (long m = 0; m < p.max_terms; ++m) {
        acc.add(log_term, sign);
        const double num = a + m;
        if (num == 0.0) return acc.result(); // terminating polynomial
        const double den = (b + m) * (m + 1.0);
        log_term += std::log(std::fabs(num)) + log_z - std::log(std::fabs(den));
        if ((num < 0.0) != (den < 0.0)) sign = -sign;
        const bool decreasing = std::fabs(num) * z < std::fabs(den);
        if (decreasing && m > 0 && acc.last_relative() < 0.01 * p.rel_tol) return acc.result();
    }
    throw EvaluationError("kummer_1f1: series did not converge within max_terms", acc.partial(), p.max_terms);
}

/// Kummer's confluent hypergeometric function ₁F₁(a; b; z).
inline double kummer_1f1(double a, double b, double z, const EvalPolicy& p = {}) {
    return kummer_1f1_log(a, b, z, p).value();
}

/// Whittaker M_{x,mu}(z) = e^{-z/2} z^{mu+1/2} ₁F₁(mu + 1/2 - x; 1 + 2mu; z).
inline double whittaker_m(double x, double mu, double z, const EvalPolicy& p = {}) {
    if (!(z > 0.0)) throw DomainError("whittaker_m: z must be positive");
    const double a = mu + 0.5 - x;
    const double b = 1.0 + 2.0 * mu;
    const double direct = std::exp(-z / 2) * std::pow(z, mu + 0.5) * kummer_1f1(a, b, z, p);
    if (std::isfinite(direct) && direct != 0.0) return direct;
    const SignedLog f = kummer_1f1_log(a, b, z, p);
    return f.sign * std::exp(-z / 2 + (mu + 0.5) * std::log(z) + f.log_abs);
}

/// Whittaker W_{x,mu}(z) from its Laplace-type integral representation.
inline double whittaker_w(double x, double mu, double z, const QuadSpec& quad = {}) {
    const double g = 0.5 + mu - x;
    if (!(g > 0.0)) throw DomainError("whittaker_w: 1/2 + mu - x must be positive");
    if (!(z > 0.0)) throw DomainError("whittaker_w: z must be positive");
    const double e1 = mu - x - 0.5;
    const double e2 = mu + x - 0.5;
    auto integrand = [=](double t) {
        if (t == 0.0) return e1 == 0.0 ? 1.0 : (e1 > 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
        return std::exp(-z * t + e1 * std::log(t) + e2 * std::log1p(t));
    };
    const double integral = integrate(integrand, 0.0, std::numeric_limits<double>::infinity(), relative_only(quad));
    return std::exp(-z / 2 + (mu + 0.5) * std::log(z) - log_gamma(g)) * integral;
}

} // namespace bmx::specfun
