#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>

namespace bmx {

/// Interval of the positive half-line; hi may be +infinity.
struct Support {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();

    bool contains(double x) const noexcept { return x >= lo && x <= hi; }
    bool bounded() const noexcept { return std::isfinite(hi); }
};

/// Real function of one positive variable, with optional analytic derivatives.
///
/// `log_abs` is an optional overflow-safe log|f|; integral transforms use it when
/// present so that Gaussian-decaying inputs can be paired with exponentially
/// growing kernels.
struct ScalarFn {
    using Map = std::function<double(double)>;

    Map eval;
    std::optional<Map> deriv1;
    std::optional<Map> deriv2;
    std::optional<Map> log_abs;
    Support support{};
    std::string label;

    double operator()(double x) const { return eval(x); }
    double d1(double x) const;
    double d2(double x) const;
    double log_abs_value(double x) const {
        return log_abs ? (*log_abs)(x) : std::log(std::fabs(eval(x)));
    }

    bool has_deriv1() const noexcept { return deriv1.has_value(); }
    bool has_deriv2() const noexcept { return deriv2.has_value(); }

    ScalarFn scaled(double c) const;
};

inline ScalarFn constant_fn(double c, std::string label = "constant") {
    ScalarFn f;
    f.eval = [c](double) { return c; };
    f.deriv1 = [](double) { return 0.0; };
    f.deriv2 = [](double) { return 0.0; };
    f.label = std::move(label);
    return f;
}

/// Central difference with one Richardson step, h = 1e-5 max(1, |x|).
template <class F>
double richardson_diff(const F& f, double x, double h_rel = 1e-5) {
    const double h = h_rel * std::max(1.0, std::fabs(x));
    const double d_h = (f(x + h) - f(x - h)) / (2 * h);
    const double d_2h = (f(x + 2 * h) - f(x - 2 * h)) / (4 * h);
    return (4 * d_h - d_2h) / 3;
}

inline double ScalarFn::d1(double x) const {
    if (deriv1) return (*deriv1)(x);
    return richardson_diff(eval, x);
}

inline double ScalarFn::d2(double x) const {
    if (deriv2) return (*deriv2)(x);
    return richardson_diff([this](double t) { return d1(t); }, x);
}

inline ScalarFn ScalarFn::scaled(double c) const {
    ScalarFn g;
    g.eval = [e = eval, c](double x) { return c * e(x); };
    if (deriv1) g.deriv1 = [d = *deriv1, c](double x) { return c * d(x); };
    if (deriv2) g.deriv2 = [d = *deriv2, c](double x) { return c * d(x); };
    if (c > 0.0) {
        const double lc = std::log(c);
        g.log_abs = [self = *this, lc](double x) { return lc + self.log_abs_value(x); };
    }
    g.support = support;
    g.label = label;
    return g;
}

/// Worst relative mismatch between an analytic derivative and its finite-difference
/// estimate over `points`; `order` is 1 or 2.
template <class Range>
double derivative_contract_error(const ScalarFn& f, const Range& points, int order) {
    double worst = 0.0;
    for (double x : points) {
        double analytic = 0.0;
        double numeric = 0.0;
        if (order == 1) {
            analytic = f.d1(x);
            numeric = richardson_diff(f.eval, x);
        } else {
            analytic = f.d2(x);
            numeric = richardson_diff([&f](double t) { return f.d1(t); }, x);
        }
        const double scale = std::max(std::fabs(analytic), 1e-300);
        worst = std::max(worst, std::fabs(analytic - numeric) / scale);
    }
    return worst;
}

} // namespace bmx
