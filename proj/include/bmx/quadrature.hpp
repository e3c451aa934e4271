#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <type_traits>
#include <vector>

#include "bmx/error.hpp"

namespace bmx {

/// Tolerances for adaptive quadrature.
struct QuadSpec {
    double rel_tol = 1e-8;
    double abs_tol = 1e-14;
    int max_depth = 64;
    /// Relative integrand mass below which an infinite tail is dropped.
    double tail_cut = 1e-14;
    int max_intervals = 4000;

    void validate() const {
        if (!(rel_tol > 0.0) || !(tail_cut > 0.0) || abs_tol < 0.0 || max_depth < 1 || max_intervals < 1)
            throw DomainError("QuadSpec: rel_tol, tail_cut > 0, abs_tol >= 0, max_depth >= 1 required");
    }
};

template <std::size_t N>
using Vec = std::array<double, N>;

/// Copy of q with the absolute floor removed, for integrals whose magnitude is
/// far from unity (marginals deep in the tails, Laplace moments at large s).
inline QuadSpec relative_only(QuadSpec q) {
    q.abs_tol = 0.0;
    return q;
}

namespace detail {

// 21-point Gauss-Kronrod rule; odd-indexed abscissae are the 10-point Gauss nodes.
inline constexpr std::array<double, 11> kXgk = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};
inline constexpr std::array<double, 11> kWgk = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208272167245, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr std::array<double, 5> kWg = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

template <std::size_t N>
struct Segment {
    double lo;
    double hi;
    Vec<N> value;
    Vec<N> error;
    int depth;
    bool frozen = false;
};

template <std::size_t N, class F>
Vec<N> call_vec(const F& f, double x) {
    if constexpr (N == 1 && std::is_convertible_v<std::invoke_result_t<const F&, double>, double>) {
        return Vec<1>{static_cast<double>(f(x))};
    } else {
        return f(x);
    }
}

template <std::size_t N, class F>
Segment<N> gk21(const F& f, double lo, double hi, int depth) {
    const double center = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    std::array<Vec<N>, 21> fv{};
    fv[0] = call_vec<N>(f, center);
    for (int j = 0; j < 10; ++j) {
        const double dx = half * kXgk[j];
        fv[1 + 2 * j] = call_vec<N>(f, center - dx);
        fv[2 + 2 * j] = call_vec<N>(f, center + dx);
    }
    Segment<N> seg{lo, hi, {}, {}, depth};
    constexpr double eps = std::numeric_limits<double>::epsilon();
    for (std::size_t c = 0; c < N; ++c) {
        double kron = kWgk[10] * fv[0][c];
        double gauss = 0.0;
        double abs_sum = std::fabs(kron);
        for (int j = 0; j < 10; ++j) {
            const double pair = fv[1 + 2 * j][c] + fv[2 + 2 * j][c];
            kron += kWgk[j] * pair;
            abs_sum += kWgk[j] * (std::fabs(fv[1 + 2 * j][c]) + std::fabs(fv[2 + 2 * j][c]));
            if (j % 2 == 1) gauss += kWg[j / 2] * pair;
        }
        const double mean = 0.5 * kron;
        double asc = kWgk[10] * std::fabs(fv[0][c] - mean);
        for (int j = 0; j < 10; ++j)
            asc += kWgk[j] * (std::fabs(fv[1 + 2 * j][c] - mean) + std::fabs(fv[2 + 2 * j][c] - mean));
        const double result = kron * half;
        const double resabs = abs_sum * std::fabs(half);
        const double resasc = asc * std::fabs(half);
        double err = std::fabs((kron - gauss) * half);
        if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
        if (resabs > std::numeric_limits<double>::min() / (50 * eps)) err = std::max(err, 50 * eps * resabs);
        if (!std::isfinite(result)) {
            std::ostringstream msg;
            msg << "integrand not finite on [" << lo << ", " << hi << "]";
            throw QuadratureError(msg.str(), lo, hi);
        }
        seg.value[c] = result;
        seg.error[c] = err;
    }
    return seg;
}

template <std::size_t N>
double tolerance_ratio(const Vec<N>& err, const Vec<N>& total, const QuadSpec& q) {
    double worst = 0.0;
    for (std::size_t c = 0; c < N; ++c) {
        const double tol = std::max(q.abs_tol, q.rel_tol * std::fabs(total[c]));
        worst = std::max(worst, tol > 0.0 ? err[c] / tol : (err[c] > 0.0 ? 1e300 : 0.0));
    }
    return worst;
}

// Log-spaced probe abscissae lo + 10^e, e = -8, -7.75, ...
inline double probe_point(double lo, int i) { return lo + std::pow(10.0, -8.0 + 0.25 * i); }
inline constexpr int kProbeBase = 65;   // through lo + 1e8
inline constexpr int kProbeLimit = 433; // through lo + 1e100
inline constexpr int kProbeFloor = -1160; // down to lo + 1e-298

} // namespace detail

/// Globally adaptive Gauss-Kronrod over consecutive breakpoints (finite, sorted).
template <std::size_t N, class F>
Vec<N> integrate_breakpoints(const F& f, std::span<const double> breaks, const QuadSpec& q = {}) {
    q.validate();
    using Seg = detail::Segment<N>;
    std::vector<Seg> segs;
    Vec<N> total{};
    Vec<N> total_err{};
    if (breaks.size() < 2) return total;
    segs.reserve(breaks.size() + 64);
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        if (!(breaks[i + 1] > breaks[i])) continue;
        segs.push_back(detail::gk21<N>(f, breaks[i], breaks[i + 1], 0));
    }
    auto recompute = [&] {
        total = {};
        total_err = {};
        for (const auto& s : segs)
            for (std::size_t c = 0; c < N; ++c) {
                total[c] += s.value[c];
                total_err[c] += s.error[c];
            }
    };
    recompute();
    while (detail::tolerance_ratio<N>(total_err, total, q) > 1.0) {
        std::size_t worst = segs.size();
        double worst_ratio = -1.0;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            if (segs[i].frozen) continue;
            const double r = detail::tolerance_ratio<N>(segs[i].error, total, q);
            if (r > worst_ratio) {
                worst_ratio = r;
                worst = i;
            }
        }
        if (worst == segs.size() || static_cast<int>(segs.size()) >= q.max_intervals) {
            // Only unsplittable segments remain; report the worst of them.
            std::size_t w = 0;
            double wr = -1.0;
            for (std::size_t i = 0; i < segs.size(); ++i) {
                const double r = detail::tolerance_ratio<N>(segs[i].error, total, q);
                if (r > wr) {
                    wr = r;
                    w = i;
                }
            }
            std::ostringstream msg;
            msg << "quadrature tolerance not met (depth/interval limit); worst interval ["
                << segs[w].lo << ", " << segs[w].hi << "]";
            throw QuadratureError(msg.str(), segs[w].lo, segs[w].hi);
        }
        Seg s = segs[worst];
        if (s.depth + 1 > q.max_depth) {
            segs[worst].frozen = true;
            continue;
        }
        const double mid = 0.5 * (s.lo + s.hi);
        if (!(mid > s.lo && mid < s.hi)) {
            segs[worst].frozen = true;
            continue;
        }
        segs[worst] = detail::gk21<N>(f, s.lo, mid, s.depth + 1);
        segs.push_back(detail::gk21<N>(f, mid, s.hi, s.depth + 1));
        for (std::size_t c = 0; c < N; ++c) {
            total[c] += segs[worst].value[c] + segs.back().value[c] - s.value[c];
            total_err[c] += segs[worst].error[c] + segs.back().error[c] - s.error[c];
        }
        if (segs.size() % 64 == 0) recompute();
    }
    recompute();
    return total;
}

/// Vector-valued integral over [lo, hi]; hi = +inf triggers a log-spaced probe
/// scan that locates the integrand's mass, truncates negligible tails and maps
/// algebraically decaying tails onto a finite interval.
template <std::size_t N, class F>
Vec<N> integrate_vec(const F& f, double lo, double hi, const QuadSpec& q = {}) {
    q.validate();
    if (!(hi > lo)) {
        if (hi == lo) return Vec<N>{};
        throw DomainError("integrate: hi < lo");
    }
    if (std::isfinite(hi)) {
        const std::array<double, 2> b{lo, hi};
        return integrate_breakpoints<N>(f, b, q);
    }

    // Per-component mass per log-unit, w = |f(x)| (x - lo).
    std::vector<double> xs;
    std::vector<Vec<N>> ws;
    Vec<N> peak{};
    auto probe = [&](int i) {
        const double x = detail::probe_point(lo, i);
        Vec<N> v = detail::call_vec<N>(f, x);
        Vec<N> w{};
        for (std::size_t c = 0; c < N; ++c) {
            w[c] = std::fabs(v[c]) * (x - lo);
            if (!std::isfinite(w[c])) {
                std::ostringstream msg;
                msg << "integrand not finite at probe x = " << x << " (divergent integral)";
                throw DivergenceError(msg.str(), x, std::numeric_limits<double>::infinity());
            }
            peak[c] = std::max(peak[c], w[c]);
        }
        xs.push_back(x);
        ws.push_back(w);
    };
    auto tail_significant = [&](const Vec<N>& w) {
        for (std::size_t c = 0; c < N; ++c)
            if (peak[c] > 0.0 && w[c] >= q.tail_cut * peak[c]) return true;
        return false;
    };
    int i = 0;
    for (; i < detail::kProbeBase; ++i) probe(i);
    while (i < detail::kProbeLimit && tail_significant(ws.back())) probe(i++);

    // Mass below the first probe: scan downwards while the smallest probe still
    // carries significant mass (or nothing has been seen yet).
    auto nothing_seen = [&] {
        for (double p : peak)
            if (p > 0.0) return false;
        return true;
    };
    std::vector<double> low_xs;
    std::vector<Vec<N>> low_ws;
    for (int j = -1; j >= detail::kProbeFloor; --j) {
        if (!nothing_seen() && !tail_significant(low_ws.empty() ? ws.front() : low_ws.back())) break;
        const double x = detail::probe_point(lo, j);
        if (!(x > lo)) break;
        const std::size_t before = xs.size();
        probe(j);
        low_xs.push_back(xs.back());
        low_ws.push_back(ws.back());
        xs.resize(before);
        ws.resize(before);
    }
    if (!low_xs.empty()) {
        xs.insert(xs.begin(), low_xs.rbegin(), low_xs.rend());
        ws.insert(ws.begin(), low_ws.rbegin(), low_ws.rend());
    }

    bool all_zero = true;
    for (double p : peak) all_zero = all_zero && p == 0.0;
    if (all_zero) return Vec<N>{};

    const int last = static_cast<int>(xs.size()) - 1;
    int horizon = 0;
    for (int j = last; j >= 0; --j) {
        if (tail_significant(ws[j])) {
            horizon = j;
            break;
        }
    }
    std::vector<double> breaks{lo};
    const int stop = std::min(horizon + 1, last);
    for (int j = 0; j < stop; j += 2) breaks.push_back(xs[j]);
    breaks.push_back(xs[stop]);
    Vec<N> total = integrate_breakpoints<N>(f, breaks, q);

    if (horizon >= last) {
        // Tail still carries mass at the probe limit: fit the decay exponent.
        const double x1 = xs[last - 4];
        const double x2 = xs[last];
        const Vec<N> v1 = detail::call_vec<N>(f, x1);
        const Vec<N> v2 = detail::call_vec<N>(f, x2);
        for (std::size_t c = 0; c < N; ++c) {
            if (v2[c] == 0.0) continue;
            const double slope = std::log(std::fabs(v2[c]) / std::fabs(v1[c])) / std::log(x2 / x1);
            if (!(slope < -1.05)) {
                std::ostringstream msg;
                msg << "divergent tail: fitted decay exponent " << slope << " at x = " << x2;
                throw DivergenceError(msg.str(), x2, std::numeric_limits<double>::infinity());
            }
        }
        const double X = xs[last];
        auto mapped = [&f, X](double t) {
            Vec<N> v = detail::call_vec<N>(f, X / t);
            for (auto& c : v) c *= X / (t * t);
            return v;
        };
        const std::array<double, 2> b{0.0, 1.0};
        const Vec<N> tail = integrate_breakpoints<N>(mapped, b, q);
        for (std::size_t c = 0; c < N; ++c) total[c] += tail[c];
    }
    return total;
}

/// Scalar integral over [lo, hi]; hi may be +infinity.
template <class F>
double integrate(const F& f, double lo, double hi, const QuadSpec& q = {}) {
    return integrate_vec<1>([&f](double x) { return Vec<1>{static_cast<double>(f(x))}; }, lo, hi, q)[0];
}

} // namespace bmx
