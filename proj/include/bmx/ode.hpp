#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "bmx/error.hpp"

namespace bmx::ode {

struct OdeSpec {
    double rel_tol = 1e-11;
    double abs_tol = 1e-14;
    long max_steps = 200000;
};

/// Adaptive Dormand-Prince 5(4) integration of y' = f(t, y) from t0 through
/// every point of `outputs` (ascending, all > t0). Returns the state at each output.
template <std::size_t N, class F>
std::vector<std::array<double, N>> dormand_prince(const F& f, double t0, std::array<double, N> y0,
                                                  const std::vector<double>& outputs, const OdeSpec& spec = {}) {
    using State = std::array<double, N>;
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;

    auto axpy = [](const State& y, double h, std::initializer_list<std::pair<double, const State*>> terms) {
        State out = y;
        for (const auto& [c, k] : terms)
            for (std::size_t i = 0; i < N; ++i) out[i] += h * c * (*k)[i];
        return out;
    };

    std::vector<State> result;
    result.reserve(outputs.size());
    double t = t0;
    State y = y0;
    State k1 = f(t, y);
    double h = outputs.empty() ? 0.0 : std::min(1e-3, 0.01 * (outputs.front() - t0));
    long steps = 0;
    for (double target : outputs) {
        if (!(target > t) && target != t) throw DomainError("dormand_prince: outputs must be ascending");
        while (t < target) {
            if (++steps > spec.max_steps) throw ConstructionError("dormand_prince: step budget exhausted");
            const bool last = t + h >= target;
            const double hs = last ? target - t : h;
            const State k2 = f(t + c2 * hs, axpy(y, hs, {{a21, &k1}}));
            const State k3 = f(t + c3 * hs, axpy(y, hs, {{a31, &k1}, {a32, &k2}}));
            const State k4 = f(t + c4 * hs, axpy(y, hs, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
            const State k5 = f(t + c5 * hs, axpy(y, hs, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
            const State k6 = f(t + hs, axpy(y, hs, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
            const State y5 = axpy(y, hs, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
            const State k7 = f(t + hs, y5);
            double err = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                const double ei = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
                const double sc = spec.abs_tol + spec.rel_tol * std::max(std::fabs(y[i]), std::fabs(y5[i]));
                err = std::max(err, std::fabs(ei) / sc);
            }
            if (!std::isfinite(err)) throw ConstructionError("dormand_prince: non-finite state");
            if (err <= 1.0) {
                t = last ? target : t + hs;
                y = y5;
                k1 = k7;
            }
            const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
            h = hs * factor;
            if (h < 1e-300) throw ConstructionError("dormand_prince: step size underflow");
        }
        result.push_back(y);
    }
    return result;
}

} // namespace bmx::ode
