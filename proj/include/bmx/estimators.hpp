#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bmx/error.hpp"
#include "bmx/marginals.hpp"
#include "bmx/parallel.hpp"

namespace bmx::estimators {

using marginals::Jet;
using marginals::MarginalProfile;

struct RiskReport {
    double theta_norm = 0.0;
    std::uint64_t n_samples = 0;
    std::uint64_t seed = 0;
    double mc_risk = 0.0;
    double mc_stderr = 0.0;
    double sure_mean = 0.0;
    double sure_stderr = 0.0;
    /// Standard error of the paired difference loss - SURE.
    double diff_stderr = 0.0;
    int baseline_k = 0;
    std::uint64_t failures = 0;
};

namespace detail {

inline double norm(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

/// (ℓ'/ℓ, ℓ''/ℓ, ℓ'/(uℓ)) with the u → 0 limit of the last entry.
struct LogDerivs {
    double L1, L2, L1_over_u;
};

inline LogDerivs log_derivs(const MarginalProfile& p, double u) {
    const Jet j = p.jet(u);
    if (!(j.l0 > 0.0) || !std::isfinite(j.l0)) throw EvaluationError("marginal not positive", j.l0, 0);
    const double L1 = j.l1 / j.l0;
    const double L2 = j.l2 / j.l0;
    if (!std::isfinite(L1) || !std::isfinite(L2)) throw EvaluationError("marginal derivatives not finite", L1, 0);
    return {L1, L2, u < 1e-8 ? L2 : L1 / u};
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Box-Muller on mt19937_64, two normals per pair of uniforms.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : eng_(seed) {}

    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Neumaier-compensated sum.
struct Neumaier {
    double sum = 0.0;
    double c = 0.0;
    void add(double x) {
        const double t = sum + x;
        if (std::fabs(sum) >= std::fabs(x))
            c += (sum - t) + x;
        else
            c += (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + c; }
};

struct BatchSums {
    Neumaier loss, loss2, sure, sure2, diff, diff2;
    std::uint64_t count = 0;
    std::uint64_t failures = 0;
};

inline constexpr std::uint64_t kBatch = 4096;

} // namespace detail

/// δ(x) = x + (ℓ'(u)/ℓ(u)) x/u, u = ‖x‖.
inline std::vector<double> bayes_estimate(const MarginalProfile& p, std::span<const double> x) {
    std::vector<double> d(x.begin(), x.end());
    const double u = detail::norm(x);
    if (u < 1e-8) return d;
    const auto ld = detail::log_derivs(p, u);
    for (double& v : d) v += ld.L1_over_u * v;
    return d;
}

/// Radial form of k + 2 div γ + ‖γ‖²: k + 2(k-1)L1/u + 2L2 - L1², L_j = ℓ^{(j)}/ℓ.
inline double sure_radial(const MarginalProfile& p, double u) {
    const auto ld = detail::log_derivs(p, u);
    const int k = p.k;
    return k + 2.0 * (k - 1) * ld.L1_over_u + 2.0 * ld.L2 - ld.L1 * ld.L1;
}

inline double sure(const MarginalProfile& p, std::span<const double> x) {
    if (static_cast<int>(x.size()) != p.k) throw DomainError("sure: dimension mismatch");
    return sure_radial(p, detail::norm(x));
}

/// Monte Carlo risk of the Bayes rule at θ with the paired SURE estimate.
///
/// Samples are drawn in batches of 4096; batch b uses its own stream seeded
/// from (seed, b), so results do not depend on the thread count.
inline RiskReport mc_risk(const MarginalProfile& p, std::span<const double> theta, std::uint64_t n, std::uint64_t seed) {
    const int k = p.k;
    if (static_cast<int>(theta.size()) != k) throw DomainError("mc_risk: theta dimension mismatch");
    if (n < 1000) throw DomainError("mc_risk: n must be at least 1000");
    const std::uint64_t n_batches = (n + detail::kBatch - 1) / detail::kBatch;
    std::vector<detail::BatchSums> sums(n_batches);
    const std::vector<double> th(theta.begin(), theta.end());

    auto run_batch = [&](std::uint64_t b) {
        detail::NormalStream rng(detail::mix_seed(seed, b));
        detail::BatchSums& s = sums[b];
        const std::uint64_t m = std::min(detail::kBatch, n - b * detail::kBatch);
        std::vector<double> x(k);
        for (std::uint64_t i = 0; i < m; ++i) {
            double u2 = 0.0;
            for (int c = 0; c < k; ++c) {
                x[c] = th[c] + rng.next();
                u2 += x[c] * x[c];
            }
            const double u = std::sqrt(u2);
            try {
                const auto ld = detail::log_derivs(p, u);
                const double shrink = u < 1e-8 ? 0.0 : ld.L1_over_u;
                double loss = 0.0;
                for (int c = 0; c < k; ++c) {
                    const double e = x[c] + shrink * x[c] - th[c];
                    loss += e * e;
                }
                const double sr = k + 2.0 * (k - 1) * ld.L1_over_u + 2.0 * ld.L2 - ld.L1 * ld.L1;
                if (!std::isfinite(loss) || !std::isfinite(sr)) {
                    ++s.failures;
                    continue;
                }
                s.loss.add(loss);
                s.loss2.add(loss * loss);
                s.sure.add(sr);
                s.sure2.add(sr * sr);
                s.diff.add(loss - sr);
                s.diff2.add((loss - sr) * (loss - sr));
                ++s.count;
            } catch (const EvaluationError&) {
                ++s.failures;
            } catch (const QuadratureError&) {
                ++s.failures;
            }
        }
    };

    parallel_for(n_batches, run_batch);

    detail::Neumaier loss, loss2, sr, sr2, df, df2;
    std::uint64_t count = 0, failures = 0;
    for (const auto& s : sums) {
        loss.add(s.loss.value());
        loss2.add(s.loss2.value());
        sr.add(s.sure.value());
        sr2.add(s.sure2.value());
        df.add(s.diff.value());
        df2.add(s.diff2.value());
        count += s.count;
        failures += s.failures;
    }
    if (failures * 1000 > n) throw EvaluationError("mc_risk: more than 0.1% of samples failed", static_cast<double>(failures), 0);
    if (count < 2) throw EvaluationError("mc_risk: no valid samples", 0.0, 0);

    const double N = static_cast<double>(count);
    auto stderr_of = [N](double mean, double sq) { return std::sqrt(std::max(0.0, sq / N - mean * mean) / (N - 1)); };
    RiskReport r;
    r.theta_norm = detail::norm(theta);
    r.n_samples = n;
    r.seed = seed;
    r.baseline_k = k;
    r.failures = failures;
    r.mc_risk = loss.value() / N;
    r.mc_stderr = stderr_of(r.mc_risk, loss2.value());
    r.sure_mean = sr.value() / N;
    r.sure_stderr = stderr_of(r.sure_mean, sr2.value());
    r.diff_stderr = stderr_of(df.value() / N, df2.value());
    return r;
}

/// Seed for one curve point, derived from (seed, bits of ‖θ‖).
inline std::uint64_t curve_seed(std::uint64_t seed, double theta_norm) {
    return detail::mix_seed(seed, std::bit_cast<std::uint64_t>(theta_norm));
}

/// One report per norm with θ = (‖θ‖, 0, ..., 0).
inline std::vector<RiskReport> risk_curve(const MarginalProfile& p, const std::vector<double>& theta_norms,
                                          std::uint64_t n, std::uint64_t seed) {
    std::vector<RiskReport> out;
    out.reserve(theta_norms.size());
    for (double t : theta_norms) {
        if (!(t >= 0.0)) throw DomainError("risk_curve: theta norms must be nonnegative");
        std::vector<double> theta(p.k, 0.0);
        theta[0] = t;
        out.push_back(mc_risk(p, theta, n, curve_seed(seed, t)));
    }
    return out;
}

/// Nodes for tabulating a profile before simulation: log-spaced near the
/// origin, then uniform up to max_theta_norm + 8√k.
inline std::vector<double> risk_table_grid(int k, double max_theta_norm, std::size_t n_nodes = 3000) {
    const double hi = max_theta_norm + 8.0 * std::sqrt(static_cast<double>(k));
    std::vector<double> g;
    for (int i = 0; i <= 40; ++i) g.push_back(1e-4 * std::pow(10.0, 3.0 * i / 40.0));
    for (std::size_t i = 1; i <= n_nodes; ++i) g.push_back(0.1 + (hi - 0.1) * static_cast<double>(i) / n_nodes);
    return g;
}

} // namespace bmx::estimators
