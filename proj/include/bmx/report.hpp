#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace bmx {

enum class Verdict { Holds, Fails, Inconclusive };

inline const char* to_string(Verdict v) {
    switch (v) {
    case Verdict::Holds: return "HOLDS";
    case Verdict::Fails: return "FAILS";
    default: return "INCONCLUSIVE";
    }
}

/// Grid verdict of one sufficient condition.
///
/// `margins` are LHS - RHS divided by the local scale of the dominant term, so
/// `numerical_band` is a relative threshold; `raw_margins` keep the unscaled
/// difference. A NaN margin marks a point whose evaluation failed.
struct ConditionReport {
    std::string condition_id;
    std::vector<double> grid;
    std::vector<double> margins;
    std::vector<double> raw_margins;
    std::vector<double> scales;
    /// Optional per-point auxiliary value (for example phi(s) or a transform ratio).
    std::vector<double> values;
    Verdict verdict = Verdict::Inconclusive;
    std::optional<double> witness;
    double numerical_band = 1e-7;
    std::vector<std::string> annotations;

    void add_point(double x, double raw_margin, double scale) {
        grid.push_back(x);
        raw_margins.push_back(raw_margin);
        scales.push_back(scale);
        const double s = scale > 0.0 && std::isfinite(scale) ? scale : 1.0;
        margins.push_back(raw_margin / s);
    }

    /// Stores an already normalized margin; for margins whose raw value may overflow.
    void add_normalized_point(double x, double margin, double raw_margin, double scale) {
        grid.push_back(x);
        raw_margins.push_back(raw_margin);
        scales.push_back(scale);
        margins.push_back(margin);
    }

    void add_failed_point(double x, const std::string& why) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        grid.push_back(x);
        raw_margins.push_back(nan);
        scales.push_back(nan);
        margins.push_back(nan);
        annotations.push_back("evaluation failed at x=" + std::to_string(x) + ": " + why);
    }

    /// Applies the verdict rules; the witness is the point with the largest margin above the band.
    void finalize() {
        witness.reset();
        bool all_below = !margins.empty();
        double worst = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < margins.size(); ++i) {
            const double m = margins[i];
            if (std::isnan(m) || !(m < -numerical_band)) all_below = false;
            if (!std::isnan(m) && m > numerical_band && m > worst) {
                worst = m;
                witness = grid[i];
            }
        }
        verdict = witness ? Verdict::Fails : (all_below ? Verdict::Holds : Verdict::Inconclusive);
    }

    std::size_t count_above_band() const {
        std::size_t n = 0;
        for (double m : margins) n += (!std::isnan(m) && m > numerical_band);
        return n;
    }

    std::size_t count_within_band() const {
        std::size_t n = 0;
        for (double m : margins) n += (std::isnan(m) || std::fabs(m) <= numerical_band);
        return n;
    }

    double max_margin() const {
        double w = -std::numeric_limits<double>::infinity();
        for (double m : margins)
            if (!std::isnan(m)) w = std::max(w, m);
        return w;
    }
};

/// Three-valued sign of a normalized margin with respect to a band.
inline int band_sign(double margin, double band) {
    if (std::isnan(margin)) return 0;
    if (margin > band) return 1;
    if (margin < -band) return -1;
    return 0;
}

} // namespace bmx
