#pragma once

#include <stdexcept>
#include <string>

namespace bmx {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A series or iteration failed to converge; carries the partial state.
class EvaluationError : public std::runtime_error {
public:
    EvaluationError(const std::string& what, double partial_sum = 0.0, long terms = 0)
        : std::runtime_error(what), partial_sum_(partial_sum), terms_(terms) {}

    double partial_sum() const noexcept { return partial_sum_; }
    long terms() const noexcept { return terms_; }

private:
    double partial_sum_;
    long terms_;
};

/// Adaptive quadrature could not meet its tolerance.
class QuadratureError : public std::runtime_error {
public:
    QuadratureError(const std::string& what, double worst_lo, double worst_hi)
        : std::runtime_error(what), worst_lo_(worst_lo), worst_hi_(worst_hi) {}

    double worst_lo() const noexcept { return worst_lo_; }
    double worst_hi() const noexcept { return worst_hi_; }

private:
    double worst_lo_;
    double worst_hi_;
};

/// The integrand's tail is not negligible at the probe horizon.
class DivergenceError : public QuadratureError {
public:
    using QuadratureError::QuadratureError;
};

/// A prior construction pipeline could not be carried out.
class ConstructionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace bmx
