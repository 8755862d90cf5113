#pragma once

#include <stdexcept>
#include <string>

namespace fiberheat {

/// Base class for all library failures. Catch this to map any module
/// error onto a process exit code.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Field construction and evaluation.
struct NullPointError : Error { using Error::Error; };
struct PerturbationTooLargeError : Error { using Error::Error; };
struct BoundaryViolationError : Error { using Error::Error; };
struct OutOfDomainError : Error { using Error::Error; };
struct ZeroFieldError : Error { using Error::Error; };
struct WrongKindError : Error { using Error::Error; };

// Grids and quadrature.
struct IndexOutOfRangeError : Error { using Error::Error; };
struct GridMismatchError : Error { using Error::Error; };
struct WrongDimensionError : Error { using Error::Error; };

// Effective profile.
struct DegenerateGammaError : Error { using Error::Error; };

// Linear solver.
struct NonSpdError : Error { using Error::Error; };

struct NoConvergenceError : Error {
    NoConvergenceError(const std::string& what, int iters, double residual)
        : Error(what), iterations(iters), residual_reached(residual) {}
    int iterations;
    double residual_reached;
};

// Diophantine / ergodic machinery.
struct NonMonotoneIotaError : Error { using Error::Error; };

// Magnetic differential equation.
struct NotSolvableError : Error { using Error::Error; };

struct SmallDivisorError : Error {
    SmallDivisorError(const std::string& what, int m_, int n_)
        : Error(what), m(m_), n(n_) {}
    int m;
    int n;
};

// Rate fitting.
struct NonPositiveDataError : Error { using Error::Error; };

// Configuration files.
struct ConfigError : Error {
    explicit ConfigError(const std::string& what, int line_ = 0)
        : Error(what), line(line_) {}
    int line;
};

}  // namespace fiberheat
