#pragma once

#include <stdexcept>
#include <string>

namespace pmfuse {

// Error taxonomy maps onto CLI exit codes: validation -> 1, data -> 2,
// anything else (internal invariant) -> 3.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InternalError : std::logic_error {
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

// Statistic cannot be computed (zero variance, all targets zero, ...).
struct UndefinedStatisticError : DataError {
    explicit UndefinedStatisticError(const std::string& msg) : DataError(msg) {}
};

// Rank-deficient design matrix.
struct SingularFitError : DataError {
    explicit SingularFitError(const std::string& msg) : DataError(msg) {}
};

// Iterative solver did not reach tolerance.
struct ConvergenceError : DataError {
    explicit ConvergenceError(const std::string& msg) : DataError(msg) {}
};

// Coordinates outside the valid lat/lon domain.
struct CoordinateError : DataError {
    explicit CoordinateError(const std::string& msg) : DataError(msg) {}
};

#define PMFUSE_CHECK(cond, msg)                                      \
    do {                                                             \
        if (!(cond)) throw ::pmfuse::InternalError(                  \
            std::string(__FILE__) + ":" + std::to_string(__LINE__) + \
            ": invariant failed: " + (msg));                         \
    } while (0)

}  // namespace pmfuse
