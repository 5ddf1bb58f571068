#pragma once

#include <stdexcept>
#include <string>

namespace immersoflow {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Violated precondition: bad arguments, malformed configuration, out-of-domain queries.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Singular systems, failed factorizations, non-converged iterations.
class NumericalFailure : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw InvalidInput(message);
    }
}

} // namespace detail
} // namespace immersoflow
