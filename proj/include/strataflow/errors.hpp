#pragma once

#include <stdexcept>
#include <string>

namespace strataflow {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed inputs: shape mismatches, bad files, invalid option values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A mathematical precondition fails (stratum mismatch, coinciding orbits).
/// The CLI maps this to exit code 2.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Non-finite value produced during evaluation. Carries the offending
/// component index when one is known (-1 otherwise).
class NumericError : public Error {
public:
    explicit NumericError(const std::string& what, long index = -1)
        : Error(what), index_(index) {}
    long index() const { return index_; }

private:
    long index_;
};

/// Trajectory norm exceeded the blow-up guard. Carries the failure time.
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& what, double time)
        : Error(what), time_(time) {}
    double time() const { return time_; }

private:
    double time_;
};

/// Request exceeds a configured capability limit (matrix size, bracket depth).
class CapabilityError : public Error {
public:
    using Error::Error;
};

} // namespace strataflow
