#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ldisc {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not agree with each other.
class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// A model failed validation where a valid one was required.
class InvalidModel : public Error {
public:
    using Error::Error;
};

/// The occupancy system (I - gamma T_pi^T) c = p0 has no solution. Only
/// reachable with gamma = 1 when some policy mass never terminates.
class NonEpisodic : public Error {
public:
    using Error::Error;
};

/// (I - gamma T K) could not be inverted.
class SolverSingular : public Error {
public:
    SolverSingular(const std::string& what, double condition)
        : Error(what), condition_(condition) {}
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

/// Cassandra file could not be parsed.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// O(o | a, s') differs across actions; the toolkit needs Phi(o | s').
class ActionDependentObservations : public Error {
public:
    using Error::Error;
};

/// Feature of the file format that is recognised but not supported.
class Unsupported : public Error {
public:
    using Error::Error;
};

/// Gradient or objective became non-finite.
class NumericalFailure : public Error {
public:
    NumericalFailure(const std::string& what, std::size_t index)
        : Error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

}  // namespace ldisc
