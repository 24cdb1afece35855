#pragma once

#include <stdexcept>
#include <string>

namespace dse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (case files, experiment configs).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Input parsed but violates a data invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// An iterative solver ran out of iterations.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// A linear system or factorization was numerically singular.
class SingularMatrixError : public Error {
public:
    using Error::Error;
};

/// Transient simulation left the region of physically meaningful speeds.
class InstabilityError : public Error {
public:
    using Error::Error;
};

}  // namespace dse
