#pragma once

#include <stdexcept>
#include <string>

namespace bait {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape disagreement (messages name both shapes).
struct ShapeError : Error {
    using Error::Error;
};

// Value outside an operation's documented domain (zero-norm row,
// non-normalized probability vector, out-of-range label, ...).
struct DomainError : Error {
    using Error::Error;
};

// Bad config file key/value or inconsistent hyperparameters.
struct ConfigError : Error {
    using Error::Error;
};

// File not readable/writable, malformed CSV or checkpoint.
struct IoError : Error {
    using Error::Error;
};

// Training loss went non-finite or exploded past the guard threshold.
struct DivergenceError : Error {
    using Error::Error;
};

// Batch too small to split into certain/uncertain sets.
struct SplitError : Error {
    using Error::Error;
};

}  // namespace bait
