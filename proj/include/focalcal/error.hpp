#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace focalcal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An input lies outside the mathematical domain of an operation
/// (probability outside [0,1], label out of range, empty batch).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A user-supplied parameter is invalid (non-positive temperature,
/// negative gamma in the loss role, malformed grid).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed to bracket or converge.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed external data. Carries the 1-based line number when known.
class IngestError : public Error {
public:
    IngestError(const std::string& what, std::size_t line)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A file could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// A verification scan found a counterexample to a proven property.
class VerificationError : public Error {
public:
    using Error::Error;
};

}  // namespace focalcal
