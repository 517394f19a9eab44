#pragma once

#include <stdexcept>
#include <string>

namespace softsparse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside the domain of an operation (bad fraction, t_int < 1, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Tensor shapes or scales do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A value left the representable range (tensor headroom, 32-bit accumulator).
class OverflowError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated input file / byte stream.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Operation invoked in the wrong accelerator state.
class StateError : public Error {
public:
    using Error::Error;
};

/// Invalid command-line configuration (unknown flag values, bad thresholds).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A cross-check inside a command failed (e.g. FSM vs conv engine mismatch).
class AssertionFailure : public Error {
public:
    using Error::Error;
};

} // namespace softsparse
