#pragma once

#include <stdexcept>
#include <string>

namespace downgen {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad magic, header or manifest).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Array shapes or coordinate metadata that do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A domain invariant was violated (non-finite data, bad parameter range, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Non-finite state produced during training or integration.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Invalid pipeline configuration or command-line usage.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace downgen
