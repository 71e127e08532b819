#pragma once

#include <stdexcept>
#include <string>

namespace fbc {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A loss or gradient evaluation produced NaN/Inf.
class NonFiniteLoss : public Error {
public:
    using Error::Error;
};

// Zero-norm direction passed to a directional derivative.
class DegenerateDirection : public Error {
public:
    using Error::Error;
};

// Tensor/vector dimensions do not match an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A category label is outside the valid range.
class LabelError : public Error {
public:
    using Error::Error;
};

// Two parameter vectors do not share the same segment layout.
class LayoutMismatch : public Error {
public:
    using Error::Error;
};

// Invalid configuration value or unknown key.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed input file; message carries file name and line number.
class ParseError : public Error {
public:
    using Error::Error;
};

// Not enough data to run an estimator.
class DataError : public Error {
public:
    using Error::Error;
};

} // namespace fbc
