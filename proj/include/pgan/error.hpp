#pragma once

#include <stdexcept>
#include <string>

namespace pgan {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible for the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An operation produced NaN or Inf.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Misuse of the differentiation machinery (non-scalar loss, missing grads, ...).
class AutogradError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& msg, int line = 0, std::string key = {})
        : Error(msg), line_(line), key_(std::move(key)) {}

    int line() const noexcept { return line_; }
    const std::string& key() const noexcept { return key_; }

private:
    int line_;
    std::string key_;
};

}  // namespace pgan
