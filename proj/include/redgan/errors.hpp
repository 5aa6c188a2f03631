#pragma once

#include <stdexcept>
#include <string>

namespace redgan {

/// Base for every error raised by the library. The CLI maps subclasses to
/// process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced by a computation, or a divergent training run.
class NumericError : public Error {
public:
    using Error::Error;
};

class GraphError : public Error {
public:
    using Error::Error;
};

/// Argument outside the operation's domain (bad class id, malformed mask, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Corrupt or truncated file, unknown magic, wrong dtype.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Configuration problem; the message names the offending key.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace redgan
