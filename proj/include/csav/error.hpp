#pragma once

#include <stdexcept>
#include <string>

namespace csav {

// Base for every error the library reports. The CLI maps ConfigError and
// FormatError to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid WorldConfig / PerceptionConfig / schedule values.
class ConfigError : public Error {
public:
    using Error::Error;
};

// More vehicles than the road network can hold.
class CapacityError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Malformed or wrong-version recordings, model files and reports.
class FormatError : public Error {
public:
    using Error::Error;
};

class UnknownIdError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

} // namespace csav
