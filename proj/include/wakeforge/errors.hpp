#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wakeforge {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration, table, or command-line input.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A physical formula was evaluated outside its domain of validity.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Degenerate input to a combination rule (e.g. zero hub speed).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

class LayoutError : public Error {
public:
    using Error::Error;
};

class SamplingError : public Error {
public:
    using Error::Error;
};

/// Network shape mismatch or malformed model.
class ModelError : public Error {
public:
    using Error::Error;
};

/// Bad magic, version, truncation or shape in a binary file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Numeric failure; the CLI maps these to exit code 2.
class NumericError : public Error {
public:
    using Error::Error;
};

class SolverInstabilityError : public NumericError {
public:
    SolverInstabilityError(const std::string& what, double x_station)
        : NumericError(what), x_station_(x_station) {}
    double x_station() const noexcept { return x_station_; }

private:
    double x_station_;
};

class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, int epoch) : NumericError(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

}  // namespace wakeforge
