#pragma once

#include <stdexcept>
#include <string>

namespace sal {

// Operand shapes disagree (matrix dims, trace vs network, mapping vs trace).
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN or infinity where a finite value is required.
class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Argument outside the domain of a closed-form calculator.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Invalid run or architecture configuration. `path()` names the offending
// field in dotted form ("train.patience") when one applies.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string path, const std::string& what)
        : std::invalid_argument(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
    explicit ConfigError(const std::string& what) : ConfigError(std::string{}, what) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// Malformed input file. The message carries the byte offset.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace sal
