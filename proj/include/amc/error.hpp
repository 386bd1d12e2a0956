#pragma once

#include <stdexcept>
#include <string>

namespace amc {

/// Invalid configuration, hyperparameters or shapes. CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed or inconsistent data on disk. CLI exit code 3.
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// NaN/Inf detected or an ill-posed numeric problem. CLI exit code 4.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Downlink channel without full row rank; zero-forcing is undefined.
class SingularChannelError : public NumericError {
public:
  explicit SingularChannelError(const std::string& what) : NumericError(what) {}
};

}  // namespace amc
