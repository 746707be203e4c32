#pragma once

#include <stdexcept>
#include <string>

namespace calib {

// Bad physics parameters or arguments outside a documented domain.
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input files: CSV schema, config JSON, unreadable paths.
class SchemaError : public std::runtime_error {
  public:
    explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure on well-formed input (singular fit, degenerate counts).
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace calib
