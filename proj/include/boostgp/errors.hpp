#pragma once

#include <stdexcept>
#include <string>

namespace boostgp {

/// Failure to open, read, or write a file. CLI exit code 2.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or inconsistent input content (parse failures, duplicate
/// identifiers, mismatched dimensions, bad configuration). CLI exit code 3.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical breakdown (failed factorization, non-finite values where finite
/// ones are required). CLI exit code 4.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace boostgp
