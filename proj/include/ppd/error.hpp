#pragma once

#include <stdexcept>
#include <string>

namespace ppd {

/// Thrown when an operation receives arguments outside its domain.
class InvalidInput : public std::invalid_argument {
public:
    explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Thrown when a byte buffer or file cannot be decoded.
class DecodeError : public std::runtime_error {
public:
    explicit DecodeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ppd
