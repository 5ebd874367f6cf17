#pragma once

#include <stdexcept>
#include <string>

namespace chainlab {

// Exception hierarchy. The CLI maps each kind onto a distinct exit status.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input or a violated precondition (exit 2).
class ValidationError : public Error {
public:
    using Error::Error;
};

// A size guard tripped (point-count, enumeration or packing limits; exit 3).
class CapacityError : public Error {
public:
    using Error::Error;
};

// A quantity is mathematically undefined for the given input, e.g. a ratio
// with zero denominator (exit 4).
class UndefinedError : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ValidationError(message);
}

}  // namespace chainlab
