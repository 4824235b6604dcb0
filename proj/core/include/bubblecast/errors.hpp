#pragma once

#include <stdexcept>
#include <string>

namespace bubblecast {

/// Malformed or inconsistent input data (files, shapes, ranges).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numeric failure: singular regression, non-finite values, divergence.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes that do not agree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace bubblecast
