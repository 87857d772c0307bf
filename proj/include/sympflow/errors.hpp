#pragma once

#include <stdexcept>
#include <string>

namespace sympflow {

// Bad dimensions, empty batches, out-of-range indices and other caller mistakes.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A computation produced NaN or Inf.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Requested operation is not available for the given system.
class UnsupportedError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace sympflow
