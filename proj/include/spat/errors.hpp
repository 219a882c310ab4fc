#pragma once

#include <stdexcept>
#include <string>

namespace spat {

// Tensor/image dimensions that do not fit together.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid or inconsistent configuration values.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Missing or malformed data on disk or in memory.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An internal invariant did not hold. Maps to CLI exit code 3.
class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace spat
